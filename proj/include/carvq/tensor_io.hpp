#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "carvq/half.hpp"

namespace carvq {

enum class DType { F16, F32 };

std::string_view to_string(DType dtype) noexcept;
DType dtype_from_string(std::string_view name);  // "f16" | "f32", else InvalidSpec
inline Precision precision_of(DType d) noexcept { return d == DType::F16 ? Precision::F16 : Precision::F32; }
inline DType dtype_of(Precision p) noexcept { return p == Precision::F16 ? DType::F16 : DType::F32; }

/// Dense row-major V x n matrix of finite coefficients. Values are held at
/// binary32; `dtype` records the precision the values came from (or are
/// destined for), which is also the source precision p used in accounting.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t cols, std::vector<float> data, DType dtype = DType::F32);

  static EmbeddingMatrix zeros(std::size_t rows, std::size_t cols, DType dtype = DType::F32);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  DType dtype() const noexcept { return dtype_; }
  Precision precision() const noexcept { return precision_of(dtype_); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }
  float operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  /// Moves the coefficient buffer out, leaving the matrix empty.
  std::vector<float> release() && { rows_ = cols_ = 0; return std::move(data_); }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  DType dtype_ = DType::F32;
  std::vector<float> data_;
};

// ".emb" container: "CARVQEMB" | u32 LE header length | JSON header | payload.
inline constexpr std::string_view kEmbMagic = "CARVQEMB";

std::vector<std::uint8_t> encode_matrix(const EmbeddingMatrix& matrix, DType dtype);
EmbeddingMatrix decode_matrix(std::span<const std::uint8_t> bytes);

EmbeddingMatrix load_matrix(const std::filesystem::path& path);
void save_matrix(const EmbeddingMatrix& matrix, const std::filesystem::path& path, DType dtype);

/// Rows drawn around `clusters` N(0, 1) centers with isotropic N(0, noise_sigma^2)
/// noise. Every center is used at least once; pure function of its arguments.
EmbeddingMatrix gen_synthetic(std::size_t rows, std::size_t cols, std::size_t clusters,
                              double noise_sigma, std::uint64_t seed);

// Shared by the artifact container.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace carvq
