#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "carvq/bitpack.hpp"
#include "carvq/half.hpp"
#include "carvq/tensor_io.hpp"

namespace carvq {

enum class Granularity { PerRow, PerMatrix };

std::string_view to_string(Granularity g) noexcept;
Granularity granularity_from_string(std::string_view name);  // "per-row" | "per-matrix"

struct SqParams {
  int bits = 4;
  Granularity granularity = Granularity::PerRow;
  friend bool operator==(const SqParams&, const SqParams&) = default;
};

/// Asymmetric min-max quantization: x ~ code * scale + zero_point per block.
/// A constant block stores scale 0 and dequantizes to its zero point.
struct SqModel {
  SqParams params;
  std::size_t rows = 0;
  std::size_t cols = 0;
  Precision precision = Precision::F32;  // storage precision of scales / zero points
  std::vector<float> scales;       // one per block
  std::vector<float> zero_points;  // one per block
  PackedIndexStream codes;

  std::size_t block_count() const noexcept { return scales.size(); }
  std::size_t block_of(std::size_t row) const noexcept {
    return params.granularity == Granularity::PerRow ? row : 0;
  }

  friend bool operator==(const SqModel&, const SqModel&) = default;
};

/// `precision` unset means the matrix's own. At binary16 the zero point is
/// rounded down and the scale up, so the code grid still spans [min, max].
SqModel sq_quantize(const EmbeddingMatrix& matrix, int bits, Granularity granularity = Granularity::PerRow,
                    std::optional<Precision> precision = std::nullopt);

EmbeddingMatrix sq_dequantize(const SqModel& model);
std::vector<float> sq_dequantize_row(const SqModel& model, std::size_t row);

/// Validates shapes and code ranges of a model assembled from stored parts.
void validate(const SqModel& model);

}  // namespace carvq
