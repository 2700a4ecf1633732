#include "carvq/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "byte_io.hpp"
#include "carvq/error.hpp"
#include "carvq/rng.hpp"

namespace carvq {

using nlohmann::json;

std::string_view to_string(DType dtype) noexcept { return dtype == DType::F16 ? "f16" : "f32"; }

DType dtype_from_string(std::string_view name) {
  if (name == "f16") return DType::F16;
  if (name == "f32") return DType::F32;
  throw Error(ErrorKind::InvalidSpec, "unknown dtype \"" + std::string(name) + "\" (expected f16|f32)");
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t cols, std::vector<float> data, DType dtype)
    : rows_(rows), cols_(cols), dtype_(dtype), data_(std::move(data)) {
  if (rows == 0 || cols == 0) {
    throw Error(ErrorKind::ShapeMismatch, "matrix dimensions must be positive");
  }
  if (data_.size() != rows * cols) {
    throw Error(ErrorKind::ShapeMismatch, "declared " + std::to_string(rows) + "x" + std::to_string(cols) +
                                              " but got " + std::to_string(data_.size()) + " values");
  }
  const auto bad = std::find_if(data_.begin(), data_.end(), [](float v) { return !std::isfinite(v); });
  if (bad != data_.end()) {
    throw Error(ErrorKind::NonFiniteData,
                "non-finite coefficient at flat index " + std::to_string(bad - data_.begin()));
  }
}

EmbeddingMatrix EmbeddingMatrix::zeros(std::size_t rows, std::size_t cols, DType dtype) {
  return EmbeddingMatrix(rows, cols, std::vector<float>(rows * cols, 0.0f), dtype);
}

std::vector<std::uint8_t> encode_matrix(const EmbeddingMatrix& matrix, DType dtype) {
  const json header = {{"v", matrix.rows()}, {"n", matrix.cols()}, {"dtype", to_string(dtype)}};
  const std::string text = header.dump();
  if (dtype == DType::F16) {
    for (std::size_t i = 0; i < matrix.size(); ++i) {
      if (!std::isfinite(round_to(Precision::F16, matrix.data()[i]))) {
        throw Error(ErrorKind::NonFiniteData,
                    "coefficient at flat index " + std::to_string(i) + " overflows binary16");
      }
    }
  }

  std::vector<std::uint8_t> out;
  out.reserve(kEmbMagic.size() + 4 + text.size() + matrix.size() * bytes_per_value(precision_of(dtype)));
  detail::put_bytes(out, kEmbMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  detail::put_bytes(out, text);
  detail::put_values(out, matrix.data(), precision_of(dtype));
  return out;
}

EmbeddingMatrix decode_matrix(std::span<const std::uint8_t> bytes) {
  auto [text, payload_at] = detail::split_header(bytes, kEmbMagic, ErrorKind::MalformedHeader);

  std::size_t rows = 0;
  std::size_t cols = 0;
  DType dtype = DType::F32;
  try {
    const json header = json::parse(text);
    const auto& v = header.at("v");
    const auto& n = header.at("n");
    if (!v.is_number_unsigned() || !n.is_number_unsigned()) {
      throw Error(ErrorKind::MalformedHeader, "\"v\" and \"n\" must be positive integers");
    }
    rows = v.get<std::size_t>();
    cols = n.get<std::size_t>();
    dtype = dtype_from_string(header.at("dtype").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedHeader, e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::MalformedHeader) throw;
    throw Error(ErrorKind::MalformedHeader, e.detail());
  }
  if (rows == 0 || cols == 0) throw Error(ErrorKind::MalformedHeader, "\"v\" and \"n\" must be positive");

  const std::size_t width = bytes_per_value(precision_of(dtype));
  const std::size_t payload = bytes.size() - payload_at;
  if (payload % width != 0 || payload / width != rows * cols) {
    throw Error(ErrorKind::ShapeMismatch, "header declares " + std::to_string(rows) + "x" + std::to_string(cols) +
                                              " but payload holds " + std::to_string(payload / width) +
                                              " values");
  }
  auto values = detail::get_values(bytes.subspan(payload_at), rows * cols, precision_of(dtype));
  return EmbeddingMatrix(rows, cols, std::move(values), dtype);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::IoFailure, "read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoFailure, "write failed: " + path.string());
}

EmbeddingMatrix load_matrix(const std::filesystem::path& path) { return decode_matrix(read_file(path)); }

void save_matrix(const EmbeddingMatrix& matrix, const std::filesystem::path& path, DType dtype) {
  write_file(path, encode_matrix(matrix, dtype));
}

EmbeddingMatrix gen_synthetic(std::size_t rows, std::size_t cols, std::size_t clusters, double noise_sigma,
                              std::uint64_t seed) {
  if (rows == 0 || cols == 0) throw Error(ErrorKind::InvalidSpec, "V and n must be positive");
  if (clusters == 0 || clusters > rows) throw Error(ErrorKind::InvalidSpec, "need 1 <= clusters <= V");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw Error(ErrorKind::InvalidSpec, "noise_sigma must be finite and >= 0");
  }

  std::mt19937_64 center_rng(derive_seed(seed, {0}));
  std::normal_distribution<float> unit(0.0f, 1.0f);
  std::vector<float> centers(clusters * cols);
  for (float& c : centers) c = unit(center_rng);

  std::vector<std::size_t> assignment(rows);
  for (std::size_t i = 0; i < rows; ++i) assignment[i] = i % clusters;
  std::mt19937_64 assign_rng(derive_seed(seed, {1}));
  std::shuffle(assignment.begin(), assignment.end(), assign_rng);

  std::mt19937_64 noise_rng(derive_seed(seed, {2}));
  std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
  std::vector<float> data(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const float* center = centers.data() + assignment[i] * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      const double eps = noise_sigma > 0.0 ? noise(noise_rng) : 0.0;
      data[i * cols + j] = static_cast<float>(center[j] + eps);
    }
  }
  return EmbeddingMatrix(rows, cols, std::move(data), DType::F32);
}

}  // namespace carvq
