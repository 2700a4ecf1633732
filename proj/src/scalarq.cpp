#include "carvq/scalarq.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "carvq/error.hpp"

namespace carvq {

std::string_view to_string(Granularity g) noexcept { return g == Granularity::PerRow ? "per-row" : "per-matrix"; }

Granularity granularity_from_string(std::string_view name) {
  if (name == "per-row") return Granularity::PerRow;
  if (name == "per-matrix") return Granularity::PerMatrix;
  throw Error(ErrorKind::InvalidSpec, "unknown granularity \"" + std::string(name) + "\"");
}

namespace {

inline float dequantize_value(unsigned code, float scale, float zero_point) {
  return static_cast<float>(code) * scale + zero_point;
}

}  // namespace

SqModel sq_quantize(const EmbeddingMatrix& matrix, int bits, Granularity granularity,
                    std::optional<Precision> precision) {
  if (bits < 1 || bits > 8) throw Error(ErrorKind::InvalidSpec, "bits must be in [1, 8]");
  SqModel model;
  model.params = {bits, granularity};
  model.rows = matrix.rows();
  model.cols = matrix.cols();
  model.precision = precision.value_or(matrix.precision());

  const std::size_t blocks = granularity == Granularity::PerRow ? matrix.rows() : 1;
  const std::size_t block_len = matrix.size() / blocks;
  const unsigned top = (1u << bits) - 1;
  const bool narrow = model.precision == Precision::F16;

  std::vector<std::uint8_t> codes(matrix.size());
  model.scales.resize(blocks);
  model.zero_points.resize(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    const auto block = matrix.data().subspan(b * block_len, block_len);
    const auto [lo_it, hi_it] = std::minmax_element(block.begin(), block.end());
    const float lo = *lo_it;
    const float hi = *hi_it;

    float zero = narrow ? half_round_down(lo) : lo;
    float scale = 0.0f;
    if (hi > lo) {
      const double raw = (static_cast<double>(hi) - zero) / top;
      float up = static_cast<float>(raw);
      if (static_cast<double>(up) < raw) up = std::nextafter(up, INFINITY);
      scale = narrow ? half_round_up(up) : up;
    } else {
      zero = round_to(model.precision, lo);
    }
    model.scales[b] = scale;
    model.zero_points[b] = zero;

    for (std::size_t i = 0; i < block_len; ++i) {
      unsigned code = 0;
      if (scale > 0.0f) {
        const double q = std::nearbyint((static_cast<double>(block[i]) - zero) / scale);
        code = static_cast<unsigned>(std::clamp(q, 0.0, static_cast<double>(top)));
      }
      codes[b * block_len + i] = static_cast<std::uint8_t>(code);
    }
  }
  model.codes = pack_indices(codes, bits);
  return model;
}

std::vector<float> sq_dequantize_row(const SqModel& model, std::size_t row) {
  if (row >= model.rows) throw Error(ErrorKind::TokenOutOfRange, "row " + std::to_string(row));
  const std::size_t b = model.block_of(row);
  std::vector<float> out(model.cols);
  for (std::size_t j = 0; j < model.cols; ++j) {
    out[j] = dequantize_value(packed_at(model.codes, row * model.cols + j), model.scales[b], model.zero_points[b]);
  }
  return out;
}

EmbeddingMatrix sq_dequantize(const SqModel& model) {
  const auto codes = unpack_indices(model.codes);
  std::vector<float> out(model.rows * model.cols);
  for (std::size_t i = 0; i < model.rows; ++i) {
    const std::size_t b = model.block_of(i);
    for (std::size_t j = 0; j < model.cols; ++j) {
      const std::size_t at = i * model.cols + j;
      out[at] = dequantize_value(codes[at], model.scales[b], model.zero_points[b]);
    }
  }
  return EmbeddingMatrix(model.rows, model.cols, std::move(out), DType::F32);
}

void validate(const SqModel& model) {
  if (model.params.bits < 1 || model.params.bits > 8) throw Error(ErrorKind::InvalidSpec, "bits must be in [1, 8]");
  const std::size_t blocks = model.params.granularity == Granularity::PerRow ? model.rows : 1;
  if (model.rows == 0 || model.cols == 0 || model.scales.size() != blocks || model.zero_points.size() != blocks) {
    throw Error(ErrorKind::ShapeMismatch, "scalar model block tables do not match its shape");
  }
  if (model.codes.kappa != model.params.bits || model.codes.count != model.rows * model.cols) {
    throw Error(ErrorKind::ShapeMismatch, "scalar code stream does not match its shape");
  }
  for (std::size_t b = 0; b < blocks; ++b) {
    if (!std::isfinite(model.scales[b]) || !std::isfinite(model.zero_points[b]) || model.scales[b] < 0.0f) {
      throw Error(ErrorKind::NonFiniteData, "bad scale or zero point in block " + std::to_string(b));
    }
  }
}

}  // namespace carvq
