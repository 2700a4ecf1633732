#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "carvq/aligned.hpp"
#include "carvq/half.hpp"
#include "carvq/tensor_io.hpp"

namespace carvq {

struct AdaptorConfig {
  std::size_t vocab = 0;    // V
  std::size_t out_dim = 0;  // n
  std::size_t width = 16;   // m, the corrective width
  std::vector<std::size_t> hidden = {384, 512};
  std::uint64_t seed = 0;
  double lr = 1e-3;
  std::size_t iterations = 500;
  std::size_t batch_size = 0;  // 0 means one batch of all V tokens

  friend bool operator==(const AdaptorConfig&, const AdaptorConfig&) = default;
};

void validate(const AdaptorConfig& config);

/// Closed-form parameter count: m*V + sum(m_i*m_{i+1} + m_{i+1}) + m_last*n + n,
/// plus 2*m_{i+1} per hidden layer for the layer-norm gain/bias when requested.
std::size_t adaptor_parameter_count(const AdaptorConfig& config, bool include_layer_norm = true);

inline constexpr float kLayerNormEps = 1e-5f;

/// Offsets into the flat parameter buffer for one dense -> ReLU -> LayerNorm layer
/// (or the final dense layer, which has no activation and no norm).
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight = 0;  // out x in, row-major
  std::size_t bias = 0;
  std::size_t gain = 0;    // layer-norm scale; unused on the final layer
  std::size_t shift = 0;   // layer-norm bias; unused on the final layer
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Corrective adaptor: a learned V x m token table followed by an MLP
/// m -> hidden... -> n. All parameters live in one flat buffer laid out as
/// [table | W1 b1 g1 s1 | W2 b2 g2 s2 | ... | WL bL].
class Adaptor {
 public:
  Adaptor() = default;
  explicit Adaptor(AdaptorConfig config);  // all-zero parameters

  const AdaptorConfig& config() const noexcept { return config_; }
  std::span<float> parameters() noexcept { return params_; }
  std::span<const float> parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  std::span<const DenseLayer> hidden_layers() const noexcept { return hidden_; }
  const DenseLayer& output_layer() const noexcept { return output_; }
  std::size_t table_size() const noexcept { return config_.vocab * config_.width; }
  std::span<const float> table_row(std::size_t token) const noexcept {
    return {params_.data() + token * config_.width, config_.width};
  }

  /// out = WL . LN(ReLU(... LN(ReLU(W1 . table[token] + b1)) ...)) + bL
  void forward(std::size_t token, std::span<float> out) const;
  std::vector<float> forward(std::size_t token) const;

  /// Snap every parameter to what storage precision `p` holds.
  void round_parameters(Precision p) noexcept { round_to(p, std::span<float>(params_)); }

  friend bool operator==(const Adaptor&, const Adaptor&) = default;

 private:
  AdaptorConfig config_;
  std::vector<DenseLayer> hidden_;
  DenseLayer output_;
  AlignedFloats params_;
};

/// Seeded init: table ~ N(0, 0.02^2), hidden weights ~ N(0, 2/fan_in),
/// final weights ~ N(0, 1/fan_in), biases 0, layer-norm gain 1 / bias 0.
Adaptor init_adaptor(const AdaptorConfig& config);

inline std::vector<float> adaptor_forward(const Adaptor& adaptor, std::size_t token) {
  return adaptor.forward(token);
}

struct Gradients {
  double loss = 0.0;          // mean |out - target| over batch*n coefficients
  AlignedFloats values;  // same layout as Adaptor::parameters()
};

/// Gradient of the mean L1 loss for a batch of tokens against `targets`
/// (batch x n, row-major). The L1 subgradient at zero is taken as zero.
Gradients adaptor_backward(const Adaptor& adaptor, std::span<const std::uint32_t> tokens,
                           std::span<const float> targets);

/// Mean L1 loss only (no gradient).
double adaptor_loss(const Adaptor& adaptor, std::span<const std::uint32_t> tokens, std::span<const float> targets);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::int64_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0f), v(n, 0.0f) {}
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update; increments state.t first.
void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state,
               const AdamOptions& options = {});

struct TrainReport {
  std::vector<double> loss_curve;  // mean L1 per pass over the vocabulary
  double initial_loss = 0.0;       // before any update
  double final_loss = 0.0;         // after the last update
  double wall_time = 0.0;          // seconds
};

struct TrainProgress {
  std::size_t iter = 0;
  double loss = 0.0;
  double seconds = 0.0;
};

using ProgressCallback = std::function<void(const TrainProgress&)>;

struct TrainResult {
  Adaptor adaptor;
  TrainReport report;
};

/// Fit an adaptor to the residual `original - base`. One iteration is one
/// pass over all tokens in a fixed seeded order, in batches of batch_size.
TrainResult train_adaptor(const EmbeddingMatrix& original, std::span<const float> base_reconstruction,
                          const AdaptorConfig& config, const ProgressCallback& progress = {});

}  // namespace carvq
