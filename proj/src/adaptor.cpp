#include "carvq/adaptor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include <Eigen/Core>

#include "carvq/error.hpp"
#include "carvq/rng.hpp"

namespace carvq {

namespace {

using MatrixF = Eigen::MatrixXf;  // column-major: one column per sample
using VectorF = Eigen::VectorXf;
using RowMajorMap = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstVectorMap = Eigen::Map<const VectorF>;
using VectorMap = Eigen::Map<VectorF>;

// Gradient work is done in slices of this many samples and summed in slice
// order, so memory stays bounded and the reduction order is fixed.
constexpr std::size_t kSliceSamples = 2048;

ConstRowMajorMap weight(std::span<const float> p, const DenseLayer& l) {
  return ConstRowMajorMap(p.data() + l.weight, static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in));
}
ConstVectorMap vec(std::span<const float> p, std::size_t offset, std::size_t n) {
  return ConstVectorMap(p.data() + offset, static_cast<Eigen::Index>(n));
}

// ReLU then per-column layer norm, in place on `z`. Saves what backward needs.
struct NormCache {
  MatrixF pre;       // dense output before ReLU
  MatrixF xhat;      // normalized activations
  VectorF inv_std;   // per column
};

void relu_norm(MatrixF& z, const ConstVectorMap& gain, const ConstVectorMap& shift, NormCache* cache) {
  if (cache) cache->pre = z;
  z = z.cwiseMax(0.0f);
  const auto rows = static_cast<float>(z.rows());
  if (cache) cache->inv_std.resize(z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    auto col = z.col(c);
    const float mean = col.sum() / rows;
    col.array() -= mean;
    const float var = col.squaredNorm() / rows;
    const float inv = 1.0f / std::sqrt(var + kLayerNormEps);
    col *= inv;
    if (cache) cache->inv_std(c) = inv;
  }
  if (cache) cache->xhat = z;
  z = (z.array().colwise() * gain.array()).colwise() + shift.array();
}

MatrixF gather_inputs(const Adaptor& a, std::span<const std::uint32_t> tokens) {
  const std::size_t m = a.config().width;
  MatrixF x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(tokens.size()));
  for (std::size_t b = 0; b < tokens.size(); ++b) {
    x.col(static_cast<Eigen::Index>(b)) = vec(a.parameters(), tokens[b] * m, m);
  }
  return x;
}

void check_batch(const Adaptor& a, std::span<const std::uint32_t> tokens, std::span<const float> targets) {
  if (targets.size() != tokens.size() * a.config().out_dim) {
    throw Error(ErrorKind::ShapeMismatch, "targets must be batch x n (" + std::to_string(tokens.size()) + " x " +
                                              std::to_string(a.config().out_dim) + ")");
  }
  for (std::uint32_t t : tokens) {
    if (t >= a.config().vocab) throw Error(ErrorKind::TokenOutOfRange, "token " + std::to_string(t));
  }
}

struct SliceResult {
  double abs_sum = 0.0;
};

// Forward + backward over one slice; gradients (already scaled by 1/total)
// are added into `grad`.
SliceResult backward_slice(const Adaptor& a, std::span<const std::uint32_t> tokens, std::span<const float> targets,
                           float scale, std::span<float> grad) {
  const auto p = a.parameters();
  const auto layers = a.hidden_layers();
  const DenseLayer& last = a.output_layer();
  const auto batch = static_cast<Eigen::Index>(tokens.size());

  std::vector<MatrixF> inputs;  // activation feeding each dense layer
  std::vector<NormCache> caches(layers.size());
  inputs.push_back(gather_inputs(a, tokens));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const DenseLayer& l = layers[i];
    MatrixF z = weight(p, l) * inputs.back();
    z.colwise() += vec(p, l.bias, l.out);
    relu_norm(z, vec(p, l.gain, l.out), vec(p, l.shift, l.out), &caches[i]);
    inputs.push_back(std::move(z));
  }
  MatrixF y = weight(p, last) * inputs.back();
  y.colwise() += vec(p, last.bias, last.out);

  const Eigen::Map<const MatrixF> target(targets.data(), static_cast<Eigen::Index>(last.out), batch);
  MatrixF dy = y - target;
  SliceResult result;
  result.abs_sum = dy.cast<double>().cwiseAbs().sum();
  dy = dy.unaryExpr([scale](float e) { return e > 0.0f ? scale : (e < 0.0f ? -scale : 0.0f); });

  RowMajorMap(grad.data() + last.weight, static_cast<Eigen::Index>(last.out), static_cast<Eigen::Index>(last.in))
      .noalias() += dy * inputs.back().transpose();
  VectorMap(grad.data() + last.bias, static_cast<Eigen::Index>(last.out)) += dy.rowwise().sum();
  MatrixF da = weight(p, last).transpose() * dy;

  for (std::size_t i = layers.size(); i-- > 0;) {
    const DenseLayer& l = layers[i];
    const NormCache& c = caches[i];
    const auto out = static_cast<Eigen::Index>(l.out);

    VectorMap(grad.data() + l.gain, out) += (da.array() * c.xhat.array()).rowwise().sum().matrix();
    VectorMap(grad.data() + l.shift, out) += da.rowwise().sum();

    // Layer-norm backward, column by column.
    MatrixF dxhat = da.array().colwise() * vec(p, l.gain, l.out).array();
    const float inv_rows = 1.0f / static_cast<float>(out);
    MatrixF dz(out, batch);
    for (Eigen::Index col = 0; col < batch; ++col) {
      const auto g = dxhat.col(col);
      const auto xh = c.xhat.col(col);
      const float mean_g = g.sum() * inv_rows;
      const float mean_gx = g.dot(xh) * inv_rows;
      dz.col(col) = c.inv_std(col) * (g.array() - mean_g - xh.array() * mean_gx).matrix();
    }
    dz = (c.pre.array() > 0.0f).select(dz, 0.0f);

    RowMajorMap(grad.data() + l.weight, out, static_cast<Eigen::Index>(l.in)).noalias() +=
        dz * inputs[i].transpose();
    VectorMap(grad.data() + l.bias, out) += dz.rowwise().sum();
    da = weight(p, l).transpose() * dz;
  }

  const std::size_t m = a.config().width;
  for (Eigen::Index b = 0; b < batch; ++b) {
    VectorMap(grad.data() + tokens[static_cast<std::size_t>(b)] * m, static_cast<Eigen::Index>(m)) += da.col(b);
  }
  return result;
}

}  // namespace

void validate(const AdaptorConfig& config) {
  if (config.vocab == 0 || config.out_dim == 0) throw Error(ErrorKind::InvalidSpec, "adaptor V and n must be positive");
  if (config.width == 0) throw Error(ErrorKind::InvalidSpec, "corrective width m must be >= 1");
  if (config.hidden.empty()) throw Error(ErrorKind::InvalidSpec, "adaptor needs at least one hidden layer");
  for (std::size_t d : config.hidden) {
    if (d == 0) throw Error(ErrorKind::InvalidSpec, "hidden dims must be positive");
  }
  if (!(config.lr > 0.0) || !std::isfinite(config.lr)) throw Error(ErrorKind::InvalidSpec, "lr must be > 0");
  if (config.vocab > 0xFFFFFFFFull) throw Error(ErrorKind::InvalidSpec, "vocabulary too large");
}

std::size_t adaptor_parameter_count(const AdaptorConfig& config, bool include_layer_norm) {
  std::size_t total = config.width * config.vocab;
  std::size_t in = config.width;
  for (std::size_t out : config.hidden) {
    total += in * out + out;
    if (include_layer_norm) total += 2 * out;
    in = out;
  }
  return total + in * config.out_dim + config.out_dim;
}

Adaptor::Adaptor(AdaptorConfig config) : config_(std::move(config)) {
  validate(config_);
  std::size_t offset = config_.vocab * config_.width;
  std::size_t in = config_.width;
  for (std::size_t out : config_.hidden) {
    DenseLayer l{in, out, offset, offset + in * out, 0, 0};
    l.gain = l.bias + out;
    l.shift = l.gain + out;
    offset = l.shift + out;
    hidden_.push_back(l);
    in = out;
  }
  output_ = DenseLayer{in, config_.out_dim, offset, offset + in * config_.out_dim, 0, 0};
  offset = output_.bias + config_.out_dim;
  params_.assign(offset, 0.0f);
}

void Adaptor::forward(std::size_t token, std::span<float> out) const {
  if (token >= config_.vocab) {
    throw Error(ErrorKind::TokenOutOfRange, "token " + std::to_string(token) + " >= V=" + std::to_string(config_.vocab));
  }
  if (out.size() != config_.out_dim) throw Error(ErrorKind::ShapeMismatch, "output span must have n entries");
  const std::span<const float> p = params_;
  MatrixF act = vec(p, token * config_.width, config_.width);
  for (const DenseLayer& l : hidden_) {
    MatrixF z = weight(p, l) * act;
    z.colwise() += vec(p, l.bias, l.out);
    relu_norm(z, vec(p, l.gain, l.out), vec(p, l.shift, l.out), nullptr);
    act = std::move(z);
  }
  VectorMap result(out.data(), static_cast<Eigen::Index>(out.size()));
  result.noalias() = weight(p, output_) * act.col(0);
  result += vec(p, output_.bias, output_.out);
}

std::vector<float> Adaptor::forward(std::size_t token) const {
  std::vector<float> out(config_.out_dim);
  forward(token, out);
  return out;
}

Adaptor init_adaptor(const AdaptorConfig& config) {
  Adaptor a(config);
  auto p = a.parameters();
  std::mt19937_64 rng(derive_seed(config.seed, {0xADA7}));

  std::normal_distribution<float> table(0.0f, 0.02f);
  for (std::size_t i = 0; i < a.table_size(); ++i) p[i] = table(rng);

  auto fill_weights = [&](const DenseLayer& l, double variance) {
    std::normal_distribution<float> w(0.0f, static_cast<float>(std::sqrt(variance)));
    for (std::size_t i = 0; i < l.in * l.out; ++i) p[l.weight + i] = w(rng);
  };
  for (const DenseLayer& l : a.hidden_layers()) {
    fill_weights(l, 2.0 / static_cast<double>(l.in));
    std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(l.gain), l.out, 1.0f);
  }
  fill_weights(a.output_layer(), 1.0 / static_cast<double>(a.output_layer().in));
  return a;
}

Gradients adaptor_backward(const Adaptor& adaptor, std::span<const std::uint32_t> tokens,
                           std::span<const float> targets) {
  check_batch(adaptor, tokens, targets);
  Gradients g;
  g.values.assign(adaptor.parameter_count(), 0.0f);
  if (tokens.empty()) return g;

  const std::size_t n = adaptor.config().out_dim;
  const double total = static_cast<double>(tokens.size() * n);
  const auto scale = static_cast<float>(1.0 / total);
  double abs_sum = 0.0;
  for (std::size_t first = 0; first < tokens.size(); first += kSliceSamples) {
    const std::size_t count = std::min(kSliceSamples, tokens.size() - first);
    abs_sum += backward_slice(adaptor, tokens.subspan(first, count), targets.subspan(first * n, count * n), scale,
                              g.values)
                   .abs_sum;
  }
  g.loss = abs_sum / total;
  return g;
}

double adaptor_loss(const Adaptor& adaptor, std::span<const std::uint32_t> tokens, std::span<const float> targets) {
  check_batch(adaptor, tokens, targets);
  if (tokens.empty()) return 0.0;
  const std::size_t n = adaptor.config().out_dim;
  std::vector<float> out(n);
  double abs_sum = 0.0;
  for (std::size_t b = 0; b < tokens.size(); ++b) {
    adaptor.forward(tokens[b], out);
    for (std::size_t j = 0; j < n; ++j) abs_sum += std::abs(static_cast<double>(out[j]) - targets[b * n + j]);
  }
  return abs_sum / static_cast<double>(tokens.size() * n);
}

void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state, const AdamOptions& options) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "Adam parameter, gradient and state sizes differ");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const auto b1 = static_cast<float>(options.beta1);
  const auto b2 = static_cast<float>(options.beta2);
  const auto bc1 = static_cast<float>(1.0 - std::pow(options.beta1, t));
  const auto bc2 = static_cast<float>(1.0 - std::pow(options.beta2, t));
  const auto lr = static_cast<float>(options.lr);
  const auto eps = static_cast<float>(options.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0f - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0f - b2) * g * g;
    const float m_hat = state.m[i] / bc1;
    const float v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

TrainResult train_adaptor(const EmbeddingMatrix& original, std::span<const float> base_reconstruction,
                          const AdaptorConfig& config, const ProgressCallback& progress) {
  if (config.vocab != original.rows() || config.out_dim != original.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "adaptor config shape does not match the matrix");
  }
  if (base_reconstruction.size() != original.size()) {
    throw Error(ErrorKind::ShapeMismatch, "base reconstruction must be V x n");
  }
  const auto start = std::chrono::steady_clock::now();
  const std::size_t vocab = original.rows();
  const std::size_t n = original.cols();

  std::vector<float> residual(original.size());
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = original.data()[i] - base_reconstruction[i];

  std::vector<std::uint32_t> order(vocab);
  std::iota(order.begin(), order.end(), 0u);
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, {0x5EED}));
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  std::vector<float> targets(residual.size());
  for (std::size_t b = 0; b < vocab; ++b) {
    std::copy_n(residual.begin() + static_cast<std::ptrdiff_t>(order[b] * n), n,
                targets.begin() + static_cast<std::ptrdiff_t>(b * n));
  }

  TrainResult result{init_adaptor(config), {}};
  Adaptor& adaptor = result.adaptor;
  AdamState state(adaptor.parameter_count());
  const AdamOptions adam{config.lr};
  const std::size_t batch = config.batch_size == 0 ? vocab : std::min(config.batch_size, vocab);

  result.report.initial_loss = adaptor_loss(adaptor, order, targets);
  result.report.loss_curve.reserve(config.iterations);
  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    double abs_sum = 0.0;
    for (std::size_t first = 0; first < vocab; first += batch) {
      const std::size_t count = std::min(batch, vocab - first);
      const std::span<const std::uint32_t> tokens(order.data() + first, count);
      Gradients g = adaptor_backward(adaptor, tokens, std::span<const float>(targets).subspan(first * n, count * n));
      abs_sum += g.loss * static_cast<double>(count * n);
      adam_step(adaptor.parameters(), g.values, state, adam);
    }
    const double loss = abs_sum / static_cast<double>(vocab * n);
    if (!std::isfinite(loss)) {
      throw Error(ErrorKind::DivergedLoss, "loss became non-finite at iteration " + std::to_string(iter));
    }
    result.report.loss_curve.push_back(loss);
    if (progress) {
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      progress({iter, loss, elapsed.count()});
    }
  }

  result.report.final_loss = adaptor_loss(adaptor, order, targets);
  if (!std::isfinite(result.report.final_loss)) throw Error(ErrorKind::DivergedLoss, "final loss is non-finite");
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  result.report.wall_time = elapsed.count();
  return result;
}

}  // namespace carvq
