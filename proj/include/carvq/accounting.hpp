#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "carvq/adaptor.hpp"
#include "carvq/grvq.hpp"
#include "carvq/scalarq.hpp"

namespace carvq {

/// Non-negative exact fraction; all bitwidth formulas are ratios of integers.
class Rational {
 public:
  Rational() = default;
  Rational(std::uint64_t num, std::uint64_t den);

  std::uint64_t num() const noexcept { return num_; }
  std::uint64_t den() const noexcept { return den_; }
  double value() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

  /// Decimal rendering rounded half-up at `digits` places, computed exactly.
  std::string to_fixed(int digits) const;

  friend Rational operator+(const Rational& a, const Rational& b);
  friend bool operator==(const Rational&, const Rational&) = default;

 private:
  std::uint64_t num_ = 0;
  std::uint64_t den_ = 1;
};

/// (L*h*2^kappa*p + g*L*kappa) / (g*h): codebooks at p bits plus kappa-bit indices.
Rational bpp_rvq(int levels, std::size_t subvector_dim, int kappa, std::size_t group_size, int p);
Rational bpp_rvq(const GrvqParams& params, int p);

/// p * N_P / (n*V).
Rational bpp_ca(const AdaptorConfig& config, int p, bool include_layer_norm = true);

Rational bpp_total(const GrvqParams& params, const AdaptorConfig& config, int p, bool include_layer_norm = true);

enum class SchemeKind { Rvq, Scalar };

/// What an artifact holds: a base quantizer (group RVQ or scalar) and
/// optionally a corrective adaptor trained on its residual.
struct SchemeSpec {
  SchemeKind base = SchemeKind::Rvq;
  GrvqParams grvq;
  SqParams sq;
  std::optional<AdaptorConfig> adaptor;
};

/// Artifact scheme label: "carvq" | "scalar" | "carvq+scalar-base".
std::string scheme_label(const SchemeSpec& scheme);

/// Exact byte size of each payload section the artifact container writes.
struct SectionSizes {
  std::size_t codebooks = 0;
  std::size_t indices = 0;
  std::size_t scales = 0;
  std::size_t zero_points = 0;
  std::size_t codes = 0;
  std::size_t adaptor = 0;
  std::size_t total() const noexcept { return codebooks + indices + scales + zero_points + codes + adaptor; }
};

SectionSizes section_sizes(std::size_t rows, std::size_t cols, const SchemeSpec& scheme, int p);

struct FlopsReport {
  std::uint64_t macs_per_token = 0;   // sum m_i*m_{i+1} + m_last*n
  std::uint64_t flops_per_token = 0;  // 2 x MAC
  std::uint64_t mlp_parameters = 0;   // N_P - m*V
  std::uint64_t mlp_param_bytes = 0;  // at binary16
  std::uint64_t table_bytes = 0;      // m*V at binary16
};

FlopsReport flops_report(const AdaptorConfig& config, bool include_layer_norm = true);

struct AccountingReport {
  std::size_t rows = 0;
  std::size_t cols = 0;
  int p = 16;
  std::string scheme;
  std::optional<Rational> b_rvq;  // nominal group RVQ bits/param
  std::optional<Rational> b_sq;   // nominal scalar bits/param (bare N)
  std::optional<Rational> b_ca;
  Rational b_total;               // nominal: base + adaptor
  Rational b_actual;              // serialized payload bits / (V*n)
  std::uint64_t embedding_bytes_original = 0;
  std::uint64_t embedding_bytes_compressed = 0;
  std::int64_t memory_gain = 0;   // original - compressed
  SectionSizes sections;
  std::optional<FlopsReport> ca;
};

AccountingReport memory_report(std::size_t rows, std::size_t cols, const SchemeSpec& scheme, int p);

/// Share of model memory held by the embedding, in percent.
double embedding_ratio(double emb_params, double other_params, double emb_bits, double other_bits);

nlohmann::json to_json(const AccountingReport& report);
std::string to_table(const AccountingReport& report);

}  // namespace carvq
