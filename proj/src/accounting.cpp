#include "carvq/accounting.hpp"

#include <iomanip>
#include <numeric>
#include <sstream>

#include "carvq/error.hpp"

namespace carvq {

using u128 = unsigned __int128;

namespace {

std::uint64_t narrow_u64(u128 v) {
  if (v > static_cast<u128>(UINT64_MAX)) throw Error(ErrorKind::InvalidSpec, "bit count overflows 64 bits");
  return static_cast<std::uint64_t>(v);
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

Rational::Rational(std::uint64_t num, std::uint64_t den) {
  if (den == 0) throw Error(ErrorKind::InvalidSpec, "zero denominator");
  const std::uint64_t g = std::gcd(num, den);
  num_ = num / (g == 0 ? 1 : g);
  den_ = den / (g == 0 ? 1 : g);
}

Rational operator+(const Rational& a, const Rational& b) {
  const u128 num = static_cast<u128>(a.num_) * b.den_ + static_cast<u128>(b.num_) * a.den_;
  const u128 den = static_cast<u128>(a.den_) * b.den_;
  u128 x = num;
  u128 y = den;
  while (y != 0) {
    const u128 t = x % y;
    x = y;
    y = t;
  }
  const u128 g = x == 0 ? 1 : x;
  return Rational(narrow_u64(num / g), narrow_u64(den / g));
}

std::string Rational::to_fixed(int digits) const {
  u128 scale = 1;
  for (int i = 0; i < digits; ++i) scale *= 10;
  const u128 scaled = (static_cast<u128>(num_) * scale * 2 + den_) / (static_cast<u128>(den_) * 2);
  const auto whole = static_cast<std::uint64_t>(scaled / scale);
  auto frac = static_cast<std::uint64_t>(scaled % scale);
  std::string out = std::to_string(whole);
  if (digits > 0) {
    std::string f = std::to_string(frac);
    out += "." + std::string(static_cast<std::size_t>(digits) - f.size(), '0') + f;
  }
  return out;
}

Rational bpp_rvq(int levels, std::size_t subvector_dim, int kappa, std::size_t group_size, int p) {
  if (levels < 1 || subvector_dim == 0 || kappa < 1 || group_size == 0 || p <= 0) {
    throw Error(ErrorKind::InvalidSpec, "bpp_rvq arguments must be positive");
  }
  const auto L = static_cast<u128>(levels);
  const u128 codebook_bits = L * subvector_dim * (u128{1} << kappa) * static_cast<u128>(p);
  const u128 index_bits = static_cast<u128>(group_size) * L * static_cast<u128>(kappa);
  return Rational(narrow_u64(codebook_bits + index_bits), narrow_u64(static_cast<u128>(group_size) * subvector_dim));
}

Rational bpp_rvq(const GrvqParams& params, int p) {
  return bpp_rvq(params.levels, params.subvector_dim, params.kappa, params.group_size, p);
}

Rational bpp_ca(const AdaptorConfig& config, int p, bool include_layer_norm) {
  validate(config);
  const u128 bits = static_cast<u128>(adaptor_parameter_count(config, include_layer_norm)) * static_cast<u128>(p);
  return Rational(narrow_u64(bits), narrow_u64(static_cast<u128>(config.vocab) * config.out_dim));
}

Rational bpp_total(const GrvqParams& params, const AdaptorConfig& config, int p, bool include_layer_norm) {
  return bpp_rvq(params, p) + bpp_ca(config, p, include_layer_norm);
}

std::string scheme_label(const SchemeSpec& scheme) {
  if (scheme.base == SchemeKind::Rvq) return "carvq";
  return scheme.adaptor ? "carvq+scalar-base" : "scalar";
}

SectionSizes section_sizes(std::size_t rows, std::size_t cols, const SchemeSpec& scheme, int p) {
  const std::size_t width = static_cast<std::size_t>(p) / 8;
  SectionSizes s;
  if (scheme.base == SchemeKind::Rvq) {
    const GrvqParams& gp = scheme.grvq;
    const std::size_t sub = rows * cols / gp.subvector_dim;
    const std::size_t groups = ceil_div(sub, gp.group_size);
    const auto levels = static_cast<std::size_t>(gp.levels);
    s.codebooks = groups * levels * gp.centroids() * gp.subvector_dim * width;
    s.indices = PackedIndexStream::byte_length(sub * levels, gp.kappa);
  } else {
    const std::size_t blocks = scheme.sq.granularity == Granularity::PerRow ? rows : 1;
    s.scales = blocks * width;
    s.zero_points = blocks * width;
    s.codes = PackedIndexStream::byte_length(rows * cols, scheme.sq.bits);
  }
  if (scheme.adaptor) s.adaptor = adaptor_parameter_count(*scheme.adaptor) * width;
  return s;
}

FlopsReport flops_report(const AdaptorConfig& config, bool include_layer_norm) {
  validate(config);
  FlopsReport r;
  std::uint64_t in = config.width;
  for (std::size_t out : config.hidden) {
    r.macs_per_token += in * out;
    in = out;
  }
  r.macs_per_token += in * config.out_dim;
  r.flops_per_token = 2 * r.macs_per_token;
  r.mlp_parameters = adaptor_parameter_count(config, include_layer_norm) - config.width * config.vocab;
  r.mlp_param_bytes = r.mlp_parameters * 2;
  r.table_bytes = static_cast<std::uint64_t>(config.width) * config.vocab * 2;
  return r;
}

AccountingReport memory_report(std::size_t rows, std::size_t cols, const SchemeSpec& scheme, int p) {
  if (rows == 0 || cols == 0) throw Error(ErrorKind::InvalidSpec, "shape must be positive");
  if (p != 16 && p != 32) throw Error(ErrorKind::InvalidSpec, "p must be 16 or 32");
  AccountingReport r;
  r.rows = rows;
  r.cols = cols;
  r.p = p;
  r.scheme = scheme_label(scheme);

  if (scheme.base == SchemeKind::Rvq) {
    validate(scheme.grvq, rows, cols);
    r.b_rvq = bpp_rvq(scheme.grvq, p);
    r.b_total = *r.b_rvq;
  } else {
    r.b_sq = Rational(static_cast<std::uint64_t>(scheme.sq.bits), 1);
    r.b_total = *r.b_sq;
  }
  if (scheme.adaptor) {
    if (scheme.adaptor->vocab != rows || scheme.adaptor->out_dim != cols) {
      throw Error(ErrorKind::ShapeMismatch, "adaptor config does not match the matrix shape");
    }
    r.b_ca = bpp_ca(*scheme.adaptor, p);
    r.b_total = r.b_total + *r.b_ca;
    r.ca = flops_report(*scheme.adaptor);
  }

  r.sections = section_sizes(rows, cols, scheme, p);
  r.embedding_bytes_original = static_cast<std::uint64_t>(rows) * cols * static_cast<std::uint64_t>(p) / 8;
  r.embedding_bytes_compressed = r.sections.total();
  r.memory_gain = static_cast<std::int64_t>(r.embedding_bytes_original) -
                  static_cast<std::int64_t>(r.embedding_bytes_compressed);
  r.b_actual = Rational(r.embedding_bytes_compressed * 8, static_cast<std::uint64_t>(rows) * cols);
  return r;
}

double embedding_ratio(double emb_params, double other_params, double emb_bits, double other_bits) {
  if (!(emb_params > 0) || !(other_params >= 0) || !(emb_bits > 0) || !(other_bits >= 0)) {
    throw Error(ErrorKind::InvalidSpec, "embedding_ratio needs positive counts");
  }
  const double emb = emb_params * emb_bits;
  return emb / (emb + other_params * other_bits) * 100.0;
}

namespace {

nlohmann::json rational_json(const Rational& r) {
  return {{"value", r.value()}, {"rounded", r.to_fixed(3)}, {"num", r.num()}, {"den", r.den()}};
}

std::string gb(std::int64_t bytes) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << static_cast<double>(bytes) / 1e9;
  return os.str();
}

}  // namespace

nlohmann::json to_json(const AccountingReport& r) {
  nlohmann::json j;
  j["v"] = r.rows;
  j["n"] = r.cols;
  j["p"] = r.p;
  j["scheme"] = r.scheme;
  j["b_rvq"] = r.b_rvq ? rational_json(*r.b_rvq) : nlohmann::json(nullptr);
  j["b_sq"] = r.b_sq ? rational_json(*r.b_sq) : nlohmann::json(nullptr);
  j["b_ca"] = r.b_ca ? rational_json(*r.b_ca) : nlohmann::json(nullptr);
  j["b_total"] = rational_json(r.b_total);
  j["b_actual"] = rational_json(r.b_actual);
  j["embedding_bytes_original"] = r.embedding_bytes_original;
  j["embedding_bytes_compressed"] = r.embedding_bytes_compressed;
  j["memory_gain"] = r.memory_gain;
  j["sections"] = {{"codebooks", r.sections.codebooks}, {"indices", r.sections.indices},
                   {"scales", r.sections.scales},       {"zero_points", r.sections.zero_points},
                   {"codes", r.sections.codes},         {"adaptor", r.sections.adaptor}};
  if (r.ca) {
    j["ca"] = {{"macs_per_token", r.ca->macs_per_token},
               {"flops_per_token", r.ca->flops_per_token},
               {"mlp_parameters", r.ca->mlp_parameters},
               {"mlp_param_bytes", r.ca->mlp_param_bytes},
               {"table_bytes", r.ca->table_bytes}};
  } else {
    j["ca"] = nullptr;
  }
  return j;
}

std::string to_table(const AccountingReport& r) {
  std::ostringstream os;
  auto line = [&](std::string_view key, const std::string& value) {
    os << std::left << std::setw(28) << key << value << '\n';
  };
  line("shape (V x n)", std::to_string(r.rows) + " x " + std::to_string(r.cols));
  line("precision p (bits)", std::to_string(r.p));
  line("scheme", r.scheme);
  if (r.b_rvq) line("B_rvq (bits/param)", r.b_rvq->to_fixed(3));
  if (r.b_sq) line("B_sq nominal (bits/param)", r.b_sq->to_fixed(3));
  if (r.b_ca) line("B_ca (bits/param)", r.b_ca->to_fixed(3));
  line("B_total (bits/param)", r.b_total.to_fixed(3));
  line("B_actual (bits/param)", r.b_actual.to_fixed(3));
  line("original (bytes)", std::to_string(r.embedding_bytes_original));
  line("compressed (bytes)", std::to_string(r.embedding_bytes_compressed));
  line("memory gain (bytes)", std::to_string(r.memory_gain));
  line("memory gain (GB, 1e9)", gb(r.memory_gain));
  if (r.ca) {
    line("CA MACs/token", std::to_string(r.ca->macs_per_token));
    line("CA FLOPs/token (2xMAC)", std::to_string(r.ca->flops_per_token));
    line("CA MLP bytes (f16)", std::to_string(r.ca->mlp_param_bytes));
  }
  return os.str();
}

}  // namespace carvq
