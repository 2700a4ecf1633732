#include "carvq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "carvq/error.hpp"

namespace carvq {

CompressOutcome compress(const EmbeddingMatrix& matrix, const CompressOptions& options) {
  const Precision p = options.precision.value_or(matrix.precision());
  CompressOutcome out;
  CompressedArtifact& a = out.artifact;
  a.rows = matrix.rows();
  a.cols = matrix.cols();
  a.precision = p;
  a.seed = options.seed;

  if (options.base == SchemeKind::Rvq) {
    GrvqParams params = options.grvq;
    params.codebook_precision = p;
    a.grvq = grvq_compress(matrix, params, options.threads);
  } else {
    a.sq = sq_quantize(matrix, options.sq.bits, options.sq.granularity, p);
  }

  if (options.adaptor) {
    AdaptorConfig config = *options.adaptor;
    config.vocab = matrix.rows();
    config.out_dim = matrix.cols();
    const EmbeddingMatrix base = a.reconstruct_base();
    TrainResult trained = train_adaptor(matrix, base.data(), config, options.progress);
    trained.adaptor.round_parameters(p);
    a.adaptor = std::move(trained.adaptor);
    out.training = std::move(trained.report);
  }
  validate(a);
  return out;
}

QualityMetrics evaluate(const EmbeddingMatrix& original, const EmbeddingMatrix& reconstruction,
                        std::size_t worst_count) {
  if (original.rows() != reconstruction.rows() || original.cols() != reconstruction.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "reconstruction is " + std::to_string(reconstruction.rows()) + "x" +
                                              std::to_string(reconstruction.cols()) + ", matrix is " +
                                              std::to_string(original.rows()) + "x" + std::to_string(original.cols()));
  }
  QualityMetrics m;
  const std::size_t n = original.cols();
  std::vector<QualityMetrics::Row> rows(original.rows());
  double sq_sum = 0.0;
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < original.rows(); ++i) {
    double row_abs = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = static_cast<double>(original(i, j)) - reconstruction(i, j);
      sq_sum += d * d;
      row_abs += std::abs(d);
      m.max_abs = std::max(m.max_abs, std::abs(d));
    }
    abs_sum += row_abs;
    rows[i] = {i, row_abs / static_cast<double>(n)};
  }
  const auto total = static_cast<double>(original.size());
  m.mse = sq_sum / total;
  m.mean_l1 = abs_sum / total;

  const std::size_t keep = std::min(worst_count, rows.size());
  std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(keep), rows.end(),
                    [](const auto& x, const auto& y) {
                      return x.mean_l1 != y.mean_l1 ? x.mean_l1 > y.mean_l1 : x.token < y.token;
                    });
  m.worst_rows.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(keep));
  return m;
}

nlohmann::json to_json(const QualityMetrics& m) {
  nlohmann::json worst = nlohmann::json::array();
  for (const auto& r : m.worst_rows) worst.push_back({{"token", r.token}, {"mean_l1", r.mean_l1}});
  return {{"mse", m.mse}, {"mean_l1", m.mean_l1}, {"max_abs", m.max_abs}, {"worst_rows", worst}};
}

NamedScheme parse_scheme_name(const std::string& raw) {
  std::string name = raw;
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  auto number_after = [&](std::size_t prefix) {
    const std::string digits = name.substr(prefix);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit) || digits.size() > 2) {
      throw Error(ErrorKind::InvalidSpec, "bad scheme name \"" + raw + "\"");
    }
    return std::stoi(digits);
  };
  NamedScheme s;
  s.name = name;
  if (name.rfind("ca+int", 0) == 0) {
    s.base = SchemeKind::Scalar;
    s.levels_or_bits = number_after(6);
    s.with_adaptor = true;
  } else if (name.rfind("int", 0) == 0) {
    s.base = SchemeKind::Scalar;
    s.levels_or_bits = number_after(3);
  } else if (name.rfind("carvq-", 0) == 0) {
    s.levels_or_bits = number_after(6);
    s.with_adaptor = true;
  } else if (name.rfind("rvq-", 0) == 0) {
    s.levels_or_bits = number_after(4);
  } else {
    throw Error(ErrorKind::InvalidSpec, "unknown scheme \"" + raw + "\" (use intN, rvq-L, carvq-L, ca+intN)");
  }
  if (s.levels_or_bits < 1) throw Error(ErrorKind::InvalidSpec, "scheme \"" + raw + "\" needs a positive count");
  return s;
}

std::vector<CompareRow> compare_schemes(const EmbeddingMatrix& matrix, const std::vector<std::string>& names,
                                        const CompressOptions& shared) {
  std::vector<NamedScheme> parsed;
  for (const auto& n : names) parsed.push_back(parse_scheme_name(n));

  std::vector<CompareRow> rows;
  for (const NamedScheme& s : parsed) {
    CompressOptions opt = shared;
    opt.progress = {};
    opt.base = s.base;
    if (s.base == SchemeKind::Rvq) {
      opt.grvq.levels = s.levels_or_bits;
    } else {
      opt.sq.bits = s.levels_or_bits;
    }
    if (s.with_adaptor) {
      opt.adaptor = shared.adaptor.value_or(AdaptorConfig{});
    } else {
      opt.adaptor.reset();
    }
    const CompressOutcome outcome = compress(matrix, opt);
    const AccountingReport report =
        memory_report(matrix.rows(), matrix.cols(), outcome.artifact.scheme(), bits(outcome.artifact.precision));
    const QualityMetrics q = evaluate(matrix, outcome.artifact.reconstruct(), 0);
    rows.push_back({s.name, report.b_total, report.b_actual, q.mse, q.mean_l1});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const CompareRow& a, const CompareRow& b) {
    const double x = a.bpp.value();
    const double y = b.bpp.value();
    return x != y ? x < y : a.scheme < b.scheme;
  });
  return rows;
}

nlohmann::json to_json(const std::vector<CompareRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"scheme", r.scheme},
                   {"bpp", r.bpp.value()},
                   {"bpp_rounded", r.bpp.to_fixed(3)},
                   {"bpp_actual", r.bpp_actual.value()},
                   {"mse", r.mse},
                   {"mean_l1", r.mean_l1}});
  }
  return out;
}

std::string to_table(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "scheme" << std::right << std::setw(10) << "bpp" << std::setw(12)
     << "bpp_actual" << std::setw(24) << "mse" << std::setw(24) << "mean_l1" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(14) << r.scheme << std::right << std::setw(10) << r.bpp.to_fixed(3) << std::setw(12)
       << r.bpp_actual.to_fixed(3) << std::setw(24) << nlohmann::json(r.mse).dump() << std::setw(24)
       << nlohmann::json(r.mean_l1).dump() << '\n';
  }
  return os.str();
}

}  // namespace carvq
