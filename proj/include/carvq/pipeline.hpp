#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "carvq/accounting.hpp"
#include "carvq/adaptor.hpp"
#include "carvq/artifact.hpp"

namespace carvq {

struct CompressOptions {
  SchemeKind base = SchemeKind::Rvq;
  GrvqParams grvq;
  SqParams sq;
  // V and n are taken from the matrix; the rest of the config is used as given.
  std::optional<AdaptorConfig> adaptor;
  std::optional<Precision> precision;  // unset: the matrix's own
  std::uint64_t seed = 0;              // recorded in the artifact
  unsigned threads = 1;
  ProgressCallback progress;
};

struct CompressOutcome {
  CompressedArtifact artifact;
  std::optional<TrainReport> training;
};

/// Base quantization, optional adaptor training on its residual, and rounding
/// of every stored value to the storage precision.
CompressOutcome compress(const EmbeddingMatrix& matrix, const CompressOptions& options);

struct QualityMetrics {
  double mse = 0.0;
  double mean_l1 = 0.0;  // mean |x - x_hat| over all coefficients
  double max_abs = 0.0;
  struct Row {
    std::size_t token = 0;
    double mean_l1 = 0.0;
  };
  std::vector<Row> worst_rows;  // highest per-token mean L1 first
};

QualityMetrics evaluate(const EmbeddingMatrix& original, const EmbeddingMatrix& reconstruction,
                        std::size_t worst_count = 5);

nlohmann::json to_json(const QualityMetrics& metrics);

/// Parsed entry of a comparison list: "intN", "rvq-L", "carvq-L" or "ca+intN".
struct NamedScheme {
  std::string name;
  SchemeKind base = SchemeKind::Rvq;
  int levels_or_bits = 0;
  bool with_adaptor = false;
};

NamedScheme parse_scheme_name(const std::string& name);

struct CompareRow {
  std::string scheme;
  Rational bpp;         // nominal
  Rational bpp_actual;  // from serialized section sizes
  double mse = 0.0;
  double mean_l1 = 0.0;
};

/// Compress `matrix` under each named scheme, sharing the remaining settings
/// from `shared`, and return rows sorted by nominal bpp (ties by name).
std::vector<CompareRow> compare_schemes(const EmbeddingMatrix& matrix, const std::vector<std::string>& names,
                                        const CompressOptions& shared);

nlohmann::json to_json(const std::vector<CompareRow>& rows);
std::string to_table(const std::vector<CompareRow>& rows);

}  // namespace carvq
