#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "carvq/bitpack.hpp"
#include "carvq/half.hpp"
#include "carvq/kmeans.hpp"
#include "carvq/tensor_io.hpp"

namespace carvq {

class Adaptor;

struct GrvqParams {
  int levels = 3;              // L, residual iterations
  int kappa = 4;               // bits per index, K = 2^kappa
  std::size_t subvector_dim = 8;   // h
  std::size_t group_size = 1024;   // g, sub-vectors per group
  std::uint64_t seed = 0;
  double kmeans_tol = 1e-4;
  std::size_t kmeans_max_iter = 100;
  // Precision the codebooks are stored at; unset means "the input matrix's".
  std::optional<Precision> codebook_precision;

  std::size_t centroids() const noexcept { return std::size_t{1} << kappa; }

  friend bool operator==(const GrvqParams&, const GrvqParams&) = default;
};

/// Throws InvalidSpec / BadSubvectorDim / TooFewPoints when `params` cannot
/// compress a rows x cols matrix.
void validate(const GrvqParams& params, std::size_t rows, std::size_t cols);

/// The (n*V/h) x h view of a row-major matrix: view row i*(n/h)+q is
/// sub-vector q of token i.
RowsView reshape_to_subvectors(const EmbeddingMatrix& matrix, std::size_t subvector_dim);

struct GroupSpan {
  std::size_t first = 0;
  std::size_t count = 0;
  friend bool operator==(const GroupSpan&, const GroupSpan&) = default;
};

/// Consecutive blocks of `group_size` rows; the last may be shorter.
std::vector<GroupSpan> partition_groups(std::size_t rows, std::size_t group_size);

struct GroupCode {
  std::vector<Codebook> codebooks;   // one per level
  std::vector<std::uint8_t> indices; // rows x levels, row-major
  std::size_t rows = 0;

  std::size_t levels() const noexcept { return codebooks.size(); }
  std::uint8_t index(std::size_t row, std::size_t level) const noexcept { return indices[row * levels() + level]; }

  friend bool operator==(const GroupCode&, const GroupCode&) = default;
};

/// L-level residual VQ of one block. `group_index` feeds the per-level seeds.
/// Codebooks are rounded to `storage` before residuals are taken.
GroupCode rvq_encode_group(RowsView block, const GrvqParams& params, std::size_t group_index,
                           Precision storage = Precision::F32);

/// Row i = sum over levels of the selected centroids (level order).
std::vector<float> rvq_decode_group(const GroupCode& code);

class GrvqModel {
 public:
  GrvqModel() = default;
  GrvqModel(GrvqParams params, std::size_t rows, std::size_t cols, std::vector<GroupCode> groups);

  const GrvqParams& params() const noexcept { return params_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  Precision precision() const noexcept { return *params_.codebook_precision; }
  std::span<const GroupCode> groups() const noexcept { return groups_; }
  std::size_t subvector_count() const noexcept { return rows_ * cols_ / params_.subvector_dim; }

  /// All index streams, group-major, then row, then level.
  PackedIndexStream packed_indices() const;

  /// Rebuild a model from the flat codebook table (group, level, centroid, dim)
  /// and the packed index stream.
  static GrvqModel from_parts(GrvqParams params, std::size_t rows, std::size_t cols,
                              std::span<const float> codebook_table, const PackedIndexStream& indices);
  /// Flat codebook table in the order `from_parts` expects.
  std::vector<float> codebook_table() const;

  friend bool operator==(const GrvqModel&, const GrvqModel&) = default;

 private:
  GrvqParams params_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<GroupCode> groups_;
};

/// reshape -> partition -> per-group RVQ. Output does not depend on `threads`.
GrvqModel grvq_compress(const EmbeddingMatrix& matrix, const GrvqParams& params, unsigned threads = 1);

/// Base reconstruction, plus the adaptor correction for every token when given.
EmbeddingMatrix grvq_reconstruct(const GrvqModel& model, const Adaptor* adaptor = nullptr);

/// One token's row: gathered centroid sums, plus adaptor_forward when given.
/// Bitwise equal to the matching row of grvq_reconstruct.
std::vector<float> embed_lookup(const GrvqModel& model, const Adaptor* adaptor, std::size_t token);

}  // namespace carvq
