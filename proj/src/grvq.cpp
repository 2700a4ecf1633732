#include "carvq/grvq.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "carvq/adaptor.hpp"
#include "carvq/error.hpp"
#include "carvq/rng.hpp"

namespace carvq {

void validate(const GrvqParams& params, std::size_t rows, std::size_t cols) {
  if (params.levels < 1) throw Error(ErrorKind::InvalidSpec, "L must be >= 1");
  if (params.kappa < 1 || params.kappa > 8) throw Error(ErrorKind::InvalidSpec, "kappa must be in [1, 8]");
  if (params.subvector_dim == 0) throw Error(ErrorKind::BadSubvectorDim, "h must be >= 1");
  if (params.group_size == 0) throw Error(ErrorKind::InvalidSpec, "g must be >= 1");
  if (!(params.kmeans_tol >= 0.0)) throw Error(ErrorKind::InvalidSpec, "kmeans tolerance must be >= 0");
  if (params.centroids() > params.group_size) {
    throw Error(ErrorKind::InvalidSpec, "K = 2^kappa = " + std::to_string(params.centroids()) +
                                            " exceeds group size g = " + std::to_string(params.group_size));
  }
  if (cols % params.subvector_dim != 0) {
    throw Error(ErrorKind::BadSubvectorDim,
                "h = " + std::to_string(params.subvector_dim) + " does not divide n = " + std::to_string(cols));
  }
  const std::size_t sub = rows * cols / params.subvector_dim;
  const std::size_t tail = sub % params.group_size;
  const std::size_t smallest = sub < params.group_size ? sub : (tail == 0 ? params.group_size : tail);
  if (smallest < params.centroids()) {
    throw Error(ErrorKind::TooFewPoints, "a group would hold " + std::to_string(smallest) +
                                             " sub-vectors, fewer than K = " + std::to_string(params.centroids()));
  }
}

RowsView reshape_to_subvectors(const EmbeddingMatrix& matrix, std::size_t subvector_dim) {
  if (subvector_dim == 0 || matrix.cols() % subvector_dim != 0) {
    throw Error(ErrorKind::BadSubvectorDim, "h = " + std::to_string(subvector_dim) +
                                                " does not divide n = " + std::to_string(matrix.cols()));
  }
  // Row-major storage already is the (nV/h) x h view.
  return RowsView{matrix.data(), subvector_dim};
}

std::vector<GroupSpan> partition_groups(std::size_t rows, std::size_t group_size) {
  std::vector<GroupSpan> out;
  if (group_size == 0) throw Error(ErrorKind::InvalidSpec, "g must be >= 1");
  for (std::size_t first = 0; first < rows; first += group_size) {
    out.push_back({first, std::min(group_size, rows - first)});
  }
  return out;
}

GroupCode rvq_encode_group(RowsView block, const GrvqParams& params, std::size_t group_index, Precision storage) {
  const std::size_t rows = block.count();
  const std::size_t dim = block.dim;
  const auto levels = static_cast<std::size_t>(params.levels);
  if (rows < params.centroids()) {
    throw Error(ErrorKind::TooFewPoints, "group " + std::to_string(group_index) + " has " + std::to_string(rows) +
                                             " rows, fewer than K = " + std::to_string(params.centroids()));
  }

  GroupCode code;
  code.rows = rows;
  code.indices.resize(rows * levels);
  std::vector<float> residual(block.values.begin(), block.values.end());

  for (std::size_t level = 0; level < levels; ++level) {
    const RowsView current{residual, dim};
    const KMeansOptions options{params.kmeans_tol, params.kmeans_max_iter,
                                derive_seed(params.seed, {group_index, level})};
    Codebook book = kmeans(current, params.centroids(), options);
    round_to(storage, std::span<float>(book.centroids));

    const auto assigned = assign_nearest(current, book);
    for (std::size_t i = 0; i < rows; ++i) {
      code.indices[i * levels + level] = assigned[i];
      const auto c = book.centroid(assigned[i]);
      for (std::size_t j = 0; j < dim; ++j) residual[i * dim + j] -= c[j];
    }
    code.codebooks.push_back(std::move(book));
  }
  return code;
}

namespace {

// Sum of the selected centroids for one row, accumulated in level order.
// Both decode paths go through here so their results agree bitwise.
void decode_row(const GroupCode& code, std::size_t row, std::span<float> out) {
  std::fill(out.begin(), out.end(), 0.0f);
  for (std::size_t level = 0; level < code.levels(); ++level) {
    const Codebook& book = code.codebooks[level];
    const std::size_t k = code.index(row, level);
    if (k >= book.size()) {
      throw Error(ErrorKind::IndexOutOfRange, "index " + std::to_string(k) + " >= K = " + std::to_string(book.size()));
    }
    const auto c = book.centroid(k);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += c[j];
  }
}

}  // namespace

std::vector<float> rvq_decode_group(const GroupCode& code) {
  if (code.codebooks.empty()) return {};
  const std::size_t dim = code.codebooks.front().dim;
  if (code.indices.size() != code.rows * code.levels()) {
    throw Error(ErrorKind::IndexOutOfRange, "index array does not hold rows x levels entries");
  }
  std::vector<float> out(code.rows * dim);
  for (std::size_t i = 0; i < code.rows; ++i) decode_row(code, i, std::span<float>(out).subspan(i * dim, dim));
  return out;
}

GrvqModel::GrvqModel(GrvqParams params, std::size_t rows, std::size_t cols, std::vector<GroupCode> groups)
    : params_(std::move(params)), rows_(rows), cols_(cols), groups_(std::move(groups)) {
  if (!params_.codebook_precision) params_.codebook_precision = Precision::F32;
  validate(params_, rows_, cols_);
  const auto spans = partition_groups(subvector_count(), params_.group_size);
  if (spans.size() != groups_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "expected " + std::to_string(spans.size()) + " groups, got " +
                                              std::to_string(groups_.size()));
  }
  for (std::size_t gi = 0; gi < spans.size(); ++gi) {
    const GroupCode& g = groups_[gi];
    if (g.rows != spans[gi].count || g.levels() != static_cast<std::size_t>(params_.levels) ||
        g.indices.size() != g.rows * g.levels()) {
      throw Error(ErrorKind::ShapeMismatch, "group " + std::to_string(gi) + " has the wrong shape");
    }
    for (const Codebook& b : g.codebooks) {
      if (b.dim != params_.subvector_dim || b.size() != params_.centroids()) {
        throw Error(ErrorKind::ShapeMismatch, "group " + std::to_string(gi) + " codebook has the wrong shape");
      }
    }
    for (std::uint8_t k : g.indices) {
      if (k >= params_.centroids()) throw Error(ErrorKind::IndexOutOfRange, "index " + std::to_string(k));
    }
  }
}

PackedIndexStream GrvqModel::packed_indices() const {
  std::vector<std::uint8_t> all;
  all.reserve(subvector_count() * static_cast<std::size_t>(params_.levels));
  for (const GroupCode& g : groups_) all.insert(all.end(), g.indices.begin(), g.indices.end());
  return pack_indices(all, params_.kappa);
}

std::vector<float> GrvqModel::codebook_table() const {
  std::vector<float> table;
  table.reserve(groups_.size() * static_cast<std::size_t>(params_.levels) * params_.centroids() *
                params_.subvector_dim);
  for (const GroupCode& g : groups_) {
    for (const Codebook& b : g.codebooks) table.insert(table.end(), b.centroids.begin(), b.centroids.end());
  }
  return table;
}

GrvqModel GrvqModel::from_parts(GrvqParams params, std::size_t rows, std::size_t cols,
                                std::span<const float> codebook_table, const PackedIndexStream& indices) {
  if (!params.codebook_precision) params.codebook_precision = Precision::F32;
  validate(params, rows, cols);
  const auto levels = static_cast<std::size_t>(params.levels);
  const std::size_t book_len = params.centroids() * params.subvector_dim;
  const auto spans = partition_groups(rows * cols / params.subvector_dim, params.group_size);

  if (codebook_table.size() != spans.size() * levels * book_len) {
    throw Error(ErrorKind::SectionLengthMismatch, "codebook table has the wrong length");
  }
  if (indices.kappa != params.kappa || indices.count != rows * cols / params.subvector_dim * levels) {
    throw Error(ErrorKind::SectionLengthMismatch, "index stream has the wrong length");
  }
  const auto flat = unpack_indices(indices);

  std::vector<GroupCode> groups(spans.size());
  std::size_t at = 0;
  for (std::size_t gi = 0; gi < spans.size(); ++gi) {
    GroupCode& g = groups[gi];
    g.rows = spans[gi].count;
    for (std::size_t level = 0; level < levels; ++level) {
      const auto src = codebook_table.subspan((gi * levels + level) * book_len, book_len);
      g.codebooks.push_back(Codebook{params.subvector_dim, std::vector<float>(src.begin(), src.end())});
    }
    g.indices.assign(flat.begin() + static_cast<std::ptrdiff_t>(at),
                     flat.begin() + static_cast<std::ptrdiff_t>(at + g.rows * levels));
    at += g.rows * levels;
  }
  return GrvqModel(std::move(params), rows, cols, std::move(groups));
}

GrvqModel grvq_compress(const EmbeddingMatrix& matrix, const GrvqParams& params, unsigned threads) {
  GrvqParams resolved = params;
  if (!resolved.codebook_precision) resolved.codebook_precision = matrix.precision();
  validate(resolved, matrix.rows(), matrix.cols());

  const RowsView view = reshape_to_subvectors(matrix, resolved.subvector_dim);
  const auto spans = partition_groups(view.count(), resolved.group_size);
  std::vector<GroupCode> groups(spans.size());

  // Each worker claims group indices; results land in their own slot and the
  // per-group seed is positional, so scheduling never changes the output.
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t gi = next++; gi < spans.size(); gi = next++) {
      try {
        groups[gi] = rvq_encode_group(view.slice(spans[gi].first, spans[gi].count), resolved, gi,
                                      *resolved.codebook_precision);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = spans.size();
      }
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(spans.size())));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  return GrvqModel(std::move(resolved), matrix.rows(), matrix.cols(), std::move(groups));
}

EmbeddingMatrix grvq_reconstruct(const GrvqModel& model, const Adaptor* adaptor) {
  const std::size_t dim = model.params().subvector_dim;
  std::vector<float> out(model.rows() * model.cols());
  std::size_t row = 0;
  for (const GroupCode& g : model.groups()) {
    for (std::size_t i = 0; i < g.rows; ++i, ++row) decode_row(g, i, std::span<float>(out).subspan(row * dim, dim));
  }
  if (adaptor != nullptr) {
    if (adaptor->config().vocab != model.rows() || adaptor->config().out_dim != model.cols()) {
      throw Error(ErrorKind::ShapeMismatch, "adaptor shape does not match the model");
    }
    std::vector<float> correction(model.cols());
    for (std::size_t t = 0; t < model.rows(); ++t) {
      adaptor->forward(t, correction);
      float* dst = out.data() + t * model.cols();
      for (std::size_t j = 0; j < model.cols(); ++j) dst[j] += correction[j];
    }
  }
  return EmbeddingMatrix(model.rows(), model.cols(), std::move(out), DType::F32);
}

std::vector<float> embed_lookup(const GrvqModel& model, const Adaptor* adaptor, std::size_t token) {
  if (token >= model.rows()) {
    throw Error(ErrorKind::TokenOutOfRange, "token " + std::to_string(token) + " >= V=" + std::to_string(model.rows()));
  }
  const std::size_t dim = model.params().subvector_dim;
  const std::size_t g = model.params().group_size;
  const std::size_t per_token = model.cols() / dim;
  std::vector<float> out(model.cols());
  for (std::size_t q = 0; q < per_token; ++q) {
    const std::size_t view_row = token * per_token + q;
    decode_row(model.groups()[view_row / g], view_row % g, std::span<float>(out).subspan(q * dim, dim));
  }
  if (adaptor != nullptr) {
    if (adaptor->config().out_dim != model.cols()) throw Error(ErrorKind::ShapeMismatch, "adaptor n mismatch");
    const auto correction = adaptor->forward(token);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += correction[j];
  }
  return out;
}

}  // namespace carvq
