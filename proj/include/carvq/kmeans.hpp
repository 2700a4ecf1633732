#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace carvq {

/// Non-owning view of `count` contiguous rows of width `dim`.
struct RowsView {
  std::span<const float> values;
  std::size_t dim = 0;

  std::size_t count() const noexcept { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const float> row(std::size_t i) const noexcept { return values.subspan(i * dim, dim); }
  RowsView slice(std::size_t first, std::size_t n) const noexcept { return {values.subspan(first * dim, n * dim), dim}; }
};

/// K centroids of dimension `dim`, row-major.
struct Codebook {
  std::size_t dim = 0;
  std::vector<float> centroids;

  std::size_t size() const noexcept { return dim == 0 ? 0 : centroids.size() / dim; }
  std::span<const float> centroid(std::size_t k) const noexcept { return {centroids.data() + k * dim, dim}; }
  RowsView rows() const noexcept { return {centroids, dim}; }

  friend bool operator==(const Codebook&, const Codebook&) = default;
};

struct KMeansOptions {
  double tol = 1e-4;  // stop when the largest centroid move (L2) drops below this
  std::size_t max_iter = 100;
  std::uint64_t seed = 0;
};

/// Squared L2 distance, accumulated in double in coordinate order.
double squared_distance(std::span<const float> a, std::span<const float> b) noexcept;

/// Nearest centroid per point by squared L2; ties go to the lowest index.
std::vector<std::uint8_t> assign_nearest(RowsView points, const Codebook& codebook);
std::size_t nearest_centroid(std::span<const float> point, const Codebook& codebook) noexcept;

/// Lloyd's algorithm from a seeded k-means++ start. Empty clusters are
/// reseeded with the point farthest from its assigned centroid.
Codebook kmeans(RowsView points, std::size_t k, const KMeansOptions& options = {});

/// Sum of squared distances from each point to its nearest centroid.
double inertia(RowsView points, const Codebook& codebook);

}  // namespace carvq
