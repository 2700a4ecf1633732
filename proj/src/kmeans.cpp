#include "carvq/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "carvq/error.hpp"

namespace carvq {

namespace {

// Portable uniform draws; std:: distributions are implementation-defined.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

Codebook kmeanspp_init(RowsView points, std::size_t k, std::mt19937_64& rng) {
  const std::size_t count = points.count();
  Codebook book{points.dim, {}};
  book.centroids.reserve(k * points.dim);

  auto add = [&](std::size_t i) {
    const auto p = points.row(i);
    book.centroids.insert(book.centroids.end(), p.begin(), p.end());
  };

  add(uniform_index(rng, count));
  std::vector<double> d2(count);
  for (std::size_t i = 0; i < count; ++i) d2[i] = squared_distance(points.row(i), book.centroid(0));

  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : d2) total += d;

    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      pick = count;
      for (std::size_t i = 0; i < count; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) { pick = i; break; }
      }
      if (pick == count) {  // rounding pushed target past the last positive weight
        for (std::size_t i = count; i-- > 0;) {
          if (d2[i] > 0.0) { pick = i; break; }
        }
      }
    } else {
      pick = uniform_index(rng, count);  // fewer distinct points than k: duplicates are harmless
    }

    add(pick);
    const auto fresh = book.centroid(c);
    for (std::size_t i = 0; i < count; ++i) d2[i] = std::min(d2[i], squared_distance(points.row(i), fresh));
  }
  return book;
}

}  // namespace

double squared_distance(std::span<const float> a, std::span<const float> b) noexcept {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    s += d * d;
  }
  return s;
}

std::size_t nearest_centroid(std::span<const float> point, const Codebook& codebook) noexcept {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < codebook.size(); ++k) {
    const double d = squared_distance(point, codebook.centroid(k));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::vector<std::uint8_t> assign_nearest(RowsView points, const Codebook& codebook) {
  if (points.dim != codebook.dim) {
    throw Error(ErrorKind::DimMismatch, "points have dim " + std::to_string(points.dim) + ", codebook has dim " +
                                            std::to_string(codebook.dim));
  }
  if (codebook.size() == 0 || codebook.size() > 256) {
    throw Error(ErrorKind::InvalidSpec, "codebook size must be in [1, 256]");
  }
  std::vector<std::uint8_t> out(points.count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(nearest_centroid(points.row(i), codebook));
  }
  return out;
}

double inertia(RowsView points, const Codebook& codebook) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.count(); ++i) {
    total += squared_distance(points.row(i), codebook.centroid(nearest_centroid(points.row(i), codebook)));
  }
  return total;
}

Codebook kmeans(RowsView points, std::size_t k, const KMeansOptions& options) {
  const std::size_t count = points.count();
  const std::size_t dim = points.dim;
  if (k == 0) throw Error(ErrorKind::InvalidSpec, "k must be positive");
  if (count < k) {
    throw Error(ErrorKind::TooFewPoints,
                std::to_string(count) + " points cannot seed " + std::to_string(k) + " centroids");
  }

  std::mt19937_64 rng(options.seed);
  Codebook book = kmeanspp_init(points, k, rng);

  std::vector<std::size_t> assign(count);
  std::vector<double> dist(count);
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> sizes(k);

  for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
    for (std::size_t i = 0; i < count; ++i) {
      assign[i] = nearest_centroid(points.row(i), book);
      dist[i] = squared_distance(points.row(i), book.centroid(assign[i]));
    }

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
      const auto p = points.row(i);
      double* s = sums.data() + assign[i] * dim;
      for (std::size_t j = 0; j < dim; ++j) s[j] += p[j];
      ++sizes[assign[i]];
    }

    Codebook next{dim, std::vector<float>(k * dim)};
    for (std::size_t c = 0; c < k; ++c) {
      float* out = next.centroids.data() + c * dim;
      if (sizes[c] > 0) {
        for (std::size_t j = 0; j < dim; ++j) out[j] = static_cast<float>(sums[c * dim + j] / sizes[c]);
        continue;
      }
      // Empty cluster: take the worst-served point and stop it being picked twice.
      std::size_t far = 0;
      for (std::size_t i = 1; i < count; ++i) {
        if (dist[i] > dist[far]) far = i;
      }
      dist[far] = -1.0;
      const auto p = points.row(far);
      std::copy(p.begin(), p.end(), out);
    }

    double max_move = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      max_move = std::max(max_move, std::sqrt(squared_distance(book.centroid(c), next.centroid(c))));
    }
    book = std::move(next);
    if (max_move < options.tol) break;
  }
  return book;
}

}  // namespace carvq
