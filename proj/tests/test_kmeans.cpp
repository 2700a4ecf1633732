#include <algorithm>
#include <random>

#include "carvq/kmeans.hpp"
#include "support.hpp"

using namespace carvq;

namespace {

std::size_t scan_nearest(std::span<const float> p, const Codebook& book) {
  std::size_t best = 0;
  double best_d = 0;
  for (std::size_t k = 0; k < book.size(); ++k) {
    double d = 0;
    for (std::size_t j = 0; j < book.dim; ++j) {
      const double t = static_cast<double>(p[j]) - book.centroid(k)[j];
      d += t * t;
    }
    if (k == 0 || d < best_d) { best = k; best_d = d; }
  }
  return best;
}

}  // namespace

TEST(KMeans, RepeatedDistinctVectorsRecovered) {
  const std::vector<std::vector<float>> proto = {{0, 0}, {1, 0}, {0, 5}, {-3, 2}};
  std::vector<float> values;
  for (int rep = 0; rep < 6; ++rep)
    for (const auto& v : proto) values.insert(values.end(), v.begin(), v.end());
  const RowsView pts{values, 2};
  const Codebook book = kmeans(pts, 4, {1e-4, 100, 3});

  std::vector<std::vector<float>> got;
  for (std::size_t k = 0; k < 4; ++k) got.emplace_back(book.centroid(k).begin(), book.centroid(k).end());
  auto want = proto;
  std::sort(got.begin(), got.end());
  std::sort(want.begin(), want.end());
  EXPECT_EQ(got, want);
  EXPECT_EQ(inertia(pts, book), 0.0);
}

TEST(KMeans, SingleCentroidIsMean) {
  const auto values = test::normal_values(50 * 3, 2);
  const Codebook book = kmeans({values, 3}, 1);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < 50; ++i) mean += values[i * 3 + j];
    EXPECT_NEAR(book.centroid(0)[j], mean / 50, 1e-6);
  }
}

TEST(KMeans, SeparatedGaussiansMatchGeneratingCenters) {
  const std::vector<std::vector<float>> centers = {{10, 0}, {-10, 0}, {0, 10}, {0, -10}};
  std::mt19937_64 rng(17);
  std::normal_distribution<float> noise(0.0f, 0.1f);
  std::vector<float> values;
  for (std::size_t i = 0; i < 64; ++i) {
    for (float c : centers[i % 4]) values.push_back(c + noise(rng));
  }
  const RowsView pts{values, 2};
  const Codebook oracle{2, {10, 0, -10, 0, 0, 10, 0, -10}};
  const double ref = inertia(pts, oracle);
  const double got = inertia(pts, kmeans(pts, 4, {1e-4, 100, 5}));
  EXPECT_LE(got, ref * 1.01);
}

TEST(KMeans, DeterministicForSeed) {
  const auto values = test::normal_values(200 * 4, 8);
  EXPECT_EQ(kmeans({values, 4}, 16, {1e-4, 100, 1}), kmeans({values, 4}, 16, {1e-4, 100, 1}));
}

TEST(KMeans, TooFewPoints) {
  const std::vector<float> values(3 * 2, 0.0f);
  EXPECT_CARVQ_ERROR(kmeans({values, 2}, 4), TooFewPoints);
}

TEST(KMeans, FewerDistinctPointsThanK) {
  std::vector<float> values(20 * 2, 1.0f);
  values[0] = 2.0f;
  const Codebook book = kmeans({values, 2}, 8);
  EXPECT_EQ(book.size(), 8u);
  EXPECT_EQ(inertia({values, 2}, book), 0.0);
}

TEST(AssignNearest, ExactHit) {
  const Codebook book{2, {0, 0, 1, 1, 2, 2, 3, 3, 4, 4}};
  const std::vector<float> p = {3, 3};
  EXPECT_EQ(assign_nearest({p, 2}, book), std::vector<std::uint8_t>{3});
}

TEST(AssignNearest, TieGoesToLowerIndex) {
  const Codebook book{1, {10, -1, 1}};
  const std::vector<float> p = {0};
  EXPECT_EQ(assign_nearest({p, 1}, book), std::vector<std::uint8_t>{1});
}

TEST(AssignNearest, MatchesExhaustiveScan) {
  const auto pts = test::normal_values(32 * 4, 21);
  const Codebook book{4, test::normal_values(8 * 4, 22)};
  const auto got = assign_nearest({pts, 4}, book);
  for (std::size_t i = 0; i < 32; ++i) {
    EXPECT_EQ(got[i], scan_nearest(std::span<const float>(pts).subspan(i * 4, 4), book));
  }
}

TEST(AssignNearest, DimMismatch) {
  const Codebook book{3, {0, 0, 0}};
  const std::vector<float> p = {0, 0};
  EXPECT_CARVQ_ERROR(assign_nearest({p, 2}, book), DimMismatch);
}
