#pragma once

#include <gtest/gtest.h>

#include <cstdint>
#include <random>
#include <vector>

#include "carvq/error.hpp"

// Passes when `stmt` throws carvq::Error of the given kind.
#define EXPECT_CARVQ_ERROR(stmt, expected_kind)                                          \
  do {                                                                                   \
    try {                                                                                \
      stmt;                                                                              \
      ADD_FAILURE() << #stmt " did not throw";                                           \
    } catch (const carvq::Error& e) {                                                    \
      EXPECT_EQ(e.kind(), carvq::ErrorKind::expected_kind) << e.what();                  \
    }                                                                                    \
  } while (0)

namespace carvq::test {

inline std::vector<float> normal_values(std::size_t count, std::uint64_t seed, double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<float> out(count);
  for (auto& v : out) v = static_cast<float>(dist(rng));
  return out;
}

}  // namespace carvq::test
