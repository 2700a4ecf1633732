// Standalone acceptance runner: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "carvq/accounting.hpp"
#include "carvq/adaptor.hpp"
#include "carvq/artifact.hpp"
#include "carvq/error.hpp"
#include "carvq/bitpack.hpp"
#include "carvq/grvq.hpp"
#include "carvq/kmeans.hpp"
#include "carvq/pipeline.hpp"
#include "carvq/scalarq.hpp"
#include "carvq/tensor_io.hpp"
#include "reference_adaptor.hpp"

using namespace carvq;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

AdaptorConfig shape(std::size_t vocab, std::size_t n) {
  AdaptorConfig c;
  c.vocab = vocab;
  c.out_dim = n;
  return c;
}

GrvqParams rvq(int levels, int kappa = 4) {
  GrvqParams p;
  p.levels = levels;
  p.kappa = kappa;
  return p;
}

bool same_bits(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

double sum_squared_error(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

Outcome golden_bpp() {
  struct Cell {
    const char* name;
    std::size_t vocab, n;
    int levels, kappa;
    double expected;
  };
  const Cell cells[] = {
      {"llama-3.2-3b L3", 128256, 3072, 3, 4, 2.405}, {"llama-3.2-3b L2", 128256, 3072, 2, 4, 1.655},
      {"llama-3.2-1b L3", 128256, 2048, 3, 4, 2.451}, {"llama-3.2-1b L2", 128256, 2048, 2, 4, 1.701},
      {"llama-3.1-8b L3", 128256, 4096, 3, 4, 2.383}, {"llama-3.1-8b L2", 128256, 4096, 2, 4, 1.633},
      {"qwen2.5-7b L3", 152064, 3584, 3, 4, 2.381},   {"qwen2.5-7b L2", 152064, 3584, 2, 4, 1.631},
      {"phi-4 L4", 100352, 5120, 4, 4, 3.138},        {"phi-4 L3", 100352, 5120, 3, 4, 2.388},
      {"phi-4 L2", 100352, 5120, 2, 4, 1.638},        {"llama-3.2-3b L2 k3", 128256, 3072, 2, 3, 1.155},
  };
  std::string bad;
  double worst = 0;
  for (const Cell& c : cells) {
    const double got = bpp_total(rvq(c.levels, c.kappa), shape(c.vocab, c.n), 16).value();
    worst = std::max(worst, std::abs(got - c.expected));
    if (std::abs(got - c.expected) > 0.001 + 1e-12) bad += fmt(" %s=%.4f(want %.3f)", c.name, got, c.expected);
  }
  const bool rvq_exact = bpp_rvq(rvq(4), 16) == Rational(3, 1) && bpp_rvq(rvq(3), 16) == Rational(9, 4) &&
                         bpp_rvq(rvq(2), 16) == Rational(3, 2);
  if (!rvq_exact) bad += " B_RVQ not {3, 9/4, 3/2}";
  const double ca = bpp_ca(shape(128256, 3072), 16).value();
  if (std::abs(ca - 0.155) > 0.001) bad += fmt(" B_CA=%.4f", ca);
  return {bad.empty(), fmt("%zu cells, max |delta| %.4f, B_CA %.4f", std::size(cells), worst, ca) + bad};
}

Outcome exact_degeneracy() {
  const EmbeddingMatrix m = gen_synthetic(256, 16, 16, 0.0, 11);
  GrvqParams p = rvq(1, 4);
  p.subvector_dim = 16;
  p.group_size = 256;
  p.codebook_precision = Precision::F32;
  const double mse = evaluate(m, grvq_reconstruct(grvq_compress(m, p))).mse;
  return {mse == 0.0, fmt("V=256 n=h=16, 16 distinct rows, K=16, L=1: mse %g", mse)};
}

Outcome residual_monotonicity() {
  const std::size_t groups = 24;
  std::size_t violations = 0;
  std::mt19937_64 rng(7);
  std::normal_distribution<float> unit(0.0f, 1.0f);
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<float> block(1024 * 8);
    for (float& v : block) v = unit(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (int levels = 1; levels <= 3; ++levels) {
      GrvqParams p = rvq(levels, 4);
      p.group_size = 1024;
      p.seed = g;
      const double err = sum_squared_error(rvq_decode_group(rvq_encode_group({block, 8}, p, g)), block);
      if (!(err < prev || (err == 0 && prev == 0))) ++violations;
      prev = err;
    }
  }
  return {violations == 0, fmt("%zu groups of 1024x8, L=1..3, %zu violations", groups, violations)};
}

Outcome nearest_oracle() {
  const std::size_t cases = 10000;
  std::size_t mismatches = 0;
  std::mt19937_64 rng(3);
  std::normal_distribution<float> unit(0.0f, 1.0f);
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t dim = 1 + rng() % 16;
    const std::size_t k = 1 + rng() % 256;
    Codebook book{dim, std::vector<float>(k * dim)};
    for (float& v : book.centroids) v = unit(rng);
    if (c % 4 == 0 && k > 1) {  // duplicated centroid exercises the tie rule
      const std::size_t a = rng() % k, b = rng() % k;
      std::copy_n(book.centroids.begin() + a * dim, dim, book.centroids.begin() + b * dim);
    }
    std::vector<float> point(dim);
    if (c % 8 == 0) {
      std::copy_n(book.centroids.begin() + (rng() % k) * dim, dim, point.begin());
    } else {
      for (float& v : point) v = unit(rng);
    }
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      double d = 0;
      for (std::size_t t = 0; t < dim; ++t) {
        const double e = static_cast<double>(point[t]) - book.centroids[j * dim + t];
        d += e * e;
      }
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    if (assign_nearest({point, dim}, book)[0] != best) ++mismatches;
  }
  return {mismatches == 0, fmt("%zu cases, %zu mismatches", cases, mismatches)};
}

Outcome pack_roundtrip() {
  std::mt19937_64 rng(5);
  std::size_t cases = 0, failures = 0;
  auto run = [&](int kappa, std::size_t count) {
    std::vector<std::uint8_t> idx(count);
    for (auto& v : idx) v = static_cast<std::uint8_t>(rng() & ((1u << kappa) - 1));
    const PackedIndexStream s = pack_indices(idx, kappa);
    ++cases;
    if (s.bytes.size() != (count * kappa + 7) / 8 || s.count != count || unpack_indices(s) != idx) ++failures;
  };
  for (int kappa = 1; kappa <= 8; ++kappa) {
    run(kappa, 0);
    run(kappa, 100000);
    for (int i = 0; i < 40; ++i) run(kappa, rng() % 100001);
  }
  return {failures == 0, fmt("%zu cases, kappa 1..8, lengths 0..100000, %zu failures", cases, failures)};
}

Outcome gradient_check() {
  AdaptorConfig c;
  c.vocab = 64;
  c.out_dim = 32;
  c.width = 16;
  c.hidden = {48, 64};
  const auto s = test::gradient_check(c, 7, 1000, 1e-3, 1e-3, 17);
  const double rate = static_cast<double>(s.passed) / static_cast<double>(s.sampled);
  return {s.sampled >= 1000 && rate >= 0.99 && s.classes_covered == s.classes_total,
          fmt("%zu/%zu coordinates (%.1f%%), %zu/%zu classes", s.passed, s.sampled, 100 * rate, s.classes_covered,
              s.classes_total)};
}

Outcome adaptor_efficacy() {
  const EmbeddingMatrix m = gen_synthetic(2000, 64, 64, 0.05, 0);
  CompressOptions o;
  o.grvq = rvq(2, 4);
  o.grvq.group_size = 1000;
  o.precision = Precision::F16;
  const CompressOutcome rvq_only = compress(m, o);
  o.adaptor = AdaptorConfig{};
  const CompressOutcome ca = compress(m, o);
  CompressOptions so;
  so.base = SchemeKind::Scalar;
  so.sq = {2, Granularity::PerRow};
  so.precision = Precision::F16;
  const CompressOutcome int2 = compress(m, so);

  const double l1_ca = evaluate(m, ca.artifact.reconstruct()).mean_l1;
  const double l1_rvq = evaluate(m, rvq_only.artifact.reconstruct()).mean_l1;
  const double l1_int2 = evaluate(m, int2.artifact.reconstruct()).mean_l1;
  const AccountingReport r = memory_report(2000, 64, ca.artifact.scheme(), 16);
  const double b_total = r.b_total.value();
  const double b_ca = r.b_ca->value();
  return {l1_ca < l1_rvq && l1_ca < l1_int2 && b_total - b_ca < 2.0,
          fmt("mean L1 carvq-2 %.5f, rvq-2 %.5f, int2 %.5f; bpp_total %.3f = %.3f + B_CA %.3f", l1_ca, l1_rvq, l1_int2,
              b_total, b_total - b_ca, b_ca)};
}

std::vector<CompressedArtifact> fixtures() {
  const EmbeddingMatrix m = gen_synthetic(500, 32, 20, 0.1, 4);
  AdaptorConfig small;
  small.width = 8;
  small.hidden = {32, 48};
  small.iterations = 20;
  std::vector<CompressedArtifact> out;
  CompressOptions o;
  o.grvq = rvq(2, 4);
  o.grvq.group_size = 500;
  for (Precision p : {Precision::F16, Precision::F32}) {
    o.precision = p;
    o.base = SchemeKind::Rvq;
    o.adaptor.reset();
    out.push_back(compress(m, o).artifact);
    o.adaptor = small;
    out.push_back(compress(m, o).artifact);
    o.base = SchemeKind::Scalar;
    o.sq = {3, Granularity::PerRow};
    out.push_back(compress(m, o).artifact);
  }
  return out;
}

Outcome dual_path(const std::vector<CompressedArtifact>& arts) {
  std::mt19937_64 rng(9);
  std::size_t checked = 0, mismatches = 0;
  for (const auto& a : arts) {
    const EmbeddingMatrix full = a.reconstruct();
    std::optional<EmbeddingMatrix> direct;
    if (a.grvq) direct = grvq_reconstruct(*a.grvq, a.adaptor ? &*a.adaptor : nullptr);
    for (int i = 0; i < 1000; ++i) {
      const std::size_t t = rng() % a.rows;
      ++checked;
      if (!same_bits(a.lookup(t), full.row(t))) ++mismatches;
      if (direct) {
        const auto row = embed_lookup(*a.grvq, a.adaptor ? &*a.adaptor : nullptr, t);
        if (!same_bits(row, direct->row(t)) || !same_bits(row, full.row(t))) ++mismatches;
      }
    }
  }
  return {mismatches == 0, fmt("%zu fixtures x 1000 tokens, %zu bitwise mismatches", arts.size(), mismatches)};
}

Outcome container_fidelity(const std::vector<CompressedArtifact>& arts) {
  std::size_t undetected = 0, flips = 0, roundtrip_fail = 0, size_fail = 0;
  for (const auto& a : arts) {
    const auto bytes = encode_container(a);
    const CompressedArtifact back = decode_container(bytes);
    if (!(back == a) || encode_container(back) != bytes || !same_bits(back.reconstruct().data(), a.reconstruct().data()))
      ++roundtrip_fail;

    const int p = a.precision == Precision::F16 ? 16 : 32;
    const AccountingReport r = memory_report(a.rows, a.cols, a.scheme(), p);
    const std::size_t payload = bytes.size() - container_header_size(a);
    if (payload != r.embedding_bytes_compressed) ++size_fail;

    for (std::size_t i = 0; i < bytes.size(); ++i) {
      auto bad = bytes;
      bad[i] ^= static_cast<std::uint8_t>(1u << (i % 8));
      ++flips;
      try {
        decode_container(bad);
        ++undetected;
      } catch (const Error&) {
      }
    }
  }
  return {undetected == 0 && roundtrip_fail == 0 && size_fail == 0,
          fmt("%zu artifacts: %zu round-trip failures, %zu size mismatches, %zu/%zu flips undetected", arts.size(),
              roundtrip_fail, size_fail, undetected, flips)};
}

Outcome embedding_share() {
  // LLaMA-3.2-1B: embedding 128256 x 2048; 1,235,814,400 parameters in total.
  const double emb = 128256.0 * 2048;
  const double rest = 1235814400.0 - emb;
  const double fp16 = embedding_ratio(emb, rest, 16, 16);
  const double int4 = embedding_ratio(emb, rest, 16, 4);
  const double oracle16 = 100 * emb / (emb + rest);
  const double oracle4 = 100 * emb * 16 / (emb * 16 + rest * 4);
  const bool pass = std::abs(fp16 - 21.36) <= 0.5 && std::abs(int4 - 52.06) <= 0.5 &&
                    std::abs(fp16 - oracle16) < 1e-9 && std::abs(int4 - oracle4) < 1e-9;
  return {pass, fmt("fp16 %.2f%% (21.36), int4 transformer %.2f%% (52.06)", fp16, int4)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& run) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s %2d %-24s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  report(1, "golden-bpp", golden_bpp);
  report(2, "exact-degeneracy", exact_degeneracy);
  report(3, "residual-monotonicity", residual_monotonicity);
  report(4, "nearest-oracle", nearest_oracle);
  report(5, "bitpack-roundtrip", pack_roundtrip);
  report(6, "gradient-check", gradient_check);
  report(7, "adaptor-efficacy", adaptor_efficacy);
  std::vector<CompressedArtifact> arts;
  try {
    arts = fixtures();
  } catch (const std::exception& e) {
    std::printf("fixture construction failed: %s\n", e.what());
  }
  report(8, "dual-path", [&] { return dual_path(arts); });
  report(9, "container-fidelity", [&] { return container_fidelity(arts); });
  report(10, "embedding-ratio", embedding_share);
  return failures == 0 ? 0 : 1;
}
