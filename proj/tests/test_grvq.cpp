#include <random>
#include <set>

#include "carvq/adaptor.hpp"
#include "carvq/grvq.hpp"
#include "support.hpp"

using namespace carvq;

namespace {

double sq_error(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(static_cast<double>(a[i]) - b[i], 2);
  return s;
}

GrvqParams small_params(int levels, int kappa, std::size_t h, std::size_t g) {
  GrvqParams p;
  p.levels = levels;
  p.kappa = kappa;
  p.subvector_dim = h;
  p.group_size = g;
  p.seed = 1;
  return p;
}

}  // namespace

TEST(Reshape, TwoByFourIntoPairs) {
  const EmbeddingMatrix m(2, 4, {1, 2, 3, 4, 5, 6, 7, 8});
  const RowsView v = reshape_to_subvectors(m, 2);
  ASSERT_EQ(v.count(), 4u);
  EXPECT_EQ(std::vector<float>(v.row(1).begin(), v.row(1).end()), (std::vector<float>{3, 4}));
  EXPECT_EQ(std::vector<float>(v.row(2).begin(), v.row(2).end()), (std::vector<float>{5, 6}));
}

TEST(Reshape, FullWidthIsIdentity) {
  const EmbeddingMatrix m(2, 4, {1, 2, 3, 4, 5, 6, 7, 8});
  const RowsView v = reshape_to_subvectors(m, 4);
  ASSERT_EQ(v.count(), 2u);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(v.row(i)[j], m(i, j));
}

TEST(Reshape, NonDivisorRejected) {
  const EmbeddingMatrix m = EmbeddingMatrix::zeros(2, 4);
  EXPECT_CARVQ_ERROR(reshape_to_subvectors(m, 3), BadSubvectorDim);
}

TEST(Partition, EvenSplit) {
  EXPECT_EQ(partition_groups(8, 4), (std::vector<GroupSpan>{{0, 4}, {4, 4}}));
}

TEST(Partition, RaggedTail) {
  EXPECT_EQ(partition_groups(10, 4), (std::vector<GroupSpan>{{0, 4}, {4, 4}, {8, 2}}));
}

TEST(Partition, OversizedGroup) {
  EXPECT_EQ(partition_groups(10, 64), (std::vector<GroupSpan>{{0, 10}}));
}

TEST(Partition, LargeModelGroupCount) {
  const std::size_t sub = std::size_t{128256} * 3072 / 8;
  EXPECT_EQ(partition_groups(sub, 1024).size(), (sub + 1023) / 1024);
  EXPECT_EQ(partition_groups(sub, 1024).size(), 48096u);
}

TEST(EncodeGroup, FewDistinctRowsAreExact) {
  std::vector<float> values;
  const auto protos = test::normal_values(10 * 4, 3);
  for (std::size_t i = 0; i < 64; ++i) values.insert(values.end(), protos.begin() + (i % 10) * 4, protos.begin() + (i % 10) * 4 + 4);
  const RowsView block{values, 4};
  const GroupCode code = rvq_encode_group(block, small_params(1, 4, 4, 64), 0);
  EXPECT_EQ(rvq_decode_group(code), values);
}

TEST(EncodeGroup, ZeroBlock) {
  const std::vector<float> values(32 * 2, 0.0f);
  const GroupCode code = rvq_encode_group({values, 2}, small_params(2, 3, 2, 32), 0);
  for (const auto& b : code.codebooks)
    for (float c : b.centroids) EXPECT_EQ(c, 0.0f);
  for (auto k : code.indices) EXPECT_EQ(k, 0);
  EXPECT_EQ(rvq_decode_group(code), values);
}

TEST(DecodeGroup, SingleLevelCentroidVerbatim) {
  GroupCode code;
  code.rows = 2;
  code.codebooks = {Codebook{2, {1, 2, 3, 4, 5, 6}}};
  code.indices = {2, 0};
  EXPECT_EQ(rvq_decode_group(code), (std::vector<float>{5, 6, 1, 2}));
}

TEST(DecodeGroup, TwoLevelsSum) {
  GroupCode code;
  code.rows = 1;
  code.codebooks = {Codebook{2, {1, 2, 3, 4}}, Codebook{2, {0.5f, 0.25f, 10, 20}}};
  code.indices = {1, 1};
  EXPECT_EQ(rvq_decode_group(code), (std::vector<float>{13, 24}));
  code.indices = {1, 2};
  EXPECT_CARVQ_ERROR(rvq_decode_group(code), IndexOutOfRange);
}

TEST(EncodeGroup, ErrorShrinksWithLevels) {
  const auto values = test::normal_values(256 * 4, 12);
  double last = std::numeric_limits<double>::infinity();
  for (int levels = 1; levels <= 3; ++levels) {
    const GroupCode code = rvq_encode_group({values, 4}, small_params(levels, 3, 4, 256), 7);
    const double err = sq_error(values, rvq_decode_group(code));
    EXPECT_LT(err, last);
    last = err;
  }
}

TEST(EncodeGroup, HalfStorageCodebooks) {
  const auto values = test::normal_values(64 * 4, 4);
  const GroupCode code = rvq_encode_group({values, 4}, small_params(2, 3, 4, 64), 0, Precision::F16);
  for (const auto& b : code.codebooks)
    for (float c : b.centroids) EXPECT_EQ(round_to(Precision::F16, c), c);
}

TEST(Compress, ZeroNoiseSyntheticIsExact) {
  const EmbeddingMatrix m = gen_synthetic(256, 16, 16, 0.0, 2);
  // h = n: one sub-vector per token, so 16 distinct per group and K = 16 suffices.
  const GrvqModel model = grvq_compress(m, small_params(1, 4, 16, 256));
  EXPECT_EQ(grvq_reconstruct(model), m);
  EXPECT_EQ(embed_lookup(model, nullptr, 0), std::vector<float>(m.row(0).begin(), m.row(0).end()));

  // h = 8 splits every center in two: up to 32 distinct sub-vectors, so K = 32.
  EXPECT_EQ(grvq_reconstruct(grvq_compress(m, small_params(1, 5, 8, 256))), m);
}

TEST(Compress, ZeroMatrix) {
  const EmbeddingMatrix m = EmbeddingMatrix::zeros(64, 8);
  const auto recon = grvq_reconstruct(grvq_compress(m, small_params(2, 2, 4, 32)));
  for (float v : recon.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Compress, DeterministicAndThreadIndependent) {
  const EmbeddingMatrix m = gen_synthetic(300, 16, 20, 0.1, 5);
  const auto p = small_params(2, 4, 8, 128);
  const GrvqModel a = grvq_compress(m, p, 1);
  const GrvqModel b = grvq_compress(m, p, 1);
  const GrvqModel c = grvq_compress(m, p, 4);
  EXPECT_EQ(a.packed_indices(), b.packed_indices());
  EXPECT_EQ(a, c);
}

TEST(Compress, RaggedTailGroup) {
  const EmbeddingMatrix m = gen_synthetic(50, 8, 5, 0.1, 1);  // 100 sub-vectors of h=4
  const GrvqModel model = grvq_compress(m, small_params(1, 3, 4, 64));
  ASSERT_EQ(model.groups().size(), 2u);
  EXPECT_EQ(model.groups()[1].rows, 36u);
}

TEST(Compress, TailSmallerThanKRejected) {
  const EmbeddingMatrix m = gen_synthetic(34, 8, 5, 0.1, 1);  // 68 sub-vectors: tail of 4 < K=8
  EXPECT_CARVQ_ERROR(grvq_compress(m, small_params(1, 3, 4, 64)), TooFewPoints);
}

TEST(Compress, InvalidParams) {
  const EmbeddingMatrix m = EmbeddingMatrix::zeros(64, 8);
  EXPECT_CARVQ_ERROR(grvq_compress(m, small_params(0, 2, 4, 32)), InvalidSpec);
  EXPECT_CARVQ_ERROR(grvq_compress(m, small_params(1, 9, 4, 32)), InvalidSpec);
  EXPECT_CARVQ_ERROR(grvq_compress(m, small_params(1, 2, 3, 32)), BadSubvectorDim);
  EXPECT_CARVQ_ERROR(grvq_compress(m, small_params(1, 6, 4, 32)), InvalidSpec);
}

TEST(Model, FromPartsRoundTrip) {
  const EmbeddingMatrix m = gen_synthetic(100, 8, 6, 0.2, 3);
  const GrvqModel model = grvq_compress(m, small_params(3, 3, 4, 64));
  const GrvqModel back =
      GrvqModel::from_parts(model.params(), m.rows(), m.cols(), model.codebook_table(), model.packed_indices());
  EXPECT_EQ(back, model);
  auto table = model.codebook_table();
  table.pop_back();
  EXPECT_CARVQ_ERROR(GrvqModel::from_parts(model.params(), m.rows(), m.cols(), table, model.packed_indices()),
                     SectionLengthMismatch);
}

TEST(Lookup, MatchesReconstructWithAndWithoutAdaptor) {
  const EmbeddingMatrix m = gen_synthetic(120, 16, 8, 0.1, 9);
  const GrvqModel model = grvq_compress(m, small_params(2, 3, 4, 64));
  AdaptorConfig cfg;
  cfg.vocab = 120;
  cfg.out_dim = 16;
  cfg.width = 4;
  cfg.hidden = {8, 8};
  const Adaptor ad = init_adaptor(cfg);
  const auto base = grvq_reconstruct(model);
  const auto full = grvq_reconstruct(model, &ad);
  for (std::size_t t = 0; t < 120; ++t) {
    EXPECT_EQ(embed_lookup(model, nullptr, t), std::vector<float>(base.row(t).begin(), base.row(t).end()));
    EXPECT_EQ(embed_lookup(model, &ad, t), std::vector<float>(full.row(t).begin(), full.row(t).end()));
  }
  EXPECT_CARVQ_ERROR(embed_lookup(model, nullptr, 120), TokenOutOfRange);
}
