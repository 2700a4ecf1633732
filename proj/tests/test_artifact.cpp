#include <filesystem>
#include <random>

#include <nlohmann/json.hpp>

#include "carvq/artifact.hpp"
#include "carvq/pipeline.hpp"
#include "support.hpp"

using namespace carvq;
namespace fs = std::filesystem;

namespace {

AdaptorConfig small_adaptor() {
  AdaptorConfig c;
  c.width = 4;
  c.hidden = {8, 8};
  c.iterations = 5;
  return c;
}

CompressedArtifact make(SchemeKind base, bool with_adaptor, std::optional<Precision> p = std::nullopt) {
  const EmbeddingMatrix m = gen_synthetic(96, 16, 6, 0.1, 2);
  CompressOptions o;
  o.base = base;
  o.grvq.levels = 2;
  o.grvq.kappa = 3;
  o.grvq.subvector_dim = 4;
  o.grvq.group_size = 100;  // 384 sub-vectors: 3 full groups and a tail of 84
  o.sq = {3, Granularity::PerRow};
  o.precision = p;
  o.seed = 5;
  if (with_adaptor) o.adaptor = small_adaptor();
  return compress(m, o).artifact;
}

// Rewrites the JSON meta and its length prefix, keeping the payload.
std::vector<std::uint8_t> with_meta_text(const std::vector<std::uint8_t>& bytes, const std::string& text) {
  const std::uint32_t old_len = bytes[8] | (bytes[9] << 8) | (bytes[10] << 16) | (static_cast<std::uint32_t>(bytes[11]) << 24);
  std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 8);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(text.size() >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), bytes.begin() + 12 + old_len, bytes.end());
  return out;
}

std::vector<std::uint8_t> with_meta(const std::vector<std::uint8_t>& bytes, const nlohmann::json& meta) {
  return with_meta_text(bytes, meta.dump());
}

nlohmann::json meta_of(const std::vector<std::uint8_t>& bytes) {
  const std::uint32_t len = bytes[8] | (bytes[9] << 8) | (bytes[10] << 16) | (static_cast<std::uint32_t>(bytes[11]) << 24);
  return nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
}

}  // namespace

TEST(Artifact, RoundTripEveryScheme) {
  for (auto base : {SchemeKind::Rvq, SchemeKind::Scalar}) {
    for (bool ad : {false, true}) {
      for (auto p : {Precision::F16, Precision::F32}) {
        const CompressedArtifact a = make(base, ad, p);
        const auto bytes = encode_container(a);
        const CompressedArtifact b = decode_container(bytes);
        EXPECT_EQ(a, b);
        EXPECT_EQ(a.reconstruct(), b.reconstruct());
        EXPECT_EQ(encode_container(b), bytes);
      }
    }
  }
}

TEST(Artifact, FileRoundTripIsByteIdentical) {
  const CompressedArtifact a = make(SchemeKind::Rvq, true);
  const fs::path p1 = fs::temp_directory_path() / "carvq_art_1.carvq";
  const fs::path p2 = fs::temp_directory_path() / "carvq_art_2.carvq";
  write_container(a, p1);
  write_container(read_container(p1), p2);
  EXPECT_EQ(read_file(p1), read_file(p2));
  fs::remove(p1);
  fs::remove(p2);
}

TEST(Artifact, MetaLayout) {
  const auto bytes = encode_container(make(SchemeKind::Rvq, true));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "CARVQART");
  const auto meta = meta_of(bytes);
  EXPECT_EQ(meta["format_version"], 1);
  EXPECT_EQ(meta["scheme"], "carvq");
  EXPECT_EQ(meta["sections"][0]["name"], "codebooks");
  EXPECT_EQ(meta["sections"][1]["name"], "indices");
  EXPECT_EQ(meta["sections"][2]["name"], "adaptor");
  const auto sq = meta_of(encode_container(make(SchemeKind::Scalar, true)));
  EXPECT_EQ(sq["scheme"], "carvq+scalar-base");
  EXPECT_EQ(sq["sections"][0]["name"], "scales");
}

TEST(Artifact, PayloadMatchesAccounting) {
  for (auto base : {SchemeKind::Rvq, SchemeKind::Scalar}) {
    const CompressedArtifact a = make(base, true);
    const auto bytes = encode_container(a);
    const AccountingReport r = memory_report(a.rows, a.cols, a.scheme(), bits(a.precision));
    EXPECT_EQ(bytes.size() - container_header_size(a), r.embedding_bytes_compressed);
  }
}

TEST(Artifact, FlippedPayloadByteIsChecksumMismatch) {
  const auto bytes = encode_container(make(SchemeKind::Rvq, false));
  auto bad = bytes;
  bad.back() ^= 0x01;
  EXPECT_CARVQ_ERROR(decode_container(bad), ChecksumMismatch);
}

TEST(Artifact, EveryFlippedByteIsDetected) {
  const auto bytes = encode_container(make(SchemeKind::Scalar, true));
  std::mt19937_64 rng(3);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto bad = bytes;
    bad[i] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    EXPECT_THROW(decode_container(bad), Error) << "byte " << i;
  }
}

TEST(Artifact, UnknownVersion) {
  const auto bytes = encode_container(make(SchemeKind::Rvq, false));
  auto meta = meta_of(bytes);
  meta["format_version"] = 99;
  EXPECT_CARVQ_ERROR(decode_container(with_meta(bytes, meta)), UnknownVersion);
}

TEST(Artifact, TruncatedFile) {
  const auto bytes = encode_container(make(SchemeKind::Rvq, true));
  for (std::size_t keep : {bytes.size() - 1, bytes.size() / 2, std::size_t{20}, std::size_t{10}, std::size_t{3}}) {
    SCOPED_TRACE(keep);
    EXPECT_CARVQ_ERROR(decode_container(std::span(bytes).first(keep)), SectionLengthMismatch);
  }
}

TEST(Artifact, EditedMetaIsRejected) {
  const auto bytes = encode_container(make(SchemeKind::Rvq, false));
  auto meta = meta_of(bytes);
  meta["seed"] = 6;
  EXPECT_CARVQ_ERROR(decode_container(with_meta(bytes, meta)), ChecksumMismatch);
  EXPECT_CARVQ_ERROR(decode_container(with_meta_text(bytes, meta_of(bytes).dump(1))), MalformedHeader);
}

TEST(Artifact, BadMagic) {
  auto bytes = encode_container(make(SchemeKind::Rvq, false));
  bytes[3] = 'x';
  EXPECT_CARVQ_ERROR(decode_container(bytes), MalformedHeader);
}

TEST(Artifact, LookupMatchesReconstruct) {
  for (auto base : {SchemeKind::Rvq, SchemeKind::Scalar}) {
    const CompressedArtifact a = make(base, true);
    const EmbeddingMatrix r = a.reconstruct();
    for (std::size_t t = 0; t < a.rows; ++t) {
      EXPECT_EQ(a.lookup(t), std::vector<float>(r.row(t).begin(), r.row(t).end()));
    }
  }
}

TEST(Artifact, ValidateRejectsUnroundedValues) {
  CompressedArtifact a = make(SchemeKind::Rvq, true, Precision::F16);
  a.adaptor->parameters()[0] = 1.0001f;
  EXPECT_CARVQ_ERROR(encode_container(a), InvalidSpec);
  CompressedArtifact none = make(SchemeKind::Rvq, false);
  none.grvq.reset();
  EXPECT_CARVQ_ERROR(validate(none), InvalidSpec);
}
