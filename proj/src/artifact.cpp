#include "carvq/artifact.hpp"

#include <string>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "byte_io.hpp"
#include "carvq/error.hpp"

namespace carvq {

using nlohmann::json;

namespace {

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t at = 0; at < bytes.size(); at += kChunk) {
    const std::size_t len = std::min(kChunk, bytes.size() - at);
    crc = crc32(crc, bytes.data() + at, static_cast<uInt>(len));
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t crc32_of(const std::string& text) {
  return crc32_of(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

json grvq_json(const GrvqParams& p) {
  return {{"L", p.levels},         {"kappa", p.kappa},           {"h", p.subvector_dim},
          {"g", p.group_size},     {"seed", p.seed},             {"kmeans_tol", p.kmeans_tol},
          {"kmeans_max_iter", p.kmeans_max_iter}};
}

GrvqParams grvq_from_json(const json& j, Precision p) {
  GrvqParams out;
  out.levels = j.at("L").get<int>();
  out.kappa = j.at("kappa").get<int>();
  out.subvector_dim = j.at("h").get<std::size_t>();
  out.group_size = j.at("g").get<std::size_t>();
  out.seed = j.at("seed").get<std::uint64_t>();
  out.kmeans_tol = j.at("kmeans_tol").get<double>();
  out.kmeans_max_iter = j.at("kmeans_max_iter").get<std::size_t>();
  out.codebook_precision = p;
  return out;
}

json adaptor_json(const AdaptorConfig& c) {
  return {{"V", c.vocab},       {"n", c.out_dim},           {"m", c.width},
          {"hidden", c.hidden}, {"seed", c.seed},           {"lr", c.lr},
          {"iterations", c.iterations}, {"batch_size", c.batch_size}};
}

AdaptorConfig adaptor_from_json(const json& j) {
  AdaptorConfig c;
  c.vocab = j.at("V").get<std::size_t>();
  c.out_dim = j.at("n").get<std::size_t>();
  c.width = j.at("m").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.lr = j.at("lr").get<double>();
  c.iterations = j.at("iterations").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  return c;
}

bool representable(std::span<const float> values, Precision p) {
  for (float v : values) {
    if (round_to(p, v) != v) return false;
  }
  return true;
}

struct Section {
  std::string name;
  std::vector<std::uint8_t> bytes;
};

std::vector<Section> build_sections(const CompressedArtifact& a) {
  std::vector<Section> out;
  auto values = [&](std::string name, std::span<const float> v) {
    Section s{std::move(name), {}};
    detail::put_values(s.bytes, v, a.precision);
    out.push_back(std::move(s));
  };
  if (a.grvq) {
    values("codebooks", a.grvq->codebook_table());
    out.push_back({"indices", a.grvq->packed_indices().bytes});
  } else {
    values("scales", a.sq->scales);
    values("zero_points", a.sq->zero_points);
    out.push_back({"codes", a.sq->codes.bytes});
  }
  if (a.adaptor) values("adaptor", a.adaptor->parameters());
  return out;
}

json meta_json(const CompressedArtifact& a, const std::vector<Section>& sections) {
  json j;
  j["format_version"] = kFormatVersion;
  j["v"] = a.rows;
  j["n"] = a.cols;
  j["p"] = bits(a.precision);
  j["scheme"] = a.scheme_label();
  j["seed"] = a.seed;
  j["grvq"] = a.grvq ? grvq_json(a.grvq->params()) : json(nullptr);
  j["sq"] = a.sq ? json{{"bits", a.sq->params.bits}, {"granularity", to_string(a.sq->params.granularity)}}
                 : json(nullptr);
  j["adaptor"] = a.adaptor ? adaptor_json(a.adaptor->config()) : json(nullptr);
  json list = json::array();
  for (const Section& s : sections) list.push_back({{"name", s.name}, {"bytes", s.bytes.size()}});
  j["sections"] = list;
  return j;
}

}  // namespace

SchemeSpec CompressedArtifact::scheme() const {
  SchemeSpec s;
  s.base = grvq ? SchemeKind::Rvq : SchemeKind::Scalar;
  if (grvq) s.grvq = grvq->params();
  if (sq) s.sq = sq->params;
  if (adaptor) s.adaptor = adaptor->config();
  return s;
}

void validate(const CompressedArtifact& a) {
  if (a.grvq.has_value() == a.sq.has_value()) {
    throw Error(ErrorKind::InvalidSpec, "artifact needs exactly one base quantizer");
  }
  if (a.grvq) {
    if (a.grvq->rows() != a.rows || a.grvq->cols() != a.cols) throw Error(ErrorKind::ShapeMismatch, "grvq shape");
    if (a.grvq->precision() != a.precision) throw Error(ErrorKind::InvalidSpec, "codebook precision differs from p");
    for (const GroupCode& g : a.grvq->groups()) {
      for (const Codebook& b : g.codebooks) {
        if (!representable(b.centroids, a.precision)) {
          throw Error(ErrorKind::InvalidSpec, "codebook values not representable at p");
        }
      }
    }
  }
  if (a.sq) {
    validate(*a.sq);
    if (a.sq->rows != a.rows || a.sq->cols != a.cols) throw Error(ErrorKind::ShapeMismatch, "scalar model shape");
    if (!representable(a.sq->scales, a.precision) || !representable(a.sq->zero_points, a.precision)) {
      throw Error(ErrorKind::InvalidSpec, "scale / zero point not representable at p");
    }
  }
  if (a.adaptor) {
    if (a.adaptor->config().vocab != a.rows || a.adaptor->config().out_dim != a.cols) {
      throw Error(ErrorKind::ShapeMismatch, "adaptor shape");
    }
    if (!representable(a.adaptor->parameters(), a.precision)) {
      throw Error(ErrorKind::InvalidSpec, "adaptor parameters not representable at p (round them first)");
    }
  }
}

EmbeddingMatrix CompressedArtifact::reconstruct_base() const {
  return grvq ? grvq_reconstruct(*grvq) : sq_dequantize(*sq);
}

EmbeddingMatrix CompressedArtifact::reconstruct() const {
  const Adaptor* a = adaptor ? &*adaptor : nullptr;
  if (grvq) return grvq_reconstruct(*grvq, a);
  EmbeddingMatrix base = sq_dequantize(*sq);
  if (!a) return base;
  std::vector<float> out = std::move(base).release();
  std::vector<float> correction(cols);
  for (std::size_t t = 0; t < rows; ++t) {
    a->forward(t, correction);
    for (std::size_t j = 0; j < cols; ++j) out[t * cols + j] += correction[j];
  }
  return EmbeddingMatrix(rows, cols, std::move(out), DType::F32);
}

std::vector<float> CompressedArtifact::lookup(std::size_t token) const {
  const Adaptor* a = adaptor ? &*adaptor : nullptr;
  if (grvq) return embed_lookup(*grvq, a, token);
  std::vector<float> out = sq_dequantize_row(*sq, token);
  if (a) {
    const auto correction = a->forward(token);
    for (std::size_t j = 0; j < cols; ++j) out[j] += correction[j];
  }
  return out;
}

std::vector<std::uint8_t> encode_container(const CompressedArtifact& a) {
  validate(a);
  const auto sections = build_sections(a);

  std::vector<std::uint8_t> payload;
  for (const Section& s : sections) payload.insert(payload.end(), s.bytes.begin(), s.bytes.end());

  json meta = meta_json(a, sections);
  meta["meta_checksum"] = crc32_of(meta.dump());
  meta["checksum"] = crc32_of(payload);
  const std::string text = meta.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kArtifactMagic.size() + 4 + text.size() + payload.size());
  detail::put_bytes(out, kArtifactMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  detail::put_bytes(out, text);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

std::size_t container_header_size(const CompressedArtifact& a) {
  std::size_t payload = 0;
  for (const Section& s : build_sections(a)) payload += s.bytes.size();
  return encode_container(a).size() - payload;
}

CompressedArtifact decode_container(std::span<const std::uint8_t> bytes) {
  auto [text, payload_at] = detail::split_header(bytes, kArtifactMagic, ErrorKind::SectionLengthMismatch);

  json meta;
  try {
    meta = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedHeader, std::string("artifact meta: ") + e.what());
  }
  if (!meta.is_object() || meta.dump() != text) {
    throw Error(ErrorKind::MalformedHeader, "artifact meta is not in canonical form");
  }

  try {
    const int version = meta.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw Error(ErrorKind::UnknownVersion, "format_version " + std::to_string(version) + " is not supported");
    }

    json unsigned_meta = meta;
    unsigned_meta.erase("checksum");
    unsigned_meta.erase("meta_checksum");
    if (crc32_of(unsigned_meta.dump()) != meta.at("meta_checksum").get<std::uint32_t>()) {
      throw Error(ErrorKind::ChecksumMismatch, "artifact meta checksum does not verify");
    }

    CompressedArtifact a;
    a.rows = meta.at("v").get<std::size_t>();
    a.cols = meta.at("n").get<std::size_t>();
    const int p = meta.at("p").get<int>();
    if (p != 16 && p != 32) throw Error(ErrorKind::MalformedHeader, "p must be 16 or 32");
    a.precision = static_cast<Precision>(p);
    a.seed = meta.at("seed").get<std::uint64_t>();

    SchemeSpec scheme;
    if (!meta.at("grvq").is_null()) {
      scheme.base = SchemeKind::Rvq;
      scheme.grvq = grvq_from_json(meta.at("grvq"), a.precision);
    } else if (!meta.at("sq").is_null()) {
      scheme.base = SchemeKind::Scalar;
      scheme.sq.bits = meta.at("sq").at("bits").get<int>();
      scheme.sq.granularity = granularity_from_string(meta.at("sq").at("granularity").get<std::string>());
    } else {
      throw Error(ErrorKind::MalformedHeader, "artifact has no base quantizer");
    }
    if (!meta.at("adaptor").is_null()) scheme.adaptor = adaptor_from_json(meta.at("adaptor"));
    if (scheme_label(scheme) != meta.at("scheme").get<std::string>()) {
      throw Error(ErrorKind::MalformedHeader, "scheme label disagrees with its components");
    }

    // Declared sections must add up to the payload and match the shapes.
    const std::span<const std::uint8_t> payload = bytes.subspan(payload_at);
    std::size_t declared = 0;
    std::vector<std::pair<std::string, std::size_t>> listed;
    for (const json& s : meta.at("sections")) {
      listed.emplace_back(s.at("name").get<std::string>(), s.at("bytes").get<std::size_t>());
      declared += listed.back().second;
    }
    if (declared != payload.size()) {
      throw Error(ErrorKind::SectionLengthMismatch, "sections declare " + std::to_string(declared) +
                                                        " bytes, payload holds " + std::to_string(payload.size()));
    }
    const SectionSizes expect = section_sizes(a.rows, a.cols, scheme, p);
    const std::vector<std::pair<std::string, std::size_t>> wanted =
        scheme.base == SchemeKind::Rvq
            ? std::vector<std::pair<std::string, std::size_t>>{{"codebooks", expect.codebooks},
                                                               {"indices", expect.indices}}
            : std::vector<std::pair<std::string, std::size_t>>{
                  {"scales", expect.scales}, {"zero_points", expect.zero_points}, {"codes", expect.codes}};
    auto full = wanted;
    if (scheme.adaptor) full.emplace_back("adaptor", expect.adaptor);
    if (full != listed) throw Error(ErrorKind::SectionLengthMismatch, "section table does not match the meta");

    if (crc32_of(payload) != meta.at("checksum").get<std::uint32_t>()) {
      throw Error(ErrorKind::ChecksumMismatch, "payload checksum does not verify");
    }

    std::size_t at = 0;
    auto take = [&](std::size_t n) {
      auto s = payload.subspan(at, n);
      at += n;
      return s;
    };
    const std::size_t width = bytes_per_value(a.precision);
    if (scheme.base == SchemeKind::Rvq) {
      const auto table = detail::get_values(take(expect.codebooks), expect.codebooks / width, a.precision);
      const auto idx = take(expect.indices);
      const GrvqParams& gp = scheme.grvq;
      PackedIndexStream stream{gp.kappa, a.rows * a.cols / gp.subvector_dim * static_cast<std::size_t>(gp.levels),
                               std::vector<std::uint8_t>(idx.begin(), idx.end())};
      a.grvq = GrvqModel::from_parts(gp, a.rows, a.cols, table, stream);
    } else {
      SqModel sq;
      sq.params = scheme.sq;
      sq.rows = a.rows;
      sq.cols = a.cols;
      sq.precision = a.precision;
      sq.scales = detail::get_values(take(expect.scales), expect.scales / width, a.precision);
      sq.zero_points = detail::get_values(take(expect.zero_points), expect.zero_points / width, a.precision);
      const auto codes = take(expect.codes);
      sq.codes = PackedIndexStream{sq.params.bits, a.rows * a.cols, std::vector<std::uint8_t>(codes.begin(), codes.end())};
      unpack_indices(sq.codes);  // rejects nonzero pad bits
      a.sq = std::move(sq);
    }
    if (scheme.adaptor) {
      Adaptor adaptor(*scheme.adaptor);
      const auto values = detail::get_values(take(expect.adaptor), expect.adaptor / width, a.precision);
      std::copy(values.begin(), values.end(), adaptor.parameters().begin());
      a.adaptor = std::move(adaptor);
    }
    validate(a);
    return a;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedHeader, std::string("artifact meta: ") + e.what());
  }
}

void write_container(const CompressedArtifact& artifact, const std::filesystem::path& path) {
  write_file(path, encode_container(artifact));
}

CompressedArtifact read_container(const std::filesystem::path& path) { return decode_container(read_file(path)); }

}  // namespace carvq
