#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carvq/accounting.hpp"
#include "carvq/adaptor.hpp"
#include "carvq/grvq.hpp"
#include "carvq/scalarq.hpp"

namespace carvq {

inline constexpr std::string_view kArtifactMagic = "CARVQART";
inline constexpr int kFormatVersion = 1;

/// A compressed embedding: one base quantizer (group RVQ or scalar) plus an
/// optional corrective adaptor. Everything is held at working precision but
/// exactly representable at the storage precision `precision`.
struct CompressedArtifact {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Precision precision = Precision::F16;
  std::uint64_t seed = 0;
  std::optional<GrvqModel> grvq;
  std::optional<SqModel> sq;
  std::optional<Adaptor> adaptor;

  SchemeSpec scheme() const;
  std::string scheme_label() const { return carvq::scheme_label(scheme()); }

  /// Base reconstruction plus adaptor correction, V x n.
  EmbeddingMatrix reconstruct() const;
  /// One token's row; bitwise equal to the matching row of reconstruct().
  std::vector<float> lookup(std::size_t token) const;
  /// Same, without the adaptor correction.
  EmbeddingMatrix reconstruct_base() const;

  friend bool operator==(const CompressedArtifact&, const CompressedArtifact&) = default;
};

/// Throws InvalidSpec when components disagree on shape or hold values the
/// storage precision cannot represent exactly.
void validate(const CompressedArtifact& artifact);

std::vector<std::uint8_t> encode_container(const CompressedArtifact& artifact);
CompressedArtifact decode_container(std::span<const std::uint8_t> bytes);

void write_container(const CompressedArtifact& artifact, const std::filesystem::path& path);
CompressedArtifact read_container(const std::filesystem::path& path);

/// Size of the container header (magic + length + JSON meta) for `artifact`.
std::size_t container_header_size(const CompressedArtifact& artifact);

}  // namespace carvq
