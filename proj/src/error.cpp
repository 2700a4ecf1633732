#include "carvq/error.hpp"

namespace carvq {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteData: return "NonFiniteData";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::BadSubvectorDim: return "BadSubvectorDim";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorKind::IndexOverflow: return "IndexOverflow";
    case ErrorKind::MalformedStream: return "MalformedStream";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::UnknownVersion: return "UnknownVersion";
    case ErrorKind::SectionLengthMismatch: return "SectionLengthMismatch";
  }
  return "Unknown";
}

}  // namespace carvq
