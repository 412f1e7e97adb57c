#include "listap/error.hpp"

namespace listap {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::NearZeroNorm: return "NearZeroNorm";
    case Errc::NotUnitNorm: return "NotUnitNorm";
    case Errc::InvalidPower: return "InvalidPower";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::NoRelevantItems: return "NoRelevantItems";
    case Errc::EmptyQuerySet: return "EmptyQuerySet";
    case Errc::UnknownProtocol: return "UnknownProtocol";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::OutOfDomain: return "OutOfDomain";
    case Errc::SingletonClass: return "SingletonClass";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::BatchTooSmall: return "BatchTooSmall";
    case Errc::NoValidTriplet: return "NoValidTriplet";
    case Errc::TooFewItems: return "TooFewItems";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Io: return "Io";
    case Errc::Format: return "Format";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

}  // namespace listap
