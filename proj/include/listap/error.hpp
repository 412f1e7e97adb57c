#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace listap {

enum class Errc {
  NearZeroNorm,
  NotUnitNorm,
  InvalidPower,
  OutOfRange,
  NoRelevantItems,
  EmptyQuerySet,
  UnknownProtocol,
  DimensionMismatch,
  OutOfDomain,
  SingletonClass,
  ShapeMismatch,
  BatchTooSmall,
  NoValidTriplet,
  TooFewItems,
  RankDeficient,
  InvalidArgument,
  Io,
  Format,
};

std::string_view errc_name(Errc code);

// Every failure raised by the library carries one of the codes above so the
// CLI can map it to an exit status and tests can assert on the kind.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace listap
