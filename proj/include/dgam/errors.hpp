#pragma once

#include <stdexcept>
#include <string>

namespace dgam {

/* Base class for everything this library throws on purpose. */
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/* ---- data / parsing ---- */

struct ParseError : Error {
  using Error::Error;
};

struct DuplicateCell : Error {
  using Error::Error;
};

struct MissingCell : Error {
  using Error::Error;
};

struct NonPositiveOffset : Error {
  using Error::Error;
};

struct StringencyMismatch : Error {
  using Error::Error;
};

struct IdOutOfRange : Error {
  using Error::Error;
};

/* ---- design construction ---- */

struct KnotCountTooSmall : Error {
  using Error::Error;
};

struct DegenerateCovariate : Error {
  using Error::Error;
};

struct SingleLevelFactor : Error {
  using Error::Error;
};

/* ---- numerics ---- */

struct NumericOverflow : Error {
  using Error::Error;
};

struct SingularSystem : Error {
  using Error::Error;
};

struct InvalidState : Error {
  using Error::Error;
};

/* ---- io ---- */

struct IoError : Error {
  using Error::Error;
};

struct UnknownKey : Error {
  using Error::Error;
};

struct UnknownSmooth : Error {
  using Error::Error;
};

}  // namespace dgam
