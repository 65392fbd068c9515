#pragma once

#include <stdexcept>
#include <string>

namespace densesteer {

// Base of every domain error thrown by the library. The CLI maps these to
// exit code 1; anything else escaping main is a bug.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DENSESTEER_ERROR(Name, Base)      \
  class Name : public Base {              \
   public:                                \
    using Base::Base;                     \
  };

DENSESTEER_ERROR(EmptyTrace, Error)
DENSESTEER_ERROR(DomainError, Error)
DENSESTEER_ERROR(ConfigError, Error)
DENSESTEER_ERROR(LengthError, Error)
DENSESTEER_ERROR(ShapeError, Error)
DENSESTEER_ERROR(FormatError, Error)
// Declared sizes disagree with the bytes on disk (a truncated payload is one).
DENSESTEER_ERROR(ChecksumError, FormatError)
DENSESTEER_ERROR(VersionError, FormatError)
DENSESTEER_ERROR(FingerprintMismatch, Error)
DENSESTEER_ERROR(EmptySet, Error)
DENSESTEER_ERROR(EmptyGrid, Error)
DENSESTEER_ERROR(InsufficientPairs, Error)
DENSESTEER_ERROR(NetworkError, Error)
DENSESTEER_ERROR(EmptyResponse, Error)
DENSESTEER_ERROR(CacheMiss, Error)
DENSESTEER_ERROR(MissingGold, Error)
DENSESTEER_ERROR(IoError, Error)

#undef DENSESTEER_ERROR

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace densesteer
