#pragma once

#include <stdexcept>
#include <string>

namespace reco {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct TraceError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct DivergenceError : Error {
  using Error::Error;
};

// Raised by split_chain when the very first edge of a chain is broken; such
// chains have no reliable antecedent and are dropped, not converted.
struct ChainRejected : Error {
  using Error::Error;
};

struct HttpError : Error {
  enum class Kind { timeout, status, count_mismatch, dim_mismatch };
  Kind kind;
  HttpError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

}  // namespace reco
