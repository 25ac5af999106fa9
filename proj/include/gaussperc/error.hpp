#pragma once

#include <stdexcept>
#include <string>

namespace gaussperc {

/// Base class for every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

/// A documented precondition of an operation does not hold.
struct PreconditionViolation : Error {
  using Error::Error;
};

struct UnsupportedOrder : Error {
  using Error::Error;
};

struct OutOfRange : Error {
  using Error::Error;
};

/// Circulant embedding produced too much negative eigenvalue mass.
struct EmbeddingFailure : Error {
  EmbeddingFailure(const std::string& what, double most_negative, double suggested_padding)
      : Error(what), most_negative_eigenvalue(most_negative), suggested_padding_factor(suggested_padding) {}
  double most_negative_eigenvalue;
  double suggested_padding_factor;
};

struct FormatError : Error {
  using Error::Error;
};

}  // namespace gaussperc
