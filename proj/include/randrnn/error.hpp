#pragma once

#include <exception>
#include <stdexcept>
#include <string>
#include <string_view>

namespace randrnn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed container (bad NPY magic, broken header, truncated payload).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed NPY file whose dtype/order is outside little-endian float32 C-order.
class UnsupportedDtypeError : public Error {
 public:
  using Error::Error;
};

/// Data that violates a domain invariant (non-finite values, bad manifest rows).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Extents that do not agree with an operation's shape contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A run configuration that cannot be satisfied.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Rethrows the in-flight exception as the same library error type with
/// `context` prepended. Must be called from inside a catch block.
[[noreturn]] inline void rethrow_with_context(std::string_view context) {
  const std::string prefix = std::string(context) + ": ";
  try {
    throw;
  } catch (const FormatError& e) {
    throw FormatError(prefix + e.what());
  } catch (const UnsupportedDtypeError& e) {
    throw UnsupportedDtypeError(prefix + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const std::exception& e) {
    throw Error(prefix + e.what());
  }
}

}  // namespace randrnn
