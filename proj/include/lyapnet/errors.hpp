#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace lyapnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (bad shape, bad dimension, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Integration produced a non-finite or runaway value.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// Gram-Schmidt met a (numerically) dependent column.
class RankDeficiencyError : public Error {
 public:
  using Error::Error;
};

/// Non-finite activation or loss inside the network.
class NumericFault : public Error {
 public:
  using Error::Error;
};

/// Not enough distinct samples survived deduplication to fill a split.
class ShortageError : public Error {
 public:
  using Error::Error;
};

/// Corrupt, truncated or mismatched file.
class FormatError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  os.precision(17);
  (os << ... << std::forward<Args>(args));
  return os.str();
}

}  // namespace detail

template <typename E = ContractViolation, typename... Args>
inline void require(bool condition, Args&&... message) {
  if (!condition) throw E(detail::concat(std::forward<Args>(message)...));
}

}  // namespace lyapnet
