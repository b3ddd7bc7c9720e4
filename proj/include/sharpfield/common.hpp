#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sharpfield {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Kernel evaluated at a singular point (x == y).
struct SingularityError : Error {
  using Error::Error;
};

/// Gradient requested on the feature element itself (only one-sided limits exist there).
struct OnElementError : Error {
  using Error::Error;
};

/// Malformed input file.
struct FormatError : Error {
  using Error::Error;
};

/// Training / numerical failure (NaN loss, divergence); maps to CLI exit code 2.
struct NumericError : Error {
  using Error::Error;
};

inline constexpr double kPi = 3.14159265358979323846;

/// FNV-1a, used to stamp artifacts with a config hash.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace sharpfield
