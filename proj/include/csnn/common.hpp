#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace csnn {

// Exit-code mapping for the CLI: config 2, data 3, invariant 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/geometry violations (kernel larger than input, length mismatches).
struct DimensionError : InvariantError {
  using InvariantError::InvariantError;
};

// l2_normalize on a near-zero vector; the caller decides the fallback.
struct DegenerateVectorError : InvariantError {
  using InvariantError::InvariantError;
};

enum class Padding { valid, same };

inline const char* to_string(Padding p) {
  return p == Padding::valid ? "valid" : "same";
}

}  // namespace csnn
