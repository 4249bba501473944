#pragma once

#include <stdexcept>

namespace grouprel {

// Error taxonomy shared by the library and the CLI exit-code mapping:
// DomainError -> 1, NumericalError -> 2, IoError -> 3.
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace grouprel
