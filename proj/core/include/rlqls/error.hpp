#pragma once

#include <stdexcept>
#include <string>

namespace rlqls {

// Violated precondition: bad dimensions, out-of-range indices, malformed input.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A request that exceeds a hard size cap (enumeration limits).
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or inconsistent configuration; the caller has to fix inputs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure during learning (non-finite loss or gradient).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define RLQLS_REQUIRE(cond, msg)                                   \
  do {                                                             \
    if (!(cond)) throw ::rlqls::ContractError(std::string(msg));   \
  } while (0)

}  // namespace rlqls
