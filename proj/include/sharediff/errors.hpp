#pragma once

#include <stdexcept>
#include <string>

namespace sharediff {

// Caller violated a precondition (bad argument, unknown id, bad flag).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerically undefined input, e.g. cosine distance against a zero vector.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed or inconsistent data read from disk.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sharediff
