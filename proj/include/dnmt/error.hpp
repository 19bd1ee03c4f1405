#pragma once

#include <stdexcept>
#include <string>

namespace dnmt {

// Runtime failure: I/O, corrupted files, non-finite values.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller violated a documented precondition (bad shapes, invalid
// arguments, unusable input). The CLI maps these to exit code 2.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

}  // namespace dnmt
