#pragma once

#include <stdexcept>
#include <string>

namespace sardd {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can map failures to a nonzero exit status with one handler.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/image shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A numeric parameter is outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A call violated a documented precondition (e.g. non-scalar loss).
class ContractError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class DegenerateRegionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace sardd
