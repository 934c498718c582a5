#pragma once

#include <stdexcept>
#include <string>

namespace mgtr {

// Error taxonomy shared by the library and the CLI. The CLI maps each class to
// a stable single-line "E_*:" prefix and a nonzero exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* code() const noexcept { return "E_INTERNAL"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "E_DIM"; }
};

class ContractError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "E_CONTRACT"; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "E_NUMERIC"; }
};

class ParseError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "E_PARSE"; }
};

class SchemaError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "E_SCHEMA"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "E_IO"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "E_CONFIG"; }
};

}  // namespace mgtr
