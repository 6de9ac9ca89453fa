#pragma once

#include <stdexcept>
#include <string>

namespace optdisc {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed user input: maps, configs, feature files.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Precondition violated by an argument (bad state id, wrong dimensions, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A numerical routine could not produce a usable result.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace optdisc
