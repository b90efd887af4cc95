#pragma once

#include <stdexcept>
#include <string>

namespace paml {

// Every failure raised by the library derives from Error. The CLI maps the
// subclasses onto exit codes (usage = 1, data = 2, numeric = 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed caller input: bad ids, shape mismatches, invalid configuration.
class InputError : public Error {
 public:
  using Error::Error;
};

// Problems with dataset files or datasets that filter down to nothing.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or undefined statistics.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace paml
