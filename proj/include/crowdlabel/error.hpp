#pragma once

#include <stdexcept>
#include <string>

namespace crowdlabel {

/// Raised for malformed or inconsistent user input (files, flags, requests).
/// Everything else that escapes the library is an internal error.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input error tied to a line of a text file.
class ParseError : public InputError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : InputError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace crowdlabel
