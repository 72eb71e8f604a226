#ifndef ROOTTREE_ERROR_HPP
#define ROOTTREE_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace roottree {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A subtree, address or pattern that does not fit the base tree.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Mathematically undefined request: zero-probability conditioning, zero
// evidence, support violations, enumeration caps.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed structured-text input. line() is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Bitstream that cannot be decoded.
class CodecError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or arguments, detected before any work starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace roottree

#endif  // ROOTTREE_ERROR_HPP
