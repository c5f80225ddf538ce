#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace difflik {

/// Base for every error raised by the library. User-facing errors (bad
/// input files, invalid parameters) derive from it; anything else escaping
/// the library is an internal failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnboundParameter : public Error {
 public:
  explicit UnboundParameter(const std::string& name)
      : Error("unbound parameter '" + name + "'"), name_(name) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

/// Evaluation outside the analytic domain (division by zero, log of a
/// nonpositive value, fractional power of a negative value, ...).
class DomainError : public Error {
 public:
  DomainError(const std::string& what, std::string subexpression)
      : Error(what + " in '" + subexpression + "'"), subexpression_(std::move(subexpression)) {}
  explicit DomainError(const std::string& what) : Error(what) {}
  const std::string& subexpression() const noexcept { return subexpression_; }

 private:
  std::string subexpression_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column, const std::string& source = "")
      : Error((source.empty() ? "" : source + ": ") + "line " + std::to_string(line) + ", column " +
              std::to_string(column) + ": " + what),
        description_(what),
        line_(line),
        column_(column) {}
  const std::string& description() const noexcept { return description_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::string description_;
  std::size_t line_;
  std::size_t column_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace difflik
