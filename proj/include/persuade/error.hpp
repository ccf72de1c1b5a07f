#pragma once

#include <stdexcept>
#include <string>

namespace persuade {

// Base for every failure caused by bad input data or configuration. The CLI
// maps these to exit code 2; anything else escaping is an internal error.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UnknownTechniqueError : public DataError {
 public:
  explicit UnknownTechniqueError(const std::string& name)
      : DataError("unknown technique: '" + name + "'"), name_(name) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class UnknownLanguageError : public DataError {
 public:
  explicit UnknownLanguageError(const std::string& code)
      : DataError("unknown language code: '" + code + "'") {}
};

class SameLanguageError : public DataError {
 public:
  explicit SameLanguageError(const std::string& code)
      : DataError("source and target language are both '" + code + "'") {}
};

class DuplicateIdError : public DataError {
 public:
  using DataError::DataError;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class RankDeficiencyError : public DataError {
 public:
  using DataError::DataError;
};

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace persuade
