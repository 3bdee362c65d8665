#pragma once

#include <stdexcept>
#include <string>

namespace vtranse {

// Every failure raised by the library derives from Error. The category
// decides the CLI exit status (see cli.hpp).
enum class ErrorCategory {
  kConfig,   // usage / configuration problems
  kData,     // malformed or inconsistent input files
  kNumeric,  // non-finite values, degenerate geometry
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error(ErrorCategory::kConfig, "dimension error: " + what) {}
};

struct DegenerateBoxError : Error {
  explicit DegenerateBoxError(const std::string& what) : Error(ErrorCategory::kNumeric, "degenerate box: " + what) {}
};

struct EmptyBatchError : Error {
  explicit EmptyBatchError(const std::string& what) : Error(ErrorCategory::kConfig, "empty batch: " + what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorCategory::kNumeric, "numeric error: " + what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kConfig, "configuration error: " + what) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& what) : Error(ErrorCategory::kConfig, "contract violation: " + what) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& what) : Error(ErrorCategory::kData, "parse error: " + what) {}
};

struct IntegrityError : Error {
  explicit IntegrityError(const std::string& what) : Error(ErrorCategory::kData, "integrity error: " + what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ErrorCategory::kData, "format error: " + what) {}
};

struct QueryError : Error {
  explicit QueryError(const std::string& what) : Error(ErrorCategory::kData, "query error: " + what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorCategory::kData, "io error: " + what) {}
};

struct GenerationError : Error {
  explicit GenerationError(const std::string& what) : Error(ErrorCategory::kConfig, "generation error: " + what) {}
};

}  // namespace vtranse
