#pragma once

#include <stdexcept>
#include <string>

namespace aniso {

struct UnsupportedDimension : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct UnknownKernel : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SingularPoint : std::domain_error {
  using std::domain_error::domain_error;
};

struct UnderResolved : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// CSV / config parse failure; carries the 1-based line number (0 = header/meta).
struct ParseError : std::runtime_error {
  ParseError(std::string msg, long line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg
                                    : msg),
        line_number(line) {}
  long line_number;
};

struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace aniso
