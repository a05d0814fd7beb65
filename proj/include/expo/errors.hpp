#pragma once

#include <stdexcept>
#include <string>

namespace expo {

// Data/format problems: malformed containers, incompatible archives,
// non-finite tensors. Maps to CLI exit code 3.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Evaluator protocol failures: nonzero exit, unparsable score, timeout,
// missing score-file entry. Maps to CLI exit code 2.
class EvaluatorError : public std::runtime_error {
 public:
  explicit EvaluatorError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace expo
