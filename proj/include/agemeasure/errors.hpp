#ifndef AGEMEASURE_ERRORS_HPP
#define AGEMEASURE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace agemeasure {

/// Caller violated a documented precondition (bad argument, unsupported test function).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A path functional that must be positive vanished (empty window, extinct at time 0).
class DegeneratePathError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Linear system is singular or its condition estimate exceeds the rejection threshold.
class IllConditionedError : public std::runtime_error {
 public:
  IllConditionedError(const std::string& what, double condition)
      : std::runtime_error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

/// Event log is structurally inconsistent or cannot be parsed.
class LogFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Confidence-region grid cannot represent the requested region.
class ResolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace agemeasure

#endif  // AGEMEASURE_ERRORS_HPP
