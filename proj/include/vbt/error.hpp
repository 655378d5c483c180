#pragma once

#include <stdexcept>
#include <string>

namespace vbt {

enum class ErrorCode {
  NonPositiveDepth,
  DegenerateSegment,
  OutOfContact,
  EmptyMask,
  DegenerateFit,
  ClockSkew,
  InvalidBounds,
  InfeasibleBox,
  LinearAlgebraFailure,
  SolverFailure,
  ScenarioInvalid,
  MismatchedScenarios,
  IoFailure,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so that
/// callers (the harness, the CLI) can branch on the kind without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vbt
