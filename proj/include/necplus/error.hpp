#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace necplus {

enum class ErrorKind {
  BoundaryGap,
  UnfillableGap,
  DegenerateSeries,
  InvalidInput,
  FitFailure,
  SplitInfeasible,
  StratificationInfeasible,
  Dimension,
  NumericInstability,
  TrainingFailure,
  Config,
  Alignment,
  Load,
  Version,
  ZeroDenominator,
  UndefinedTest,
  Io,
  Schema,
};

std::string_view error_kind_name(ErrorKind kind) noexcept;

/// Domain error raised by every module. The kind maps to the names the CLI
/// reports on exit code 1.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace necplus
