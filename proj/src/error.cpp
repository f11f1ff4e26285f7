#include "necplus/error.hpp"

namespace necplus {

std::string_view error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::BoundaryGap: return "boundary-gap";
    case ErrorKind::UnfillableGap: return "unfillable-gap";
    case ErrorKind::DegenerateSeries: return "degenerate-series";
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::FitFailure: return "fit-failure";
    case ErrorKind::SplitInfeasible: return "split-infeasible";
    case ErrorKind::StratificationInfeasible: return "stratification-infeasible";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::NumericInstability: return "numeric-instability";
    case ErrorKind::TrainingFailure: return "training-failure";
    case ErrorKind::Config: return "config";
    case ErrorKind::Alignment: return "alignment";
    case ErrorKind::Load: return "load";
    case ErrorKind::Version: return "version";
    case ErrorKind::ZeroDenominator: return "zero-denominator";
    case ErrorKind::UndefinedTest: return "undefined-test";
    case ErrorKind::Io: return "io";
    case ErrorKind::Schema: return "schema";
  }
  return "unknown";
}

}  // namespace necplus
