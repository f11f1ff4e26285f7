#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace necplus {

double rmse(std::span<const double> pred, std::span<const double> truth);
/// Mean absolute percentage error in percent. Throws ZeroDenominator
/// listing every index with a zero truth value.
double mape(std::span<const double> pred, std::span<const double> truth);

struct MetricReport {
  double rmse_total = 0.0;
  std::optional<double> rmse_normal;   // absent when the class is empty
  std::optional<double> rmse_extreme;
  double mape = 0.0;
  std::size_t n_total = 0;
  std::size_t n_normal = 0;
  std::size_t n_extreme = 0;
};

/// Total and per-class RMSE; `extreme[i]` selects the class of point i.
MetricReport per_class_report(std::span<const double> pred, std::span<const double> truth,
                              const std::vector<bool>& extreme);

struct WilcoxonResult {
  double statistic = 0.0;  // T = min(W+, W-)
  double p_value = 1.0;    // exact, two-sided
  double w_plus = 0.0;
  double w_minus = 0.0;
  std::size_t n = 0;       // pairs left after dropping zero differences
};

inline constexpr std::size_t kWilcoxonMaxPairs = 25;

/// Exact signed-rank test. Zero differences are dropped, tied magnitudes
/// share their average rank, and the null distribution counts all 2^n sign
/// assignments.
WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs);

/// Repeats the last observed value.
std::vector<double> persistence_forecast(std::span<const double> history, std::size_t f);

std::string report_csv_header();
std::string report_csv_row(const std::string& run_id, const std::string& sensor,
                           const MetricReport& report);

}  // namespace necplus
