#include "necplus/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "necplus/error.hpp"
#include "necplus/kv.hpp"

namespace necplus {

namespace {

void check_lengths(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw Error(ErrorKind::Dimension, "prediction and truth must have equal, non-zero length");
  }
}

double sum_squared_error(std::span<const double> pred, std::span<const double> truth,
                         const std::vector<bool>* select, bool want) {
  double sse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (select && (*select)[i] != want) continue;
    const double d = pred[i] - truth[i];
    sse += d * d;
  }
  return sse;
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> truth) {
  check_lengths(pred, truth);
  return std::sqrt(sum_squared_error(pred, truth, nullptr, true) / static_cast<double>(pred.size()));
}

double mape(std::span<const double> pred, std::span<const double> truth) {
  check_lengths(pred, truth);
  std::string zeros;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0.0) zeros += (zeros.empty() ? "" : ",") + std::to_string(i);
  }
  if (!zeros.empty()) throw Error(ErrorKind::ZeroDenominator, "zero truth at indices " + zeros);
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) acc += std::abs(pred[i] - truth[i]) / std::abs(truth[i]);
  return 100.0 * acc / static_cast<double>(truth.size());
}

MetricReport per_class_report(std::span<const double> pred, std::span<const double> truth,
                              const std::vector<bool>& extreme) {
  check_lengths(pred, truth);
  if (extreme.size() != pred.size()) throw Error(ErrorKind::Dimension, "labels do not match predictions");
  MetricReport r;
  r.n_total = pred.size();
  r.n_extreme = static_cast<std::size_t>(std::count(extreme.begin(), extreme.end(), true));
  r.n_normal = r.n_total - r.n_extreme;
  const double sse_normal = sum_squared_error(pred, truth, &extreme, false);
  const double sse_extreme = sum_squared_error(pred, truth, &extreme, true);
  r.rmse_total = rmse(pred, truth);
  if (r.n_normal > 0) r.rmse_normal = std::sqrt(sse_normal / static_cast<double>(r.n_normal));
  if (r.n_extreme > 0) r.rmse_extreme = std::sqrt(sse_extreme / static_cast<double>(r.n_extreme));
  r.mape = mape(pred, truth);
  return r;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs) {
  std::vector<double> diffs;
  for (const auto& [a, b] : pairs) {
    if (!std::isfinite(a) || !std::isfinite(b)) {
      throw Error(ErrorKind::InvalidInput, "non-finite value in Wilcoxon pairs");
    }
    if (a != b) diffs.push_back(a - b);
  }
  if (diffs.empty()) throw Error(ErrorKind::UndefinedTest, "all paired differences are zero");
  const std::size_t n = diffs.size();
  if (n > kWilcoxonMaxPairs) {
    throw Error(ErrorKind::InvalidInput, "exact Wilcoxon supports at most " +
                                             std::to_string(kWilcoxonMaxPairs) + " non-zero pairs");
  }

  // Ranks are kept doubled so that average ranks of ties stay integral.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(diffs[a]) < std::abs(diffs[b]); });
  std::vector<std::uint64_t> rank2(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = (i + 1) + (j + 1);
    i = j + 1;
  }

  std::uint64_t plus2 = 0;
  std::uint64_t total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (diffs[i] > 0) plus2 += rank2[i];
  }
  const std::uint64_t minus2 = total2 - plus2;
  const std::uint64_t t2 = std::min(plus2, minus2);

  // counts[s] = number of sign assignments whose positive doubled-rank sum is s.
  std::vector<std::uint64_t> counts(total2 + 1, 0);
  counts[0] = 1;
  std::uint64_t reach = 0;
  for (std::size_t i = 0; i < n; ++i) {
    reach += rank2[i];
    for (std::uint64_t s = reach; s >= rank2[i]; --s) {
      counts[s] += counts[s - rank2[i]];
      if (s == rank2[i]) break;
    }
  }
  std::uint64_t extreme = 0;
  for (std::uint64_t s = 0; s <= total2; ++s) {
    if (std::min(s, total2 - s) <= t2) extreme += counts[s];
  }

  WilcoxonResult r;
  r.n = n;
  r.w_plus = static_cast<double>(plus2) / 2.0;
  r.w_minus = static_cast<double>(minus2) / 2.0;
  r.statistic = static_cast<double>(t2) / 2.0;
  r.p_value = std::min(1.0, static_cast<double>(extreme) / std::ldexp(1.0, static_cast<int>(n)));
  return r;
}

std::vector<double> persistence_forecast(std::span<const double> history, std::size_t f) {
  if (history.empty()) throw Error(ErrorKind::InvalidInput, "persistence needs a non-empty history");
  return std::vector<double>(f, history.back());
}

std::string report_csv_header() {
  return "run_id,sensor,rmse_total,rmse_normal,rmse_extreme,mape,n_total,n_extreme";
}

std::string report_csv_row(const std::string& run_id, const std::string& sensor,
                           const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  return run_id + ',' + sensor + ',' + format_double(r.rmse_total) + ',' + opt(r.rmse_normal) + ',' +
         opt(r.rmse_extreme) + ',' + format_double(r.mape) + ',' + std::to_string(r.n_total) + ',' +
         std::to_string(r.n_extreme);
}

}  // namespace necplus
