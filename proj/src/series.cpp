#include "necplus/series.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "necplus/error.hpp"

namespace necplus {

bool RawSeries::complete() const {
  return std::none_of(missing.begin(), missing.end(), [](bool m) { return m; });
}

void RawSeries::validate() const {
  if (timestamps.size() != values.size() || missing.size() != values.size()) {
    throw Error(ErrorKind::InvalidInput, "series '" + sensor_id + "' has ragged columns");
  }
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (timestamps[i] - timestamps[i - 1] != kSecondsPerHour) {
      throw Error(ErrorKind::InvalidInput, "series '" + sensor_id +
                                               "' is not continuous hourly at row " +
                                               std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!missing[i] && !std::isfinite(values[i])) {
      throw Error(ErrorKind::InvalidInput,
                  "non-finite value at row " + std::to_string(i) + " of '" + sensor_id + "'");
    }
  }
}

RawSeries RawSeries::from_values(std::vector<double> values, std::int64_t start,
                                 std::string sensor_id) {
  RawSeries s;
  s.sensor_id = std::move(sensor_id);
  s.timestamps.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    s.timestamps[i] = start + static_cast<std::int64_t>(i) * kSecondsPerHour;
  }
  s.missing.assign(values.size(), false);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::isnan(values[i])) s.missing[i] = true;
  }
  s.values = std::move(values);
  return s;
}

std::size_t ExtremeLabels::extreme_count() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
}

double ExtremeLabels::extreme_fraction() const {
  if (labels.empty()) return 0.0;
  return static_cast<double>(extreme_count()) / static_cast<double>(labels.size());
}

namespace {

struct PolyFit {
  Eigen::VectorXd coeffs;
  double residual = 0.0;
};

PolyFit fit_polynomial(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int degree) {
  Eigen::MatrixXd vander(x.size(), degree + 1);
  for (Eigen::Index r = 0; r < x.size(); ++r) {
    double p = 1.0;
    for (int c = 0; c <= degree; ++c) {
      vander(r, c) = p;
      p *= x(r);
    }
  }
  PolyFit fit;
  fit.coeffs = vander.colPivHouseholderQr().solve(y);
  fit.residual = (vander * fit.coeffs - y).squaredNorm();
  return fit;
}

double eval_polynomial(const Eigen::VectorXd& coeffs, double x) {
  double acc = 0.0;
  for (Eigen::Index c = coeffs.size() - 1; c >= 0; --c) acc = acc * x + coeffs(c);
  return acc;
}

}  // namespace

RawSeries fill_gaps(const RawSeries& series, const GapFillOptions& options) {
  if (options.max_degree < 1) {
    throw Error(ErrorKind::InvalidInput, "max_degree must be >= 1");
  }
  RawSeries out = series;
  const std::size_t n = series.size();
  std::size_t i = 0;
  while (i < n) {
    if (!series.missing[i]) {
      ++i;
      continue;
    }
    const std::size_t gap_begin = i;
    while (i < n && series.missing[i]) ++i;
    const std::size_t gap_end = i;
    const std::size_t gap_len = gap_end - gap_begin;
    if (gap_len > options.max_gap) {
      throw Error(ErrorKind::UnfillableGap, "gap of " + std::to_string(gap_len) +
                                                " points at index " + std::to_string(gap_begin) +
                                                " exceeds maximum " +
                                                std::to_string(options.max_gap));
    }
    const std::size_t k = (gap_len + 1) / 2;
    if (gap_begin < k || gap_end + k > n) {
      throw Error(ErrorKind::BoundaryGap, "gap at index " + std::to_string(gap_begin) +
                                              " lacks " + std::to_string(k) +
                                              " anchor points on both sides");
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (series.missing[gap_begin - 1 - j] || series.missing[gap_end + j]) {
        throw Error(ErrorKind::BoundaryGap, "gap at index " + std::to_string(gap_begin) +
                                                " has missing anchor points");
      }
    }

    // Positions are centred and scaled to [-1, 1] to keep the Vandermonde
    // system well conditioned.
    const double center = 0.5 * (static_cast<double>(gap_begin) + static_cast<double>(gap_end) - 1.0);
    const double half_span = 0.5 * static_cast<double>(gap_len + 2 * k - 1);
    Eigen::VectorXd x(2 * k);
    Eigen::VectorXd y(2 * k);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t left = gap_begin - k + j;
      const std::size_t right = gap_end + j;
      x(j) = (static_cast<double>(left) - center) / half_span;
      y(j) = series.values[left];
      x(k + j) = (static_cast<double>(right) - center) / half_span;
      y(k + j) = series.values[right];
    }

    const int top_degree = std::min<int>(options.max_degree, static_cast<int>(2 * k) - 1);
    std::vector<PolyFit> fits;
    double best_residual = std::numeric_limits<double>::infinity();
    for (int d = 1; d <= top_degree; ++d) {
      fits.push_back(fit_polynomial(x, y, d));
      best_residual = std::min(best_residual, fits.back().residual);
    }
    const double tie_tol = 1e-10 * (y.squaredNorm() + 1.0);
    const PolyFit* chosen = &fits.front();
    for (const auto& fit : fits) {
      if (fit.residual <= best_residual + tie_tol) {
        chosen = &fit;
        break;
      }
    }
    for (std::size_t j = gap_begin; j < gap_end; ++j) {
      out.values[j] = eval_polynomial(chosen->coeffs, (static_cast<double>(j) - center) / half_span);
      out.missing[j] = false;
    }
  }
  return out;
}

std::vector<double> first_differences(const RawSeries& series) {
  if (!series.complete()) {
    throw Error(ErrorKind::InvalidInput, "series '" + series.sensor_id + "' has missing values");
  }
  if (series.size() < 2) {
    throw Error(ErrorKind::InvalidInput, "series needs at least 2 points to difference");
  }
  std::vector<double> diffs(series.size() - 1);
  for (std::size_t i = 0; i + 1 < series.size(); ++i) {
    diffs[i] = series.values[i + 1] - series.values[i];
  }
  return diffs;
}

TransformParams fit_transform(std::span<const double> differences) {
  if (differences.empty()) {
    throw Error(ErrorKind::InvalidInput, "cannot fit transform on an empty sample");
  }
  const bool constant = std::all_of(differences.begin(), differences.end(),
                                    [&](double d) { return d == differences.front(); });
  if (constant) {
    throw Error(ErrorKind::DegenerateSeries, "all first differences are identical");
  }
  double sum = 0.0;
  for (double d : differences) sum += d;
  const double mean = sum / static_cast<double>(differences.size());
  double sq = 0.0;
  for (double d : differences) sq += (d - mean) * (d - mean);
  const double scale = std::sqrt(sq / static_cast<double>(differences.size()));
  if (!(scale > 0.0)) {
    throw Error(ErrorKind::DegenerateSeries, "first differences have zero spread");
  }
  return {mean, scale};
}

StandardizedSeries difference_standardize(const RawSeries& series) {
  const auto diffs = first_differences(series);
  return difference_standardize(series, fit_transform(diffs));
}

StandardizedSeries difference_standardize(const RawSeries& series, const TransformParams& params) {
  if (!(params.scale > 0.0)) {
    throw Error(ErrorKind::DegenerateSeries, "transform scale must be positive");
  }
  const auto diffs = first_differences(series);
  StandardizedSeries out;
  out.values.resize(diffs.size());
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    out.values[i] = (diffs[i] - params.location) / params.scale;
  }
  out.location = params.location;
  out.scale = params.scale;
  out.anchor = series.values.back();
  out.source_id = series.sensor_id;
  out.first_timestamp = series.timestamps.size() > 1 ? series.timestamps[1] : 0;
  return out;
}

std::vector<double> invert_transform(std::span<const double> preds, const TransformParams& params,
                                     double anchor) {
  if (!(params.scale > 0.0)) {
    throw Error(ErrorKind::InvalidInput, "transform scale must be positive");
  }
  if (!std::isfinite(anchor)) throw Error(ErrorKind::InvalidInput, "anchor is not finite");
  std::vector<double> out(preds.size());
  double level = anchor;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!std::isfinite(preds[i])) {
      throw Error(ErrorKind::InvalidInput, "non-finite prediction at step " + std::to_string(i));
    }
    level += preds[i] * params.scale + params.location;
    out[i] = level;
  }
  return out;
}

std::vector<double> invert_transform(std::span<const double> preds, const StandardizedSeries& ref,
                                     std::optional<double> anchor_override) {
  return invert_transform(preds, ref.params(), anchor_override.value_or(ref.anchor));
}

ExtremeLabels label_extremes(std::span<const double> values, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorKind::InvalidInput, "epsilon must be a positive finite number");
  }
  ExtremeLabels out;
  out.epsilon = epsilon;
  out.labels.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out.labels[i] = std::abs(values[i]) > epsilon;
  return out;
}

ExtremeLabels label_extremes(const StandardizedSeries& series, double epsilon) {
  return label_extremes(std::span<const double>(series.values), epsilon);
}

}  // namespace necplus
