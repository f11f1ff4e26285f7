#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace necplus {

inline constexpr std::int64_t kSecondsPerHour = 3600;

/// Hourly sensor series. `missing[i]` marks a gap; `values[i]` is ignored there.
struct RawSeries {
  std::string sensor_id;
  std::vector<std::int64_t> timestamps;  // epoch seconds, constant 1 h step
  std::vector<double> values;
  std::vector<bool> missing;

  std::size_t size() const { return values.size(); }
  bool complete() const;
  // Throws InvalidInput when the cadence or finiteness invariants are broken.
  void validate() const;

  static RawSeries from_values(std::vector<double> values, std::int64_t start = 0,
                               std::string sensor_id = {});
};

struct TransformParams {
  double location = 0.0;
  double scale = 1.0;
};

/// Standardized first differences. values[i] corresponds to the change
/// from raw point i to raw point i+1, so `first_timestamp` is the raw
/// timestamp at index 1.
struct StandardizedSeries {
  std::vector<double> values;
  double location = 0.0;
  double scale = 1.0;
  double anchor = 0.0;
  std::string source_id;
  std::int64_t first_timestamp = 0;

  std::size_t size() const { return values.size(); }
  TransformParams params() const { return {location, scale}; }
  std::int64_t timestamp_at(std::size_t i) const {
    return first_timestamp + static_cast<std::int64_t>(i) * kSecondsPerHour;
  }
};

struct ExtremeLabels {
  double epsilon = 0.0;
  std::vector<bool> labels;

  std::size_t extreme_count() const;
  double extreme_fraction() const;
};

struct GapFillOptions {
  int max_degree = 3;
  std::size_t max_gap = 14 * 24;  // hours
};

/// Fills every run of missing values with a least-squares polynomial fitted
/// to k observed points on either side (k = ceil(gap/2)). The degree in
/// 1..max_degree with the smallest anchor residual wins; ties go low.
RawSeries fill_gaps(const RawSeries& series, const GapFillOptions& options = {});

std::vector<double> first_differences(const RawSeries& series);

/// Population mean and standard deviation. Throws DegenerateSeries when
/// every value is identical.
TransformParams fit_transform(std::span<const double> differences);

StandardizedSeries difference_standardize(const RawSeries& series);
/// Applies previously fitted parameters (e.g. from the training portion).
StandardizedSeries difference_standardize(const RawSeries& series, const TransformParams& params);

/// y_j = anchor + sum_{i<=j} (preds[i] * scale + location).
std::vector<double> invert_transform(std::span<const double> preds, const StandardizedSeries& ref,
                                     std::optional<double> anchor_override = std::nullopt);
std::vector<double> invert_transform(std::span<const double> preds, const TransformParams& params,
                                     double anchor);

/// |x| > epsilon is extreme; the closed interval [-epsilon, epsilon] is normal.
ExtremeLabels label_extremes(const StandardizedSeries& series, double epsilon);
ExtremeLabels label_extremes(std::span<const double> values, double epsilon);

}  // namespace necplus
