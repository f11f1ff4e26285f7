#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>

#include "necplus/kv.hpp"

namespace necplus {

/// |shape| below this uses the Gumbel limit.
inline constexpr double kGevShapeTolerance = 1e-8;

struct GevParams {
  double location = 0.0;
  double scale = 1.0;
  double shape = 0.0;

  void validate() const;
};

double gev_cdf(double x, const GevParams& p);
double gev_pdf(double x, const GevParams& p);
/// Inverse CDF for u in (0, 1).
double gev_quantile(double u, const GevParams& p);

/// Maximum likelihood fit by Nelder-Mead simplex search started from the
/// Gumbel method-of-moments estimate. Requires at least 50 samples.
GevParams fit_gev(std::span<const double> xs);

struct GaussianParams {
  double location = 0.0;
  double scale = 1.0;
};

/// Sample mean and population standard deviation.
GaussianParams fit_gaussian(std::span<const double> xs);
double gaussian_pdf(double x, const GaussianParams& p);

/// Freedman-Diaconis bin count, never below 20.
std::size_t freedman_diaconis_bins(std::span<const double> xs);

/// RMSE between the density-normalized histogram of `xs` (equal-width bins
/// over [min, max]) and `pdf` evaluated at the bin centres.
double fit_quality(std::span<const double> xs, const std::function<double(double)>& pdf,
                   std::optional<std::size_t> bins = std::nullopt);

/// Linear-interpolated sample quantile (Hyndman-Fan type 7).
double quantile(std::span<const double> xs, double q);

KeyValues to_key_values(const GevParams& p);
GevParams gev_from_key_values(const KeyValues& kv);

}  // namespace necplus
