#include "necplus/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include "necplus/error.hpp"
#include "nelder_mead.hpp"

namespace necplus {

namespace {

void require_finite(double x) {
  if (!std::isfinite(x)) throw Error(ErrorKind::InvalidInput, "non-finite argument");
}

double gev_log_pdf_unchecked(double x, const GevParams& p) {
  const double z = (x - p.location) / p.scale;
  if (std::abs(p.shape) < kGevShapeTolerance) {
    return -std::log(p.scale) - z - std::exp(-z);
  }
  const double t = 1.0 + p.shape * z;
  if (t <= 0.0) return -std::numeric_limits<double>::infinity();
  const double log_t = std::log(t);
  return -std::log(p.scale) - (1.0 / p.shape + 1.0) * log_t - std::exp(-log_t / p.shape);
}

bool in_support(double x, const GevParams& p) {
  if (std::abs(p.shape) < kGevShapeTolerance) return true;
  return 1.0 + p.shape * (x - p.location) / p.scale > 0.0;
}

}  // namespace

void GevParams::validate() const {
  if (!std::isfinite(location) || !std::isfinite(shape) || !std::isfinite(scale) || !(scale > 0.0)) {
    throw Error(ErrorKind::InvalidInput, "GEV parameters must be finite with scale > 0");
  }
}

double gev_cdf(double x, const GevParams& p) {
  require_finite(x);
  p.validate();
  const double z = (x - p.location) / p.scale;
  if (std::abs(p.shape) < kGevShapeTolerance) return std::exp(-std::exp(-z));
  const double t = 1.0 + p.shape * z;
  if (t <= 0.0) return p.shape > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::pow(t, -1.0 / p.shape));
}

double gev_pdf(double x, const GevParams& p) {
  require_finite(x);
  p.validate();
  const double lp = gev_log_pdf_unchecked(x, p);
  return std::isfinite(lp) ? std::exp(lp) : 0.0;
}

double gev_quantile(double u, const GevParams& p) {
  p.validate();
  if (!(u > 0.0 && u < 1.0)) throw Error(ErrorKind::InvalidInput, "quantile level must be in (0,1)");
  const double y = -std::log(u);
  if (std::abs(p.shape) < kGevShapeTolerance) return p.location - p.scale * std::log(y);
  return p.location + p.scale * (std::pow(y, -p.shape) - 1.0) / p.shape;
}

GevParams fit_gev(std::span<const double> xs) {
  if (xs.size() < 50) {
    throw Error(ErrorKind::InvalidInput, "GEV fit needs at least 50 samples, got " +
                                             std::to_string(xs.size()));
  }
  for (double x : xs) require_finite(x);
  GaussianParams moments;
  try {
    moments = fit_gaussian(xs);
  } catch (const Error&) {
    throw Error(ErrorKind::FitFailure, "GEV fit on constant sample");
  }

  constexpr double kEulerGamma = 0.5772156649015329;
  const double scale0 = moments.scale * std::sqrt(6.0) / std::numbers::pi;
  const double loc0 = moments.location - kEulerGamma * scale0;

  auto nll = [&](const std::array<double, 3>& theta) {
    const GevParams p{theta[0], std::exp(theta[1]), theta[2]};
    if (!std::isfinite(p.scale) || !(p.scale > 0.0)) return std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (double x : xs) {
      const double lp = gev_log_pdf_unchecked(x, p);
      if (!std::isfinite(lp)) return std::numeric_limits<double>::infinity();
      total -= lp;
    }
    return total;
  };

  std::array<double, 3> start{loc0, std::log(scale0), 0.0};
  std::array<double, 3> step{0.2 * scale0, 0.2, 0.1};
  auto result = detail::nelder_mead<3>(nll, start, step);
  // Restart from the optimum; a collapsed simplex can stall short of it.
  for (int restart = 0; restart < 3; ++restart) {
    const double prev = result.value;
    result = detail::nelder_mead<3>(nll, result.point, {0.05 * scale0, 0.05, 0.02});
    if (std::abs(prev - result.value) <= 1e-10 * std::abs(prev)) break;
  }

  const GevParams fitted{result.point[0], std::exp(result.point[1]), result.point[2]};
  const bool covers = std::all_of(xs.begin(), xs.end(), [&](double x) { return in_support(x, fitted); });
  if (!std::isfinite(result.value) || !covers) {
    std::ostringstream msg;
    msg << "GEV likelihood search failed (nll=" << result.value << ", location=" << fitted.location
        << ", scale=" << fitted.scale << ", shape=" << fitted.shape
        << ", iterations=" << result.iterations << ")";
    throw Error(ErrorKind::FitFailure, msg.str());
  }
  return fitted;
}

GaussianParams fit_gaussian(std::span<const double> xs) {
  if (xs.empty()) throw Error(ErrorKind::InvalidInput, "Gaussian fit on empty sample");
  double sum = 0.0;
  for (double x : xs) {
    require_finite(x);
    sum += x;
  }
  const double mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  const double sd = std::sqrt(sq / static_cast<double>(xs.size()));
  if (!(sd > 0.0)) throw Error(ErrorKind::FitFailure, "Gaussian fit has zero scale");
  return {mean, sd};
}

double gaussian_pdf(double x, const GaussianParams& p) {
  const double z = (x - p.location) / p.scale;
  return std::exp(-0.5 * z * z) / (p.scale * std::sqrt(2.0 * std::numbers::pi));
}

double quantile(std::span<const double> xs, double q) {
  if (xs.empty()) throw Error(ErrorKind::InvalidInput, "quantile of empty sample");
  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::size_t freedman_diaconis_bins(std::span<const double> xs) {
  constexpr std::size_t kMinBins = 20;
  if (xs.size() < 2) return kMinBins;
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  const double iqr = quantile(xs, 0.75) - quantile(xs, 0.25);
  if (!(iqr > 0.0) || !(*hi > *lo)) return kMinBins;
  const double width = 2.0 * iqr / std::cbrt(static_cast<double>(xs.size()));
  const double bins = std::ceil((*hi - *lo) / width);
  return std::max(kMinBins, static_cast<std::size_t>(std::min(bins, 1e7)));
}

double fit_quality(std::span<const double> xs, const std::function<double(double)>& pdf,
                   std::optional<std::size_t> bins) {
  if (xs.empty()) throw Error(ErrorKind::InvalidInput, "fit_quality on empty sample");
  const std::size_t nbins = bins.value_or(freedman_diaconis_bins(xs));
  if (nbins == 0) throw Error(ErrorKind::InvalidInput, "bin count must be positive");
  const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) throw Error(ErrorKind::InvalidInput, "fit_quality needs a non-degenerate range");
  const double width = (hi - lo) / static_cast<double>(nbins);

  std::vector<double> counts(nbins, 0.0);
  for (double x : xs) {
    auto b = static_cast<std::size_t>((x - lo) / width);
    if (b >= nbins) b = nbins - 1;
    counts[b] += 1.0;
  }
  const double norm = 1.0 / (static_cast<double>(xs.size()) * width);
  double sq = 0.0;
  for (std::size_t b = 0; b < nbins; ++b) {
    const double center = lo + (static_cast<double>(b) + 0.5) * width;
    const double diff = counts[b] * norm - pdf(center);
    sq += diff * diff;
  }
  return std::sqrt(sq / static_cast<double>(nbins));
}

KeyValues to_key_values(const GevParams& p) {
  KeyValues kv;
  kv.set("gev_location", p.location);
  kv.set("gev_scale", p.scale);
  kv.set("gev_shape", p.shape);
  return kv;
}

GevParams gev_from_key_values(const KeyValues& kv) {
  GevParams p{kv.get_double("gev_location"), kv.get_double("gev_scale"), kv.get_double("gev_shape")};
  p.validate();
  return p;
}

}  // namespace necplus
