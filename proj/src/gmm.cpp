#include "necplus/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "necplus/distributions.hpp"
#include "necplus/error.hpp"

namespace necplus {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// Fills `resp` (n x M, row-major) and returns the total log-likelihood.
double expectation(std::span<const double> xs, const GmmModel& m, std::vector<double>& resp) {
  const std::size_t k = m.components();
  std::vector<double> log_w(k);
  std::vector<double> log_norm(k);
  for (std::size_t i = 0; i < k; ++i) {
    log_w[i] = std::log(m.weights[i]);
    log_norm[i] = -0.5 * (kLog2Pi + std::log(m.variances[i]));
  }
  std::vector<double> lp(k);
  double total = 0.0;
  for (std::size_t n = 0; n < xs.size(); ++n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
      const double d = xs[n] - m.means[i];
      lp[i] = log_w[i] + log_norm[i] - 0.5 * d * d / m.variances[i];
      mx = std::max(mx, lp[i]);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += std::exp(lp[i] - mx);
    const double lse = mx + std::log(acc);
    total += lse;
    for (std::size_t i = 0; i < k; ++i) resp[n * k + i] = std::exp(lp[i] - lse);
  }
  return total;
}

}  // namespace

double GmmModel::density(double x) const { return gmm_indicator(*this, x); }

GmmModel fit_gmm(std::span<const double> xs, std::size_t components, std::uint64_t seed,
                 const GmmOptions& options) {
  if (components < 1) throw Error(ErrorKind::InvalidInput, "GMM needs at least one component");
  if (xs.size() < 10 * components) {
    throw Error(ErrorKind::InvalidInput, "GMM with " + std::to_string(components) +
                                             " components needs at least " +
                                             std::to_string(10 * components) + " samples");
  }
  for (double x : xs) {
    if (!std::isfinite(x)) throw Error(ErrorKind::InvalidInput, "non-finite sample in GMM fit");
  }
  {
    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    const auto distinct = static_cast<std::size_t>(
        std::unique(sorted.begin(), sorted.end()) - sorted.begin());
    if (components > distinct) {
      throw Error(ErrorKind::FitFailure, std::to_string(components) + " components but only " +
                                             std::to_string(distinct) + " distinct values");
    }
  }

  const std::size_t n = xs.size();
  const std::size_t k = components;
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  const double sample_var = std::max(sq / static_cast<double>(n), options.variance_floor);

  GmmModel m;
  m.weights.assign(k, 1.0 / static_cast<double>(k));
  m.variances.assign(k, sample_var);
  m.means.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    m.means[i] = quantile(xs, (static_cast<double>(i) + 0.5) / static_cast<double>(k));
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> resp(n * k);

  double ll = expectation(xs, m, resp);
  m.log_likelihood_trace.push_back(ll);
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    bool reinit = false;
    for (std::size_t i = 0; i < k; ++i) {
      double nk = 0.0;
      double sx = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        nk += resp[r * k + i];
        sx += resp[r * k + i] * xs[r];
      }
      const double mu = nk > 0.0 ? sx / nk : 0.0;
      double sv = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const double d = xs[r] - mu;
        sv += resp[r * k + i] * d * d;
      }
      const double var = nk > 0.0 ? sv / nk : 0.0;
      if (!(nk > 0.0) || !(var >= options.variance_floor)) {
        m.means[i] = xs[pick(rng)];
        m.variances[i] = sample_var;
        m.weights[i] = 1.0 / static_cast<double>(k);
        reinit = true;
        continue;
      }
      m.weights[i] = nk / static_cast<double>(n);
      m.means[i] = mu;
      m.variances[i] = var;
    }
    double wsum = 0.0;
    for (double w : m.weights) wsum += w;
    for (double& w : m.weights) w /= wsum;

    const double next = expectation(xs, m, resp);
    m.log_likelihood_trace.push_back(next);
    if (reinit) {
      m.reinit_points.push_back(m.log_likelihood_trace.size() - 1);
      ll = next;
      continue;
    }
    const double gain = next - ll;
    ll = next;
    if (gain < options.tolerance) break;
  }
  return m;
}

double gmm_indicator(const GmmModel& model, double x) {
  double total = 0.0;
  for (std::size_t i = 0; i < model.components(); ++i) {
    const double d = x - model.means[i];
    total += model.weights[i] * std::exp(-0.5 * d * d / model.variances[i]) /
             std::sqrt(2.0 * std::numbers::pi * model.variances[i]);
  }
  return total;
}

std::vector<double> gmm_indicator(const GmmModel& model, std::span<const double> xs) {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = gmm_indicator(model, xs[i]);
  return out;
}

KeyValues to_key_values(const GmmModel& model) {
  KeyValues kv;
  kv.set("format", std::string("necplus-gmm-1"));
  kv.set("components", static_cast<std::int64_t>(model.components()));
  kv.set("weights", model.weights);
  kv.set("means", model.means);
  kv.set("variances", model.variances);
  kv.set("iterations", static_cast<std::int64_t>(model.log_likelihood_trace.size()));
  if (!model.log_likelihood_trace.empty()) {
    kv.set("log_likelihood", model.log_likelihood_trace.back());
  }
  return kv;
}

GmmModel gmm_from_key_values(const KeyValues& kv) {
  if (kv.get("format") != "necplus-gmm-1") {
    throw Error(ErrorKind::Version, "unsupported GMM format '" + kv.get("format") + "'");
  }
  GmmModel m;
  const auto k = static_cast<std::size_t>(kv.get_int("components"));
  m.weights = kv.get_doubles("weights");
  m.means = kv.get_doubles("means");
  m.variances = kv.get_doubles("variances");
  if (m.weights.size() != k || m.means.size() != k || m.variances.size() != k) {
    throw Error(ErrorKind::Load, "GMM component arrays do not match 'components'");
  }
  if (kv.contains("log_likelihood")) m.log_likelihood_trace.push_back(kv.get_double("log_likelihood"));
  return m;
}

}  // namespace necplus
