#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "necplus/kv.hpp"

namespace necplus {

/// Univariate Gaussian mixture.
struct GmmModel {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;
  // Total log-likelihood after every E-step, in order.
  std::vector<double> log_likelihood_trace;
  // Trace positions at which a collapsed component was re-initialized; the
  // trace is monotone between consecutive entries.
  std::vector<std::size_t> reinit_points;

  std::size_t components() const { return weights.size(); }
  double density(double x) const;
};

struct GmmOptions {
  std::size_t max_iterations = 500;
  double tolerance = 1e-7;
  double variance_floor = 1e-6;
};

/// EM fit. Means start at the (i - 0.5)/M sample quantiles, variances at the
/// sample variance and weights uniform, so the result depends on `seed`
/// only through collapse re-initialization.
GmmModel fit_gmm(std::span<const double> xs, std::size_t components, std::uint64_t seed,
                 const GmmOptions& options = {});

/// Mixture density sum_i w_i g(x | mu_i, var_i).
double gmm_indicator(const GmmModel& model, double x);
std::vector<double> gmm_indicator(const GmmModel& model, std::span<const double> xs);

KeyValues to_key_values(const GmmModel& model);
GmmModel gmm_from_key_values(const KeyValues& kv);

}  // namespace necplus
