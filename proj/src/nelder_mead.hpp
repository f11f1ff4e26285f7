#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>

namespace necplus::detail {

template <std::size_t N>
struct SimplexResult {
  std::array<double, N> point{};
  double value = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
};

// Standard Nelder-Mead (reflect 1, expand 2, contract 0.5, shrink 0.5).
// Infinite objective values are treated as worse than any finite one.
template <std::size_t N, typename F>
SimplexResult<N> nelder_mead(F&& objective, const std::array<double, N>& start,
                             const std::array<double, N>& step, std::size_t max_iter = 5000,
                             double ftol = 1e-12) {
  using Point = std::array<double, N>;
  std::array<Point, N + 1> simplex;
  std::array<double, N + 1> values;
  simplex[0] = start;
  for (std::size_t i = 0; i < N; ++i) {
    simplex[i + 1] = start;
    simplex[i + 1][i] += step[i];
  }
  for (std::size_t i = 0; i <= N; ++i) values[i] = objective(simplex[i]);

  std::array<std::size_t, N + 1> order;
  SimplexResult<N> result;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    result.iterations = iter + 1;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[N - 1];

    if (std::isfinite(values[worst]) &&
        std::abs(values[worst] - values[best]) <=
            ftol * (std::abs(values[best]) + std::abs(values[worst]) + 1e-300)) {
      break;
    }

    Point centroid{};
    for (std::size_t i = 0; i <= N; ++i) {
      if (i == worst) continue;
      for (std::size_t d = 0; d < N; ++d) centroid[d] += simplex[i][d] / static_cast<double>(N);
    }
    auto along = [&](double t) {
      Point p;
      for (std::size_t d = 0; d < N; ++d) p[d] = centroid[d] + t * (simplex[worst][d] - centroid[d]);
      return p;
    };

    const Point reflected = along(-1.0);
    const double f_reflected = objective(reflected);
    if (f_reflected < values[best]) {
      const Point expanded = along(-2.0);
      const double f_expanded = objective(expanded);
      if (f_expanded < f_reflected) {
        simplex[worst] = expanded;
        values[worst] = f_expanded;
      } else {
        simplex[worst] = reflected;
        values[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < values[second]) {
      simplex[worst] = reflected;
      values[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected < values[worst];
    const Point contracted = along(outside ? -0.5 : 0.5);
    const double f_contracted = objective(contracted);
    if (f_contracted < (outside ? f_reflected : values[worst])) {
      simplex[worst] = contracted;
      values[worst] = f_contracted;
      continue;
    }
    for (std::size_t i = 0; i <= N; ++i) {
      if (i == best) continue;
      for (std::size_t d = 0; d < N; ++d) {
        simplex[i][d] = simplex[best][d] + 0.5 * (simplex[i][d] - simplex[best][d]);
      }
      values[i] = objective(simplex[i]);
    }
  }
  const auto best_it = std::min_element(values.begin(), values.end());
  result.value = *best_it;
  result.point = simplex[static_cast<std::size_t>(best_it - values.begin())];
  return result;
}

}  // namespace necplus::detail
