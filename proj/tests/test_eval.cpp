#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "necplus/error.hpp"
#include "necplus/eval.hpp"

using namespace necplus;
using necplus::testing::error_kind_of;

namespace {

using Pairs = std::vector<std::pair<double, double>>;

// Independent oracle: O(n^2) average ranks and explicit sign enumeration.
double brute_force_p(const Pairs& pairs) {
  std::vector<double> d;
  for (const auto& [a, b] : pairs) {
    if (a - b != 0.0) d.push_back(a - b);
  }
  const std::size_t n = d.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double below = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) below += 1.0;
      if (std::abs(d[j]) == std::abs(d[i])) equal += 1.0;
    }
    rank[i] = below + (equal + 1.0) / 2.0;
  }
  double total = 0.0, wplus = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += rank[i];
    if (d[i] > 0) wplus += rank[i];
  }
  const double t = std::min(wplus, total - wplus);
  std::uint64_t hits = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1U) w += rank[i];
    }
    if (std::min(w, total - w) <= t) ++hits;
  }
  return static_cast<double>(hits) / std::ldexp(1.0, static_cast<int>(n));
}

}  // namespace

TEST_CASE("rmse and mape") {
  const std::vector<double> a{3.0, 4.0}, zero{0.0, 0.0};
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(a, zero) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
  const std::vector<double> truth{100.0, 100.0}, pred{101.0, 99.0};
  CHECK(mape(pred, truth) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(mape(truth, truth) == 0.0);

  const std::vector<double> t{5.0, 0.0, 2.0, 0.0};
  const std::vector<double> p{1.0, 1.0, 1.0, 1.0};
  try {
    mape(p, t);
    FAIL("expected zero denominator");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroDenominator);
    const std::string msg = e.what();
    CHECK(msg.find('1') != std::string::npos);
    CHECK(msg.find('3') != std::string::npos);
  }
  CHECK(error_kind_of([&] { rmse(std::vector<double>{1.0}, a); }) == ErrorKind::Dimension);
  CHECK(error_kind_of([&] { rmse(std::vector<double>{}, std::vector<double>{}); }) ==
        ErrorKind::Dimension);
}

TEST_CASE("rmse is scale equivariant") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> p(50), t(50), cp(50), ct(50);
  for (int i = 0; i < 50; ++i) {
    p[i] = n(rng);
    t[i] = n(rng);
  }
  for (double c : {-3.0, 0.5, 7.25}) {
    for (int i = 0; i < 50; ++i) {
      cp[i] = c * p[i];
      ct[i] = c * t[i];
    }
    CHECK(rmse(cp, ct) == doctest::Approx(std::abs(c) * rmse(p, t)).epsilon(1e-14));
  }
}

TEST_CASE("per-class report") {
  // errors: 1, -2 on normals; 3, 4 on extremes
  const std::vector<double> truth{10.0, 20.0, 30.0, 40.0};
  const std::vector<double> pred{11.0, 18.0, 33.0, 44.0};
  const auto r = per_class_report(pred, truth, {false, false, true, true});
  CHECK(r.n_total == 4);
  CHECK(r.n_normal == 2);
  CHECK(r.n_extreme == 2);
  CHECK(r.rmse_total == doctest::Approx(std::sqrt(30.0 / 4.0)).epsilon(1e-15));
  CHECK(*r.rmse_normal == doctest::Approx(std::sqrt(2.5)).epsilon(1e-15));
  CHECK(*r.rmse_extreme == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
  CHECK(r.mape == doctest::Approx((0.1 + 0.1 + 0.1 + 0.1) / 4.0 * 100.0).epsilon(1e-14));

  const auto normal_only = per_class_report(pred, truth, std::vector<bool>(4, false));
  CHECK_FALSE(normal_only.rmse_extreme.has_value());
  CHECK(normal_only.n_extreme == 0);
  CHECK(*normal_only.rmse_normal == normal_only.rmse_total);

  const auto row = report_csv_row("r", "s", normal_only);
  const auto header = report_csv_header();
  CHECK(std::count(row.begin(), row.end(), ',') == std::count(header.begin(), header.end(), ','));
  CHECK(row.find(",,") != std::string::npos);

  CHECK(error_kind_of([&] { per_class_report(pred, truth, {true}); }) == ErrorKind::Dimension);
}

TEST_CASE("per-class decomposition identity") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::bernoulli_distribution coin(0.2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(97), t(97);
    std::vector<bool> ext(97);
    for (int i = 0; i < 97; ++i) {
      t[i] = 100.0 + n(rng);
      p[i] = t[i] + 3.0 * n(rng);
      ext[i] = coin(rng);
    }
    const auto r = per_class_report(p, t, ext);
    REQUIRE(r.n_normal + r.n_extreme == r.n_total);
    const double lhs = r.rmse_total * r.rmse_total * static_cast<double>(r.n_total);
    const double rhs = r.rmse_normal.value_or(0.0) * r.rmse_normal.value_or(0.0) * static_cast<double>(r.n_normal) +
                       r.rmse_extreme.value_or(0.0) * r.rmse_extreme.value_or(0.0) * static_cast<double>(r.n_extreme);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("wilcoxon reference cases") {
  SUBCASE("one loss at the smallest rank") {
    Pairs pairs;
    for (int i = 1; i <= 9; ++i) pairs.emplace_back(0.0, i == 1 ? -0.5 : static_cast<double>(i));
    const auto r = wilcoxon_signed_rank(pairs);
    CHECK(r.n == 9);
    CHECK(r.statistic == 1.0);
    CHECK(r.p_value == 4.0 / 512.0);
    CHECK(r.p_value == 0.0078125);
  }
  SUBCASE("clean sweep") {
    Pairs pairs;
    for (int i = 1; i <= 9; ++i) pairs.emplace_back(1.0, 1.0 + 0.3 * i);
    const auto r = wilcoxon_signed_rank(pairs);
    CHECK(r.statistic == 0.0);
    CHECK(r.p_value == 0.00390625);
    CHECK(r.w_plus + r.w_minus == 45.0);
  }
  SUBCASE("zero differences are dropped") {
    Pairs pairs{{1, 1}, {2, 3}, {5, 5}, {1, 4}};
    const auto r = wilcoxon_signed_rank(pairs);
    CHECK(r.n == 2);
    CHECK(r.p_value == 0.5);
  }
  SUBCASE("errors") {
    const Pairs zeros{{1, 1}, {2, 2}};
    CHECK(error_kind_of([&] { wilcoxon_signed_rank(zeros); }) == ErrorKind::UndefinedTest);
    Pairs many;
    for (int i = 0; i < 26; ++i) many.emplace_back(0.0, i + 1.0);
    CHECK(error_kind_of([&] { wilcoxon_signed_rank(many); }) == ErrorKind::InvalidInput);
  }
}

TEST_CASE("wilcoxon matches brute-force enumeration") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> len(1, 14);
  std::uniform_int_distribution<int> small(-4, 4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    Pairs pairs;
    const int k = len(rng);
    const bool tied = trial % 2 == 0;
    for (int i = 0; i < k; ++i) {
      // integer differences force ties and zeros
      if (tied) pairs.emplace_back(static_cast<double>(small(rng)), 0.0);
      else pairs.emplace_back(n(rng), n(rng));
    }
    const bool all_zero = std::all_of(pairs.begin(), pairs.end(), [](auto& p) { return p.first == p.second; });
    if (all_zero) continue;
    CAPTURE(trial);
    CHECK(wilcoxon_signed_rank(pairs).p_value == brute_force_p(pairs));
  }
}

TEST_CASE("wilcoxon is invariant under increasing affine transforms") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Pairs pairs, moved;
    for (int i = 0; i < 10; ++i) {
      const double a = std::round(8.0 * n(rng)), b = std::round(8.0 * n(rng));
      pairs.emplace_back(a, b);
      moved.emplace_back(4.0 * a + 17.0, 4.0 * b + 17.0);
    }
    if (std::all_of(pairs.begin(), pairs.end(), [](auto& p) { return p.first == p.second; })) continue;
    const auto x = wilcoxon_signed_rank(pairs);
    const auto y = wilcoxon_signed_rank(moved);
    CHECK(x.p_value == y.p_value);
    CHECK(x.n == y.n);
  }
}

TEST_CASE("persistence baseline") {
  const std::vector<double> flat(10, 3.5);
  const auto f = persistence_forecast(flat, 4);
  CHECK(f == std::vector<double>(4, 3.5));

  const std::vector<double> hist{1.0, 2.0, 7.0};
  CHECK(persistence_forecast(hist, 1) == std::vector<double>{7.0});

  for (double slope : {0.5, -2.0, 3.0}) {
    for (std::size_t steps : {1u, 6u, 72u}) {
      std::vector<double> series(40 + steps);
      for (std::size_t i = 0; i < series.size(); ++i) series[i] = slope * static_cast<double>(i);
      const std::span<const double> history(series.data(), 40);
      const std::vector<double> truth(series.begin() + 40, series.end());
      double mean_sq = 0.0;
      for (std::size_t k = 1; k <= steps; ++k) mean_sq += static_cast<double>(k * k);
      mean_sq /= static_cast<double>(steps);
      CHECK(rmse(persistence_forecast(history, steps), truth) ==
            doctest::Approx(std::abs(slope) * std::sqrt(mean_sq)).epsilon(1e-13));
    }
  }
  CHECK(error_kind_of([&] { persistence_forecast(std::vector<double>{}, 3); }) == ErrorKind::InvalidInput);
}
