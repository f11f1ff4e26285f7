// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "desk.hpp"
#include "helpers.hpp"
#include "necplus/distributions.hpp"
#include "necplus/error.hpp"
#include "necplus/eval.hpp"
#include "necplus/gmm.hpp"
#include "necplus/kv.hpp"
#include "necplus/nec.hpp"
#include "necplus/neural.hpp"
#include "necplus/run.hpp"
#include "necplus/sampling.hpp"
#include "necplus/series.hpp"

using namespace necplus;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

Outcome wilcoxon_exactness() {
  const auto t0 = Clock::now();
  std::vector<std::pair<double, double>> one_loss, sweep;
  for (int i = 1; i <= 9; ++i) {
    // the single loss sits at the smallest absolute difference
    one_loss.emplace_back(i == 1 ? 0.5 : -static_cast<double>(i), 0.0);
    sweep.emplace_back(0.0, 0.25 * i);
  }
  const auto a = wilcoxon_signed_rank(one_loss);
  const auto b = wilcoxon_signed_rank(sweep);
  const double elapsed = seconds_since(t0);
  const bool ok = a.statistic == 1.0 && a.p_value == 0.0078125 && a.p_value == 4.0 / 512.0 &&
                  b.statistic == 0.0 && b.p_value == 0.00390625 && b.p_value == 2.0 / 512.0 && elapsed < 1.0;
  return {ok, "T=" + fmt(a.statistic) + " p=" + fmt(a.p_value) + "; sweep T=" + fmt(b.statistic) +
                  " p=" + fmt(b.p_value) + " (" + fmt(elapsed) + " s)"};
}

SampleWindow random_window(std::mt19937_64& rng, std::size_t h, std::size_t channels, std::vector<bool> mask) {
  std::normal_distribution<double> n(0.0, 1.0);
  SampleWindow w;
  w.input.resize(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(channels));
  for (Eigen::Index i = 0; i < w.input.size(); ++i) w.input.data()[i] = n(rng);
  w.target.resize(static_cast<Eigen::Index>(mask.size()));
  for (Eigen::Index i = 0; i < w.target.size(); ++i) w.target(i) = n(rng);
  w.target_mask = std::move(mask);
  return w;
}

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  // central differences with step 1e-4; smaller steps are dominated by
  // roundoff on gradient entries near 1e-7
  constexpr double eps = 1e-4;
  std::mt19937_64 rng(2);
  const std::vector<bool> mask{true, false, false, true, false, true};
  std::vector<bool> complement(mask.size());
  std::transform(mask.begin(), mask.end(), complement.begin(), [](bool b) { return !b; });
  const auto w = random_window(rng, 12, 3, mask);
  const auto wc = random_window(rng, 12, 3, complement);

  double worst = 0.0;
  std::ostringstream detail;
  auto check = [&](const char* label, const nn::NetStack& net, const SampleWindow& win, const nn::LossSpec& spec) {
    const double e = nn::gradient_check(net, win, spec, eps);
    worst = std::max(worst, e);
    detail << label << '=' << fmt(e) << ' ';
  };
  check("N", nn::NetStack::create(nn::HeadKind::Normal, 3, 2, 8, 6, 1), w, nn::LossSpec::normal());
  check("E", nn::NetStack::create(nn::HeadKind::Extreme, 3, 2, 8, 6, 2), wc, nn::LossSpec::extreme());
  const auto c = nn::NetStack::create(nn::HeadKind::Classifier, 3, 2, 8, 6, 3);
  check("C(1,1)", c, w, nn::LossSpec::classifier(1.0, 1.0));
  check("C(2,0.5)", c, w, nn::LossSpec::classifier(2.0, 0.5));
  check("C(3,0.45)", c, w, nn::LossSpec::classifier(3.0, 0.45));
  const double elapsed = seconds_since(t0);
  detail << '(' << fmt(elapsed) << " s)";
  return {worst < 1e-4 && elapsed < 60.0, detail.str()};
}

Outcome selected_backprop() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> len(1, 12);
  std::normal_distribution<double> n(0.0, 1.0);
  std::bernoulli_distribution coin(0.4);
  std::size_t mismatches = 0, empty_masks = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto f = static_cast<std::size_t>(len(rng));
    Eigen::VectorXd pred(f), target(f);
    std::vector<bool> mask(f);
    std::size_t selected = 0;
    for (std::size_t i = 0; i < f; ++i) {
      pred(static_cast<Eigen::Index>(i)) = n(rng);
      target(static_cast<Eigen::Index>(i)) = n(rng);
      mask[i] = coin(rng);
      selected += mask[i];
    }
    empty_masks += selected == 0;

    // plain MSE against targets overwritten with the predictions where unselected
    Eigen::VectorXd overwritten = target;
    for (std::size_t i = 0; i < f; ++i) {
      if (!mask[i]) overwritten(static_cast<Eigen::Index>(i)) = pred(static_cast<Eigen::Index>(i));
    }
    double loss = 0.0;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f));
    if (selected > 0) {
      const double denom = static_cast<double>(selected);
      for (std::size_t i = 0; i < f; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const double d = pred(k) - overwritten(k);
        loss += d * d;
        grad(k) = 2.0 * d / denom;
      }
      loss /= denom;
    }

    const auto masked = nn::masked_mse_loss(pred, target, mask);
    bool same = masked.loss == loss;
    for (std::size_t i = 0; i < f; ++i) {
      same = same && masked.grad(static_cast<Eigen::Index>(i)) == grad(static_cast<Eigen::Index>(i));
    }

    // and through a network: identical output gradients give identical parameter gradients
    if (trial % 10 == 0) {
      const auto net = nn::NetStack::create(nn::HeadKind::Normal, 2, 1, 4, static_cast<Eigen::Index>(f), 50 + trial);
      Eigen::MatrixXd window = Eigen::MatrixXd::Random(8, 2);
      const Eigen::MatrixXd* in[] = {&window};
      nn::ForwardCache cache;
      const Eigen::VectorXd out = nn::forward_batch(net, in, &cache).col(0);
      auto ga = nn::backward(net, cache, nn::masked_mse_loss(out, target, mask).grad);
      Eigen::VectorXd g2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f));
      if (selected > 0) {
        for (std::size_t i = 0; i < f; ++i) {
          const auto k = static_cast<Eigen::Index>(i);
          g2(k) = 2.0 * (out(k) - (mask[i] ? target(k) : out(k))) / static_cast<double>(selected);
        }
      }
      auto gb = nn::backward(net, cache, g2);
      auto ba = nn::parameter_blocks(ga);
      auto bb = nn::parameter_blocks(gb);
      for (std::size_t b = 0; b < ba.size(); ++b) {
        same = same && std::equal(ba[b].values.begin(), ba[b].values.end(), bb[b].values.begin());
      }
    }
    mismatches += !same;
  }
  return {mismatches == 0, "100 cases, " + std::to_string(mismatches) + " mismatches (" +
                               std::to_string(empty_masks) + " with empty selection)"};
}

Outcome preprocessing_round_trip() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> step(0.0, 0.5 + static_cast<double>(seed % 7));
    std::uniform_int_distribution<std::size_t> len(2, 5000);
    std::vector<double> xs(len(rng));
    double x = 1000.0 * static_cast<double>(seed % 5);
    for (auto& v : xs) v = (x += step(rng));
    const auto s = difference_standardize(RawSeries::from_values(xs));
    const auto back = invert_transform(s.values, s, xs.front());
    for (std::size_t i = 0; i < back.size(); ++i) worst = std::max(worst, std::abs(back[i] - xs[i + 1]));
  }
  const auto kind = necplus::testing::error_kind_of(
      [] { difference_standardize(RawSeries::from_values(std::vector<double>(100, 3.25))); });
  const bool degenerate = kind == ErrorKind::DegenerateSeries;
  return {worst <= 1e-9 && degenerate, "50 series, max abs error " + fmt(worst) +
                                           (degenerate ? "; constant series rejected" : "; constant series accepted")};
}

Outcome em_properties() {
  std::size_t violations = 0, reinits = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    const std::size_t m = 2 + seed % 3;
    std::vector<double> xs(500 + 10 * seed);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double centre = 4.0 * static_cast<double>(i % m) - 3.0;
      xs[i] = centre + (0.5 + 0.25 * static_cast<double>(i % m)) * n(rng);
    }
    const auto model = fit_gmm(xs, m, seed);
    reinits += model.reinit_points.size();
    const auto& tr = model.log_likelihood_trace;
    for (std::size_t i = 1; i < tr.size(); ++i) {
      const bool restart = std::find(model.reinit_points.begin(), model.reinit_points.end(), i) !=
                           model.reinit_points.end();
      if (!restart && tr[i] < tr[i - 1] - 1e-9) ++violations;
    }
  }

  std::mt19937_64 rng(77);
  std::gamma_distribution<double> g(2.0, 3.0);
  std::vector<double> xs(1001);
  for (auto& x : xs) x = g(rng);
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  const auto one = fit_gmm(xs, 1, 0);
  const bool moments = one.weights[0] == 1.0 && one.means[0] == mean && one.variances[0] == sq / static_cast<double>(xs.size());

  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> two(4000);
  for (std::size_t i = 0; i < two.size(); ++i) two[i] = (i % 2 ? 5.0 : -5.0) + noise(rng);
  const auto m2 = fit_gmm(two, 2, 7);
  const std::size_t lo = m2.means[0] < m2.means[1] ? 0 : 1;
  const std::size_t hi = 1 - lo;
  const bool recovered = std::abs(m2.means[lo] + 5.0) < 0.1 && std::abs(m2.means[hi] - 5.0) < 0.1 &&
                         std::abs(m2.weights[lo] - 0.5) < 0.05 && std::abs(m2.weights[hi] - 0.5) < 0.05;
  return {violations == 0 && moments && recovered,
          "50 datasets, " + std::to_string(violations) + " decreases, " + std::to_string(reinits) +
              " re-initializations; M=1 moments " + (moments ? "exact" : "differ") + "; clusters at " +
              fmt(m2.means[lo]) + ", " + fmt(m2.means[hi]) + " weights " + fmt(m2.weights[lo]) + ", " +
              fmt(m2.weights[hi])};
}

Outcome gev_diagnostics() {
  const GevParams truth{0.0, 1.0, 0.3};
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> xs(100000);
  for (auto& x : xs) {
    double v = u(rng);
    while (v <= 0.0) v = u(rng);
    x = gev_quantile(v, truth);
  }
  const auto gev = fit_gev(xs);
  const auto gauss = fit_gaussian(xs);
  const double q_gev = fit_quality(xs, [&](double x) { return gev_pdf(x, gev); });
  const double q_gauss = fit_quality(xs, [&](double x) { return gaussian_pdf(x, gauss); });

  double fd_worst = 0.0;
  std::uniform_real_distribution<double> p(0.01, 0.99);
  for (const GevParams& g : {GevParams{0.5, 1.3, 0.2}, GevParams{0.0, 1.0, -0.3}, GevParams{2.0, 0.8, 0.0}}) {
    for (int i = 0; i < 100; ++i) {
      const double x = gev_quantile(p(rng), g);
      const double h = 1e-5;
      const double fd = (gev_cdf(x + h, g) - gev_cdf(x - h, g)) / (2.0 * h);
      fd_worst = std::max(fd_worst, std::abs(fd - gev_pdf(x, g)));
    }
  }
  double gumbel_worst = 0.0;
  for (int i = 0; i <= 200; ++i) {
    const double x = -5.0 + 0.05 * i;
    const double base = gev_cdf(x, {0.0, 1.0, 0.0});
    gumbel_worst = std::max(gumbel_worst, std::abs(gev_cdf(x, {0.0, 1.0, kGevShapeTolerance}) - base));
    gumbel_worst = std::max(gumbel_worst, std::abs(gev_cdf(x, {0.0, 1.0, -kGevShapeTolerance}) - base));
  }
  const bool ok = q_gauss > q_gev && fd_worst <= 1e-6 && gumbel_worst <= 1e-6;
  return {ok, "fit_quality gaussian=" + fmt(q_gauss) + " gev=" + fmt(q_gev) + " (xi_hat=" + fmt(gev.shape) +
                  "); pdf/cdf fd " + fmt(fd_worst) + "; gumbel continuity " + fmt(gumbel_worst)};
}

bool target_has_extreme(const ExtremeLabels& l, std::size_t origin, std::size_t h, std::size_t f) {
  for (std::size_t j = origin + h; j < origin + h + f; ++j) {
    if (l.labels[j]) return true;
  }
  return false;
}

Outcome sampling_contracts() {
  const std::size_t n = 5000, h = 24, f = 6;
  std::mt19937_64 rng(4);
  std::bernoulli_distribution hit(0.003);
  ExtremeLabels labels;
  labels.epsilon = 1.5;
  labels.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) labels.labels[i] = hit(rng);

  SplitSpec spec;
  spec.h = h;
  spec.f = f;
  spec.holdout_sections = 24;
  spec.val_ranges = {{3000, 3500}, {1500, 2000}};
  spec.test_ranges = {{4000, 5000}};
  spec.seed = 9;
  const auto split = make_split(n, labels, spec);

  std::vector<std::size_t> sections = split.val_sections;
  sections.insert(sections.end(), split.test_sections.begin(), split.test_sections.end());
  std::size_t overlap = 0;
  for (std::size_t i = 0; i + h + f <= n; ++i) {
    if (!split.train_mask[i]) continue;
    for (std::size_t s : sections) {
      if (i < s + f && s < i + h + f) ++overlap;
    }
  }

  const auto all = draw_sample_origins(split.train_mask, labels, {h, f, 2000, 1.0, 1, true});
  const auto full = std::count_if(all.begin(), all.end(), [&](std::size_t o) { return target_has_extreme(labels, o, h, f); });
  const auto some = draw_sample_origins(split.train_mask, labels, {h, f, 10000, 0.04, 2, true});
  const auto part = std::count_if(some.begin(), some.end(), [&](std::size_t o) { return target_has_extreme(labels, o, h, f); });
  const bool ok = overlap == 0 && static_cast<std::size_t>(full) == all.size() && all.size() == 2000 &&
                  some.size() == 10000 && part * 100 >= 4 * static_cast<std::ptrdiff_t>(some.size());
  return {ok, "OS=1 " + std::to_string(full) + "/" + std::to_string(all.size()) + "; OS=0.04 " +
                  std::to_string(part) + "/" + std::to_string(some.size()) + "; overlapping train windows " +
                  std::to_string(overlap)};
}

Outcome composition_identity() {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t f = 1 + static_cast<std::size_t>(trial % 12);
    std::vector<double> np(f), ep(f), cp(f);
    for (std::size_t i = 0; i < f; ++i) {
      np[i] = n(rng);
      ep[i] = 4.0 * n(rng);
      cp[i] = u(rng);
    }
    const double threshold = trial % 3 == 0 ? 0.5 : u(rng);
    const auto b = compose_forecast(np, ep, cp, {threshold, false}, {0.0, 1.0}, 10.0);
    for (std::size_t i = 0; i < f; ++i) {
      const bool gate = cp[i] > threshold;
      if (b.gate[i] != gate || b.composed[i] != (gate ? ep[i] : np[i])) ++bad;
    }
  }

  NecModels m;
  m.normal = nn::NetStack::create(nn::HeadKind::Normal, 3, 2, 8, 6, 1);
  m.extreme = nn::NetStack::create(nn::HeadKind::Extreme, 3, 2, 8, 6, 2);
  m.classifier = nn::NetStack::create(nn::HeadKind::Classifier, 3, 2, 8, 6, 3);
  m.classifier_channels = {0, 1, 2};
  m.classifier.fc.back().weight.setZero();
  m.classifier.fc.back().bias.setConstant(-1e3);  // sigmoid output is exactly 0
  std::size_t reduced_mismatch = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd history = Eigen::MatrixXd::Random(24, 3);
    const auto bundle = predict(m, history, 24, {0.1, 2.0}, 50.0, {});
    const Eigen::VectorXd direct = nn::forward(m.normal, history);
    const auto raw = invert_transform(std::vector<double>(direct.data(), direct.data() + direct.size()), {0.1, 2.0}, 50.0);
    for (std::size_t i = 0; i < 6; ++i) {
      if (bundle.c_prob[i] != 0.0 || bundle.composed[i] != direct(static_cast<Eigen::Index>(i)) ||
          bundle.raw_scale[i] != raw[i]) {
        ++reduced_mismatch;
      }
    }
  }
  return {bad == 0 && reduced_mismatch == 0, "1000 bundles, " + std::to_string(bad) + " gate/composition mismatches; " +
                                                 "zero classifier differs from N at " +
                                                 std::to_string(reduced_mismatch) + " of 120 points"};
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "necplus");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

double decomposition_gap(const MetricReport& r) {
  const auto sq = [](const std::optional<double>& v) { return v ? *v * *v : 0.0; };
  const double lhs = r.rmse_total * r.rmse_total * static_cast<double>(r.n_total);
  const double rhs = sq(r.rmse_normal) * static_cast<double>(r.n_normal) + sq(r.rmse_extreme) * static_cast<double>(r.n_extreme);
  return std::abs(lhs - rhs) / std::max(lhs, 1e-300);
}

Outcome desk_end_to_end() {
  const auto t0 = Clock::now();
  necplus::testing::TempDir dir("acceptance");
  const auto csv = (dir / "series.csv").string();
  const auto pre = (dir / "pre").string();
  const auto fail = [&](const std::string& step, const CliResult& r) {
    return Outcome{false, step + " exited " + std::to_string(r.code) + ": " + r.err};
  };

  auto r = cli_run({"synth", "--seed", "1", "--length", "20000", "--out", csv});
  if (r.code != 0) return fail("synth", r);
  r = cli_run({"preprocess", csv, pre});
  if (r.code != 0 || r.out.find("PASS") == std::string::npos) return fail("preprocess", r);
  r = cli_run({"fit-gmm", pre});
  if (r.code != 0) return fail("fit-gmm", r);

  NecConfig cfg = necplus::testing::desk_config();
  cfg.holdout_sections = 100;  // enough test extremes to compare the regressors
  cfg.input_csv = "series.csv";
  cfg.run_dir = "run";
  save_config(dir / "desk.cfg", cfg);
  r = cli_run({"train", (dir / "desk.cfg").string()});
  if (r.code != 0) return fail("train", r);
  const auto run_dir = (dir / "run").string();

  const auto table = read_series_table(csv);
  r = cli_run({"predict", run_dir, csv, format_timestamp(table.timestamps[19000])});
  if (r.code != 0) return fail("predict", r);
  r = cli_run({"evaluate", run_dir, "--baseline", "--wilcoxon", "--out", (dir / "report.csv").string()});
  if (r.code != 0) return fail("evaluate", r);
  const double elapsed = seconds_since(t0);

  const auto run = load_run(run_dir);
  const auto data = prepare_frozen_data(run.config, table, run.gmm, run.transform);
  const auto ev = evaluate_sections(forecast_sections(run, data, run.split.test_sections), false);
  const double gap = std::max({decomposition_gap(ev.nec_plus), decomposition_gap(ev.normal_model),
                               decomposition_gap(ev.extreme_model)});
  const std::string report = necplus::testing::slurp(dir / "report.csv");
  const bool report_matches = report.find(report_csv_row("run:nec_plus", cfg.sensor_id, ev.nec_plus)) != std::string::npos;

  const bool have_extremes = ev.extreme_rmse_on_extremes && ev.normal_rmse_on_extremes;
  const bool e_wins = have_extremes && *ev.extreme_rmse_on_extremes < *ev.normal_rmse_on_extremes;
  std::ostringstream d;
  d << ev.nec_plus.n_extreme << " extremes in " << ev.nec_plus.n_total << " test points; rmse on extremes E="
    << (have_extremes ? fmt(*ev.extreme_rmse_on_extremes) : "n/a")
    << " N=" << (have_extremes ? fmt(*ev.normal_rmse_on_extremes) : "n/a") << " (raw scale E="
    << (ev.extreme_model.rmse_extreme ? fmt(*ev.extreme_model.rmse_extreme) : "n/a")
    << " N=" << (ev.normal_model.rmse_extreme ? fmt(*ev.normal_model.rmse_extreme) : "n/a")
    << "); decomposition rel gap " << fmt(gap) << "; " << fmt(elapsed) << " s";
  const bool ok = elapsed < 600.0 && gap <= 1e-12 && report_matches && e_wins;
  return {ok, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"wilcoxon exactness", wilcoxon_exactness},
      {"gradient fidelity", gradient_fidelity},
      {"selected backpropagation oracle", selected_backprop},
      {"preprocessing round trip", preprocessing_round_trip},
      {"EM properties", em_properties},
      {"GEV diagnostics", gev_diagnostics},
      {"sampling contracts", sampling_contracts},
      {"composition identity", composition_identity},
      {"desk-scale end-to-end", desk_end_to_end},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << " " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
