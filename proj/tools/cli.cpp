#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "necplus/csv_io.hpp"
#include "necplus/error.hpp"
#include "necplus/eval.hpp"
#include "necplus/gmm.hpp"
#include "necplus/kv.hpp"
#include "necplus/nec.hpp"
#include "necplus/run.hpp"
#include "necplus/series.hpp"
#include "necplus/synth.hpp"

namespace necplus::cli {

namespace fs = std::filesystem;

namespace {

// Writes to `path`, or to `fallback` when the path is empty.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (path.empty()) {
      stream_ = &fallback;
      return;
    }
    file_.open(path, std::ios::binary);
    if (!file_) throw Error(ErrorKind::Io, "cannot write " + path);
    stream_ = &file_;
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

struct SynthArgs {
  std::uint64_t seed = 0;
  std::size_t length = 20000;
  double spike_rate = 0.005;
  double spike_shape = 0.3;
  std::string out;
  std::string spikes_out;
  bool no_rain = false;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthOptions o;
  o.seed = a.seed;
  o.length = a.length;
  o.spike_rate = a.spike_rate;
  o.spike_shape = a.spike_shape;
  o.with_rain = !a.no_rain;
  const auto result = generate_synthetic(o);
  write_series_table(a.out, result.table);
  const std::string sidecar = a.spikes_out.empty() ? a.out + ".spikes.csv" : a.spikes_out;
  write_spikes_csv(sidecar, result);
  out << "wrote " << a.length << " points and " << result.spikes.size() << " spike events to " << a.out
      << " (spikes: " << sidecar << ")\n";
  return 0;
}

struct PreprocessArgs {
  std::string input;
  std::string out_dir;
  double epsilon = 1.5;
  std::string column = "value";
  int max_degree = 3;
  std::size_t max_gap_hours = 14 * 24;
  std::size_t fit_points = 0;  // 0 = every difference
};

int cmd_preprocess(const PreprocessArgs& a, std::ostream& out) {
  const auto table = read_series_table(a.input);
  const auto raw = table.series(a.column, a.column);
  GapFillOptions gaps;
  gaps.max_degree = a.max_degree;
  gaps.max_gap = a.max_gap_hours;
  const auto filled = fill_gaps(raw, gaps);
  const auto missing = static_cast<std::size_t>(std::count(raw.missing.begin(), raw.missing.end(), true));

  const auto diffs = first_differences(filled);
  const std::size_t fit_count = a.fit_points == 0 ? diffs.size() : std::min(a.fit_points, diffs.size());
  const auto params = fit_transform(std::span<const double>(diffs.data(), fit_count));
  const auto standardized = difference_standardize(filled, params);
  const auto labels = label_extremes(standardized, a.epsilon);

  fs::create_directories(a.out_dir);
  write_standardized_csv(fs::path(a.out_dir) / "std.csv", standardized, labels);
  TransformMeta meta;
  meta.params = params;
  meta.epsilon = a.epsilon;
  meta.anchor = standardized.anchor;
  meta.first_timestamp = standardized.first_timestamp;
  meta.series_length = standardized.size();
  auto kv = to_key_values(meta);
  kv.set("fit_count", static_cast<std::int64_t>(fit_count));
  kv.set("filled_points", static_cast<std::int64_t>(missing));
  kv.set("extreme_count", static_cast<std::int64_t>(labels.extreme_count()));
  kv.write_file(fs::path(a.out_dir) / "transform.meta");

  const auto inverted = invert_transform(standardized.values, params, filled.values.front());
  double worst = 0.0;
  for (std::size_t i = 0; i < inverted.size(); ++i) {
    worst = std::max(worst, std::abs(inverted[i] - filled.values[i + 1]));
  }
  // relative to the series magnitude so that large levels do not fail on rounding
  double magnitude = 1.0;
  for (double v : filled.values) magnitude = std::max(magnitude, std::abs(v));
  const bool ok = worst <= 1e-9 * magnitude;
  out << "points=" << filled.size() << " filled=" << missing << " extremes=" << labels.extreme_count()
      << " fraction=" << format_double(labels.extreme_fraction()) << " location="
      << format_double(params.location) << " scale=" << format_double(params.scale) << '\n';
  out << "self-test round-trip max_abs_error=" << format_double(worst) << (ok ? " PASS" : " FAIL") << '\n';
  return ok ? 0 : 1;
}

struct FitGmmArgs {
  std::string dir;
  std::size_t components = 3;
  std::uint64_t seed = 0;
};

int cmd_fit_gmm(const FitGmmArgs& a, std::ostream& out) {
  const auto rows = read_standardized_csv(fs::path(a.dir) / "std.csv");
  std::size_t fit_count = rows.values.size();
  const auto meta_path = fs::path(a.dir) / "transform.meta";
  if (fs::exists(meta_path)) {
    const auto kv = KeyValues::read_file(meta_path);
    if (kv.contains("fit_count")) {
      fit_count = std::min<std::size_t>(fit_count, static_cast<std::size_t>(kv.get_int("fit_count")));
    }
  }
  const auto model = fit_gmm(std::span<const double>(rows.values.data(), fit_count), a.components, a.seed);
  to_key_values(model).write_file(fs::path(a.dir) / "gmm.model");
  const auto& trace = model.log_likelihood_trace;
  bool monotone = true;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const bool reinit = std::find(model.reinit_points.begin(), model.reinit_points.end(), i) !=
                        model.reinit_points.end();
    if (!reinit && trace[i] < trace[i - 1] - 1e-9) monotone = false;
  }
  out << "components=" << model.components() << " samples=" << fit_count << " iterations=" << trace.size()
      << " log_likelihood=" << format_double(trace.front()) << " -> " << format_double(trace.back())
      << " monotone=" << (monotone ? "yes" : "no") << " reinitializations=" << model.reinit_points.size()
      << '\n';
  for (std::size_t i = 0; i < model.components(); ++i) {
    out << "  component " << i << ": weight=" << format_double(model.weights[i])
        << " mean=" << format_double(model.means[i]) << " variance=" << format_double(model.variances[i])
        << '\n';
  }
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string run_dir;
  bool sequential = false;
};

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return (path.is_absolute() ? path : fs::absolute(base / path)).lexically_normal().string();
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  auto cfg = load_config(a.config);
  const auto base = fs::path(a.config).parent_path();
  if (!a.run_dir.empty()) cfg.run_dir = fs::absolute(a.run_dir).lexically_normal().string();
  cfg.input_csv = resolve(base, cfg.input_csv);
  cfg.run_dir = resolve(base, cfg.run_dir);
  if (a.sequential) cfg.parallel_training = false;
  if (cfg.input_csv.empty()) throw Error(ErrorKind::Config, "input_csv is not set");
  if (cfg.run_dir.empty()) throw Error(ErrorKind::Config, "run_dir is not set");
  const auto table = read_series_table(cfg.input_csv);
  const auto run = train_run(cfg, table, &out);
  save_run(cfg.run_dir, run);
  out << "run written to " << cfg.run_dir << '\n';
  return 0;
}

PreparedData frozen_input(const RunBundle& run, const std::string& input) {
  const std::string path = input.empty() ? run.config.input_csv : input;
  if (path.empty()) throw Error(ErrorKind::Config, "no input csv given and the run records none");
  return prepare_frozen_data(run.config, read_series_table(path), run.gmm, run.transform);
}

struct PredictArgs {
  std::string run_dir;
  std::string input;
  std::string origin;
  std::string out;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const auto run = load_run(a.run_dir);
  const auto data = frozen_input(run, a.input);
  const std::int64_t origin_ts = parse_timestamp(a.origin);
  const std::int64_t first = data.raw.timestamps.front();
  if (origin_ts < first || origin_ts > data.raw.timestamps.back()) {
    throw Error(ErrorKind::InvalidInput, "origin " + a.origin + " is outside the input series");
  }
  const auto origin = static_cast<std::size_t>((origin_ts - first) / kSecondsPerHour);
  const auto bundle = forecast_at(run, data, origin);
  Sink sink(a.out, out);
  *sink << "step,timestamp,n,e,c_prob,gate,composed,raw\n";
  for (std::size_t i = 0; i < bundle.composed.size(); ++i) {
    *sink << (i + 1) << ',' << format_timestamp(origin_ts + static_cast<std::int64_t>(i + 1) * kSecondsPerHour)
          << ',' << format_double(bundle.n_pred[i]) << ',' << format_double(bundle.e_pred[i]) << ','
          << format_double(bundle.c_prob[i]) << ',' << (bundle.gate[i] ? 1 : 0) << ','
          << format_double(bundle.composed[i]) << ',' << format_double(bundle.raw_scale[i]) << '\n';
  }
  return 0;
}

const std::vector<std::size_t>& holdout_set(const RunBundle& run, const std::string& set) {
  if (set == "test") return run.split.test_sections;
  if (set == "val") return run.split.val_sections;
  throw Error(ErrorKind::InvalidInput, "holdout set must be 'test' or 'val'");
}

struct EvaluateArgs {
  std::string run_dir;
  std::string input;
  std::string set = "test";
  std::string out;
  bool baseline = false;
  bool wilcoxon = false;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  const auto run = load_run(a.run_dir);
  const auto data = frozen_input(run, a.input);
  const auto ev = evaluate_sections(forecast_sections(run, data, holdout_set(run, a.set)), a.wilcoxon);
  const std::string id = fs::path(a.run_dir).lexically_normal().filename().string();
  const std::string sensor = run.config.sensor_id;
  Sink sink(a.out, out);
  *sink << report_csv_header() << '\n'
        << report_csv_row(id + ":nec_plus", sensor, ev.nec_plus) << '\n'
        << report_csv_row(id + ":n_model", sensor, ev.normal_model) << '\n'
        << report_csv_row(id + ":e_model", sensor, ev.extreme_model) << '\n';
  if (a.baseline) *sink << report_csv_row(id + ":persistence", sensor, ev.persistence) << '\n';

  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("n/a"); };
  err << "# " << a.set << " sections=" << ev.sections.size() << " points=" << ev.nec_plus.n_total
      << " extremes=" << ev.nec_plus.n_extreme << '\n';
  err << "# standardized rmse on extremes: n_model=" << opt(ev.normal_rmse_on_extremes)
      << " e_model=" << opt(ev.extreme_rmse_on_extremes) << '\n';
  err << "# standardized rmse on normals: n_model=" << opt(ev.normal_rmse_on_normals)
      << " e_model=" << opt(ev.extreme_rmse_on_normals) << '\n';
  if (a.wilcoxon) {
    if (ev.wilcoxon) {
      err << "# wilcoxon nec_plus vs persistence (per-section rmse): n=" << ev.wilcoxon->n
          << " T=" << format_double(ev.wilcoxon->statistic) << " p=" << format_double(ev.wilcoxon->p_value)
          << '\n';
    } else {
      err << "# wilcoxon skipped: " << ev.wilcoxon_note << '\n';
    }
  }
  return 0;
}

struct PlotArgs {
  std::string run_dir;
  std::size_t section = 0;
  std::string input;
  std::string set = "test";
  std::string out;
};

int cmd_plotdata(const PlotArgs& a, std::ostream& out) {
  const auto run = load_run(a.run_dir);
  const auto data = frozen_input(run, a.input);
  const auto& sections = holdout_set(run, a.set);
  if (a.section >= sections.size()) {
    throw Error(ErrorKind::InvalidInput, "section " + std::to_string(a.section) + " out of range; the " + a.set +
                                             " set has " + std::to_string(sections.size()));
  }
  const auto sf = forecast_sections(run, data, {sections[a.section]}).front();
  Sink sink(a.out, out);
  *sink << "timestamp,truth,nec_plus,baseline\n";
  const std::size_t first = sf.start + 1 - run.config.h;
  for (std::size_t r = first; r <= sf.start; ++r) {
    *sink << format_timestamp(data.raw.timestamps[r]) << ',' << format_double(data.raw.values[r]) << ",,\n";
  }
  for (std::size_t i = 0; i < sf.truth_raw.size(); ++i) {
    *sink << format_timestamp(sf.timestamps[i]) << ',' << format_double(sf.truth_raw[i]) << ','
          << format_double(sf.bundle.raw_scale[i]) << ',' << format_double(sf.persistence[i]) << '\n';
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Extreme-adaptive water level forecasting"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic hourly series with injected rises");
  synth_cmd->add_option("--seed", synth.seed, "Random seed");
  synth_cmd->add_option("--length", synth.length, "Number of hourly points")->check(CLI::Range(2, 100000000));
  synth_cmd->add_option("--spike-rate", synth.spike_rate, "Expected rise events per hour");
  synth_cmd->add_option("--spike-shape", synth.spike_shape, "GEV shape of the rise sizes");
  synth_cmd->add_option("--out", synth.out, "Output CSV")->required();
  synth_cmd->add_option("--spikes-out", synth.spikes_out, "Spike sidecar CSV (default <out>.spikes.csv)");
  synth_cmd->add_flag("--no-rain", synth.no_rain, "Omit the rain column");

  PreprocessArgs pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "Fill gaps, difference, standardize and label extremes");
  pre_cmd->add_option("input", pre.input, "Input CSV")->required();
  pre_cmd->add_option("out_dir", pre.out_dir, "Output directory")->required();
  pre_cmd->add_option("--epsilon", pre.epsilon, "Extreme threshold");
  pre_cmd->add_option("--column", pre.column, "Value column");
  pre_cmd->add_option("--max-degree", pre.max_degree, "Largest gap-fill polynomial degree")->check(CLI::Range(1, 10));
  pre_cmd->add_option("--max-gap-hours", pre.max_gap_hours, "Longest fillable gap");
  pre_cmd->add_option("--fit-points", pre.fit_points, "Fit location/scale on the first N differences");

  FitGmmArgs gmm;
  auto* gmm_cmd = app.add_subcommand("fit-gmm", "Fit the mixture indicator on a preprocessed directory");
  gmm_cmd->add_option("dir", gmm.dir, "Directory written by preprocess")->required();
  gmm_cmd->add_option("--components", gmm.components, "Mixture components M")->check(CLI::Range(1, 64));
  gmm_cmd->add_option("--seed", gmm.seed, "Seed for collapse re-initialization");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train the three models and write a run directory");
  train_cmd->add_option("config", train.config, "Run config file")->required();
  train_cmd->add_option("--run-dir", train.run_dir, "Override the configured run directory");
  train_cmd->add_flag("--sequential", train.sequential, "Train the members one after another");

  PredictArgs predict;
  auto* predict_cmd = app.add_subcommand("predict", "Forecast f steps after an origin timestamp");
  predict_cmd->add_option("run_dir", predict.run_dir, "Run directory")->required();
  predict_cmd->add_option("input", predict.input, "Input CSV")->required();
  predict_cmd->add_option("origin", predict.origin, "Timestamp of the last observed value")->required();
  predict_cmd->add_option("--out", predict.out, "Output CSV (default stdout)");

  EvaluateArgs evaluate;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score the run on its holdout sections");
  eval_cmd->add_option("run_dir", evaluate.run_dir, "Run directory")->required();
  eval_cmd->add_option("--input", evaluate.input, "Input CSV (default: the training input)");
  eval_cmd->add_option("--set", evaluate.set, "Holdout set")->check(CLI::IsMember({"test", "val"}));
  eval_cmd->add_option("--out", evaluate.out, "Report CSV (default stdout)");
  eval_cmd->add_flag("--baseline", evaluate.baseline, "Add the persistence baseline row");
  eval_cmd->add_flag("--wilcoxon", evaluate.wilcoxon, "Signed-rank test on per-section RMSE");

  PlotArgs plot;
  auto* plot_cmd = app.add_subcommand("plotdata", "Export history, truth and forecasts for one section");
  plot_cmd->add_option("run_dir", plot.run_dir, "Run directory")->required();
  plot_cmd->add_option("section", plot.section, "Section number within the set")->required();
  plot_cmd->add_option("--input", plot.input, "Input CSV (default: the training input)");
  plot_cmd->add_option("--set", plot.set, "Holdout set")->check(CLI::IsMember({"test", "val"}));
  plot_cmd->add_option("--out", plot.out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*pre_cmd) return cmd_preprocess(pre, out);
    if (*gmm_cmd) return cmd_fit_gmm(gmm, out);
    if (*train_cmd) return cmd_train(train, out);
    if (*predict_cmd) return cmd_predict(predict, out);
    if (*eval_cmd) return cmd_evaluate(evaluate, out, err);
    if (*plot_cmd) return cmd_plotdata(plot, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: io: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace necplus::cli
