#include "necplus/run.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "necplus/error.hpp"
#include "necplus/training.hpp"

namespace necplus {

namespace {

std::size_t clamp_index(std::int64_t ts, std::int64_t first, std::size_t length) {
  if (ts <= first) return 0;
  const std::int64_t steps = (ts - first + kSecondsPerHour - 1) / kSecondsPerHour;
  return static_cast<std::size_t>(std::min<std::int64_t>(steps, static_cast<std::int64_t>(length)));
}

IndexRange fraction_range(double a, double b, std::size_t n) {
  return {static_cast<std::size_t>(a * static_cast<double>(n)),
          static_cast<std::size_t>(b * static_cast<double>(n))};
}

std::vector<bool> holdout_target_mask(std::size_t n, const Split& split, std::size_t f) {
  std::vector<bool> held(n, false);
  for (const auto* sections : {&split.val_sections, &split.test_sections}) {
    for (std::size_t s : *sections) {
      for (std::size_t i = s; i < std::min(n, s + f); ++i) held[i] = true;
    }
  }
  return held;
}

RawSeries load_column(const SeriesTable& table, const std::string& column, const NecConfig& cfg,
                      const std::string& id) {
  if (!table.has_column(column)) {
    throw Error(ErrorKind::Schema, "input has no column '" + column + "'");
  }
  GapFillOptions gaps;
  gaps.max_degree = cfg.gap_max_degree;
  gaps.max_gap = cfg.gap_max_hours;
  return fill_gaps(table.series(column, id), gaps);
}

std::vector<RawSeries> load_exogenous(const SeriesTable& table, const NecConfig& cfg) {
  std::vector<RawSeries> out;
  for (const auto& col : cfg.exogenous_columns) out.push_back(load_column(table, col, cfg, col));
  return out;
}

void require_file(const std::filesystem::path& p) {
  if (!std::filesystem::is_regular_file(p)) {
    throw Error(ErrorKind::Load, "run file missing: " + p.string());
  }
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::Load, "cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::optional<double> class_rmse(const std::vector<double>& pred, const std::vector<double>& truth,
                                 const std::vector<bool>& labels, bool extreme) {
  double sse = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (labels[i] != extreme) continue;
    sse += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    ++count;
  }
  if (count == 0) return std::nullopt;
  return std::sqrt(sse / static_cast<double>(count));
}

}  // namespace

KeyValues to_key_values(const TransformMeta& m) {
  KeyValues kv;
  kv.set("format", std::string("necplus-transform-1"));
  kv.set("location", m.params.location);
  kv.set("scale", m.params.scale);
  kv.set("epsilon", m.epsilon);
  kv.set("anchor", m.anchor);
  kv.set("first_timestamp", format_timestamp(m.first_timestamp));
  kv.set("series_length", static_cast<std::int64_t>(m.series_length));
  std::string names;
  for (const auto& [name, p] : m.exogenous) names += (names.empty() ? "" : ",") + name;
  kv.set("exogenous_columns", names);
  for (const auto& [name, p] : m.exogenous) {
    kv.set("exogenous." + name + ".location", p.location);
    kv.set("exogenous." + name + ".scale", p.scale);
  }
  return kv;
}

TransformMeta transform_meta_from_key_values(const KeyValues& kv) {
  if (kv.find("format") != std::optional<std::string>("necplus-transform-1")) {
    throw Error(ErrorKind::Version, "unsupported transform metadata format");
  }
  TransformMeta m;
  m.params = {kv.get_double("location"), kv.get_double("scale")};
  m.epsilon = kv.get_double("epsilon");
  m.anchor = kv.get_double("anchor");
  m.first_timestamp = parse_timestamp(kv.get("first_timestamp"));
  m.series_length = static_cast<std::size_t>(kv.get_int("series_length"));
  const auto names = trim(kv.get("exogenous_columns"));
  if (!names.empty()) {
    for (const auto& raw : split(names, ',')) {
      const auto name = trim(raw);
      m.exogenous.push_back({name, {kv.get_double("exogenous." + name + ".location"),
                                    kv.get_double("exogenous." + name + ".scale")}});
    }
  }
  return m;
}

IndexRange to_index_range(const TimeRange& range, std::int64_t first_timestamp, std::size_t length) {
  return {clamp_index(range.begin, first_timestamp, length), clamp_index(range.end, first_timestamp, length)};
}

SplitSpec make_split_spec(const NecConfig& cfg, std::int64_t first_timestamp, std::size_t length) {
  SplitSpec spec;
  spec.h = cfg.h;
  spec.f = cfg.f;
  spec.holdout_sections = cfg.holdout_sections;
  spec.seed = cfg.split_seed;
  for (const auto& r : cfg.val_ranges) spec.val_ranges.push_back(to_index_range(r, first_timestamp, length));
  for (const auto& r : cfg.test_ranges) spec.test_ranges.push_back(to_index_range(r, first_timestamp, length));
  // two ranges per set, latest data held out
  if (spec.val_ranges.empty()) {
    spec.val_ranges = {fraction_range(0.72, 0.78, length), fraction_range(0.84, 0.90, length)};
  }
  if (spec.test_ranges.empty()) {
    spec.test_ranges = {fraction_range(0.90, 0.95, length), fraction_range(0.95, 1.0, length)};
  }
  return spec;
}

PreparedData prepare_training_data(const NecConfig& cfg, const SeriesTable& table) {
  cfg.validate();
  PreparedData d;
  d.raw = load_column(table, cfg.value_column, cfg, cfg.sensor_id);
  const auto exog_raw = load_exogenous(table, cfg);
  if (d.raw.size() < cfg.h + cfg.f + 2) {
    throw Error(ErrorKind::InvalidInput, "series is shorter than one h+f window");
  }
  const std::size_t n = d.raw.size() - 1;
  const std::int64_t first = d.raw.timestamps[1];

  d.split = make_split(n, ExtremeLabels{}, make_split_spec(cfg, first, n));
  const auto held = holdout_target_mask(n, d.split, cfg.f);
  const auto diffs = first_differences(d.raw);
  std::vector<double> fit_diffs;
  for (std::size_t i = 0; i < n; ++i) {
    if (!held[i]) fit_diffs.push_back(diffs[i]);
  }
  const auto params = fit_transform(fit_diffs);
  d.standardized = difference_standardize(d.raw, params);
  d.labels = label_extremes(d.standardized, cfg.epsilon);

  std::vector<double> train_values;
  for (std::size_t i = 0; i < n; ++i) {
    if (!held[i]) train_values.push_back(d.standardized.values[i]);
  }
  d.gmm = fit_gmm(train_values, cfg.gmm_components, cfg.gmm_seed);

  d.meta.params = params;
  d.meta.epsilon = cfg.epsilon;
  d.meta.anchor = d.raw.values.back();
  d.meta.first_timestamp = first;
  d.meta.series_length = n;
  std::vector<ExogenousSeries> exog;
  for (const auto& ex : exog_raw) {
    std::vector<double> fit;
    for (std::size_t i = 0; i < n; ++i) {
      if (!held[i]) fit.push_back(ex.values[i + 1]);
    }
    TransformParams p;
    try {
      p = fit_transform(fit);
    } catch (const Error& e) {
      throw Error(e.kind(), "exogenous column '" + ex.sensor_id + "': " + e.detail());
    }
    d.meta.exogenous.push_back({ex.sensor_id, p});
    exog.push_back(standardize_exogenous(ex, p));
  }
  d.features = assemble_features(d.standardized, d.gmm, exog);
  return d;
}

PreparedData prepare_frozen_data(const NecConfig& cfg, const SeriesTable& table, const GmmModel& gmm,
                                 const TransformMeta& meta) {
  PreparedData d;
  d.raw = load_column(table, cfg.value_column, cfg, cfg.sensor_id);
  if (d.raw.size() < 2) throw Error(ErrorKind::InvalidInput, "series needs at least two points");
  const auto exog_raw = load_exogenous(table, cfg);
  if (exog_raw.size() != meta.exogenous.size()) {
    throw Error(ErrorKind::Schema, "run was trained with " + std::to_string(meta.exogenous.size()) +
                                       " exogenous channels");
  }
  d.standardized = difference_standardize(d.raw, meta.params);
  d.labels = label_extremes(d.standardized, meta.epsilon);
  d.gmm = gmm;
  d.meta = meta;
  std::vector<ExogenousSeries> exog;
  for (std::size_t k = 0; k < exog_raw.size(); ++k) {
    exog.push_back(standardize_exogenous(exog_raw[k], meta.exogenous[k].second));
  }
  d.features = assemble_features(d.standardized, d.gmm, exog);
  return d;
}

RunBundle train_run(const NecConfig& cfg, const SeriesTable& table, std::ostream* progress) {
  auto data = prepare_training_data(cfg, table);
  if (progress) {
    *progress << "series " << cfg.sensor_id << ": " << data.raw.size() << " points, "
              << data.labels.extreme_count() << " extremes at epsilon " << format_double(cfg.epsilon)
              << ", " << data.split.val_sections.size() << " val and " << data.split.test_sections.size()
              << " test sections\n";
  }
  auto trained = train_nec(cfg, data.features, data.labels, data.split);
  RunBundle run;
  run.config = cfg;
  run.gmm = data.gmm;
  run.transform = data.meta;
  run.models = std::move(trained.models);
  run.split = data.split;
  std::ostringstream log;
  const std::pair<const char*, const MemberTraining*> members[] = {
      {"normal", &trained.normal}, {"extreme", &trained.extreme}, {"classifier", &trained.classifier}};
  for (const auto& [name, m] : members) {
    log << "# " << name << " samples=" << m->samples << " extreme_samples=" << m->extreme_samples
        << " best_epoch=" << m->result.best_epoch << " early_stopped=" << (m->result.early_stopped ? 1 : 0)
        << '\n'
        << nn::format_log(m->result.log);
    if (progress) {
      *progress << name << ": " << m->samples << " samples (" << m->extreme_samples
                << " with extremes), " << m->result.log.size() << " epochs, best epoch "
                << m->result.best_epoch << '\n';
    }
  }
  run.train_log = log.str();
  return run;
}

void save_run(const std::filesystem::path& dir, const RunBundle& run) {
  std::filesystem::create_directories(dir);
  save_config(dir / "config", run.config);
  to_key_values(run.gmm).write_file(dir / "gmm.model");
  to_key_values(run.transform).write_file(dir / "transform.meta");
  const auto hash = config_hash(run.config);
  std::vector<std::size_t> all(run.models.normal.input_dim());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  nn::save_checkpoint(dir / "n.ckpt", {run.models.normal, member_train_config(run.config, run.config.normal),
                                       all, hash});
  nn::save_checkpoint(dir / "e.ckpt", {run.models.extreme,
                                       member_train_config(run.config, run.config.extreme), all, hash});
  nn::save_checkpoint(dir / "c.ckpt", {run.models.classifier,
                                       member_train_config(run.config, run.config.classifier),
                                       run.models.classifier_channels, hash});
  std::ofstream log(dir / "train.log", std::ios::binary);
  log << run.train_log;
  if (!log) throw Error(ErrorKind::Io, "cannot write " + (dir / "train.log").string());
  write_split_csv(dir / "split.csv", run.split);
}

RunBundle load_run(const std::filesystem::path& dir) {
  for (const char* name : {"config", "gmm.model", "transform.meta", "n.ckpt", "e.ckpt", "c.ckpt", "train.log",
                           "split.csv"}) {
    require_file(dir / name);
  }
  RunBundle run;
  run.config = load_config(dir / "config");
  const auto hash = config_hash(run.config);
  run.gmm = gmm_from_key_values(KeyValues::read_file(dir / "gmm.model"));
  run.transform = transform_meta_from_key_values(KeyValues::read_file(dir / "transform.meta"));
  const std::pair<const char*, nn::HeadKind> members[] = {
      {"n.ckpt", nn::HeadKind::Normal}, {"e.ckpt", nn::HeadKind::Extreme}, {"c.ckpt", nn::HeadKind::Classifier}};
  nn::NetStack* targets[] = {&run.models.normal, &run.models.extreme, &run.models.classifier};
  for (int i = 0; i < 3; ++i) {
    auto ckpt = nn::load_checkpoint(dir / members[i].first);
    if (ckpt.config_hash != hash) {
      throw Error(ErrorKind::Version, std::string(members[i].first) + " was trained with config " +
                                          ckpt.config_hash + ", the run config hashes to " + hash);
    }
    if (ckpt.model.head != members[i].second) {
      throw Error(ErrorKind::Load, std::string(members[i].first) + " holds a " +
                                       std::string(nn::head_kind_name(ckpt.model.head)) + " model");
    }
    if (i == 2) run.models.classifier_channels = ckpt.input_channels;
    *targets[i] = std::move(ckpt.model);
  }
  run.train_log = read_text(dir / "train.log");
  run.split = read_split_csv(dir / "split.csv", run.transform.series_length, run.config.h, run.config.f);
  return run;
}

GateOptions gate_options(const NecConfig& cfg) { return {cfg.threshold, cfg.soft_gate}; }

ForecastBundle forecast_at(const RunBundle& run, const PreparedData& data, std::size_t origin) {
  const std::size_t h = run.config.h;
  if (origin < h || origin > data.standardized.size()) {
    throw Error(ErrorKind::InvalidInput, "forecast origin " + std::to_string(origin) +
                                             " needs h=" + std::to_string(h) + " prior steps inside the series");
  }
  const Eigen::MatrixXd history =
      data.features.values.middleRows(static_cast<Eigen::Index>(origin - h), static_cast<Eigen::Index>(h));
  return predict(run.models, history, h, run.transform.params, data.raw.values[origin], gate_options(run.config));
}

std::vector<SectionForecast> forecast_sections(const RunBundle& run, const PreparedData& data,
                                               const std::vector<std::size_t>& sections) {
  const std::size_t f = run.config.f;
  std::vector<SectionForecast> out;
  for (std::size_t s : sections) {
    if (s + f > data.standardized.size()) {
      throw Error(ErrorKind::InvalidInput, "holdout section at " + std::to_string(s) + " lies beyond the input");
    }
    SectionForecast sf;
    sf.start = s;
    sf.bundle = forecast_at(run, data, s);
    const double anchor = data.raw.values[s];
    for (std::size_t i = 0; i < f; ++i) {
      sf.timestamps.push_back(data.raw.timestamps[s + 1 + i]);
      sf.truth_raw.push_back(data.raw.values[s + 1 + i]);
      sf.truth_std.push_back(data.standardized.values[s + i]);
      sf.extreme.push_back(data.labels.labels[s + i]);
    }
    sf.normal_raw = invert_transform(sf.bundle.n_pred, run.transform.params, anchor);
    sf.extreme_raw = invert_transform(sf.bundle.e_pred, run.transform.params, anchor);
    sf.persistence = persistence_forecast(std::span<const double>(data.raw.values.data(), s + 1), f);
    out.push_back(std::move(sf));
  }
  return out;
}

Evaluation evaluate_sections(std::vector<SectionForecast> sections, bool with_wilcoxon) {
  if (sections.empty()) throw Error(ErrorKind::InvalidInput, "no holdout sections to evaluate");
  Evaluation ev;
  std::vector<double> truth, truth_std, nec, normal, extreme, persist, n_std, e_std;
  std::vector<bool> labels;
  for (const auto& s : sections) {
    truth.insert(truth.end(), s.truth_raw.begin(), s.truth_raw.end());
    truth_std.insert(truth_std.end(), s.truth_std.begin(), s.truth_std.end());
    nec.insert(nec.end(), s.bundle.raw_scale.begin(), s.bundle.raw_scale.end());
    normal.insert(normal.end(), s.normal_raw.begin(), s.normal_raw.end());
    extreme.insert(extreme.end(), s.extreme_raw.begin(), s.extreme_raw.end());
    persist.insert(persist.end(), s.persistence.begin(), s.persistence.end());
    n_std.insert(n_std.end(), s.bundle.n_pred.begin(), s.bundle.n_pred.end());
    e_std.insert(e_std.end(), s.bundle.e_pred.begin(), s.bundle.e_pred.end());
    labels.insert(labels.end(), s.extreme.begin(), s.extreme.end());
    ev.section_rmse.push_back({rmse(s.bundle.raw_scale, s.truth_raw), rmse(s.persistence, s.truth_raw)});
  }
  ev.nec_plus = per_class_report(nec, truth, labels);
  ev.normal_model = per_class_report(normal, truth, labels);
  ev.extreme_model = per_class_report(extreme, truth, labels);
  ev.persistence = per_class_report(persist, truth, labels);
  ev.normal_rmse_on_extremes = class_rmse(n_std, truth_std, labels, true);
  ev.extreme_rmse_on_extremes = class_rmse(e_std, truth_std, labels, true);
  ev.normal_rmse_on_normals = class_rmse(n_std, truth_std, labels, false);
  ev.extreme_rmse_on_normals = class_rmse(e_std, truth_std, labels, false);
  ev.sections = std::move(sections);
  if (with_wilcoxon) {
    try {
      ev.wilcoxon = wilcoxon_signed_rank(ev.section_rmse);
    } catch (const Error& e) {
      ev.wilcoxon_note = std::string(error_kind_name(e.kind())) + ": " + e.detail();
    }
  }
  return ev;
}

}  // namespace necplus
