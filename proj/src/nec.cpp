#include "necplus/nec.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <set>
#include <thread>

#include "necplus/csv_io.hpp"
#include "necplus/error.hpp"

namespace necplus {

namespace {

std::uint64_t parse_u64(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  const auto t = trim(text);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw Error(ErrorKind::Config, std::string(key) + ": expected a non-negative integer, got '" + t + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const auto t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw Error(ErrorKind::Config, std::string(key) + ": expected true or false, got '" + t + "'");
}

std::string format_ranges(const std::vector<TimeRange>& ranges) {
  std::string out;
  for (const auto& r : ranges) {
    if (!out.empty()) out += ';';
    out += format_timestamp(r.begin) + '/' + format_timestamp(r.end);
  }
  return out;
}

std::vector<TimeRange> parse_ranges(std::string_view key, std::string_view text) {
  std::vector<TimeRange> out;
  if (trim(text).empty()) return out;
  for (const auto& part : split(text, ';')) {
    const auto ends = split(part, '/');
    if (ends.size() != 2) {
      throw Error(ErrorKind::Config, std::string(key) + ": ranges are begin/end pairs separated by ';'");
    }
    out.push_back({parse_timestamp(trim(ends[0])), parse_timestamp(trim(ends[1]))});
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

void validate_member(const char* name, const MemberConfig& m) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::Config, std::string(name) + " model: " + what);
  };
  if (m.layers < 1) fail("needs at least one LSTM layer");
  if (m.hidden < 1) fail("hidden width must be positive");
  if (m.batch_size < 1) fail("batch size must be positive");
  if (m.volume < 1) fail("sample volume must be positive");
  if (!(m.oversampling >= 0.0 && m.oversampling <= 1.0)) fail("oversampling must lie in [0, 1]");
  if (m.max_epochs < 1) fail("max_epochs must be positive");
  if (m.patience < 1) fail("patience must be at least 1");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

void NecConfig::validate() const {
  if (f < 1) throw Error(ErrorKind::Config, "horizon f must be at least 1");
  if (h <= f) throw Error(ErrorKind::Config, "history h must exceed horizon f");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw Error(ErrorKind::Config, "epsilon must be positive");
  if (gmm_components < 1) throw Error(ErrorKind::Config, "gmm_components_m must be at least 1");
  validate_member("normal", normal);
  validate_member("extreme", extreme);
  validate_member("classifier", classifier);
  if (!(alpha >= 1.0)) throw Error(ErrorKind::Config, "loss_alpha must be >= 1");
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorKind::Config, "loss_beta must lie in [0, 1]");
  if (!(lr_recurrent >= 0.0) || !(lr_fc >= 0.0)) throw Error(ErrorKind::Config, "learning rates must be >= 0");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error(ErrorKind::Config, "decision_threshold must lie in [0, 1]");
  if (clip_norm && !(*clip_norm > 0.0)) throw Error(ErrorKind::Config, "clip_norm must be positive");
  if (gap_max_degree < 1) throw Error(ErrorKind::Config, "gap_max_degree must be at least 1");
  for (const auto* ranges : {&val_ranges, &test_ranges}) {
    for (const auto& r : *ranges) {
      if (r.end <= r.begin) throw Error(ErrorKind::Config, "holdout range ends before it begins");
    }
  }
  std::set<std::string> seen;
  for (const auto& c : exogenous_columns) {
    if (c.empty() || c == value_column || !seen.insert(c).second) {
      throw Error(ErrorKind::Config, "invalid or repeated exogenous column '" + c + "'");
    }
  }
}

KeyValues config_to_key_values(const NecConfig& c) {
  KeyValues kv;
  auto u = [](std::uint64_t v) { return std::to_string(v); };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  kv.set("sensor_id", c.sensor_id);
  kv.set("input_length_h", u(c.h));
  kv.set("horizon_f", u(c.f));
  kv.set("extreme_threshold_epsilon", format_double(c.epsilon));
  kv.set("gmm_components_m", u(c.gmm_components));
  kv.set("gmm_seed", u(c.gmm_seed));
  const std::pair<const char*, const MemberConfig*> members[] = {
      {"n", &c.normal}, {"e", &c.extreme}, {"c", &c.classifier}};
  for (const auto& [p, m] : members) {
    const std::string pre = p;
    kv.set(pre + "_batch_size", u(m->batch_size));
    kv.set(pre + "_hidden", u(m->hidden));
    kv.set(pre + "_layers", u(m->layers));
    kv.set(pre + "_volume", u(m->volume));
    kv.set(pre + "_oversampling_os", format_double(m->oversampling));
    kv.set(pre + "_max_epochs", u(m->max_epochs));
    kv.set(pre + "_patience", u(m->patience));
    kv.set(pre + "_seed", u(m->seed));
  }
  kv.set("loss_alpha", format_double(c.alpha));
  kv.set("loss_beta", format_double(c.beta));
  kv.set("lr_recurrent", format_double(c.lr_recurrent));
  kv.set("lr_fc", format_double(c.lr_fc));
  kv.set("decision_threshold", format_double(c.threshold));
  kv.set("soft_gate", b(c.soft_gate));
  kv.set("clip_norm", c.clip_norm ? format_double(*c.clip_norm) : std::string());
  kv.set("sampling_with_replacement", b(c.with_replacement));
  kv.set("exogenous_columns", join(c.exogenous_columns));
  kv.set("classifier_exogenous", b(c.classifier_exogenous));
  kv.set("holdout_sections", u(c.holdout_sections));
  kv.set("val_ranges", format_ranges(c.val_ranges));
  kv.set("test_ranges", format_ranges(c.test_ranges));
  kv.set("split_seed", u(c.split_seed));
  kv.set("input_csv", c.input_csv);
  kv.set("value_column", c.value_column);
  kv.set("run_dir", c.run_dir);
  kv.set("parallel_training", b(c.parallel_training));
  kv.set("gap_max_degree", std::to_string(c.gap_max_degree));
  kv.set("gap_max_hours", u(c.gap_max_hours));
  return kv;
}

NecConfig config_from_key_values(const KeyValues& kv) {
  NecConfig c;
  std::map<std::string, std::function<void(const std::string&)>, std::less<>> setters;
  auto sz = [&](const char* key, std::size_t& dst) {
    setters[key] = [key, &dst](const std::string& v) { dst = static_cast<std::size_t>(parse_u64(key, v)); };
  };
  auto u64 = [&](const char* key, std::uint64_t& dst) {
    setters[key] = [key, &dst](const std::string& v) { dst = parse_u64(key, v); };
  };
  auto dbl = [&](const char* key, double& dst) {
    setters[key] = [&dst](const std::string& v) { dst = parse_double(v); };
  };
  auto flag = [&](const char* key, bool& dst) {
    setters[key] = [key, &dst](const std::string& v) { dst = parse_bool(key, v); };
  };
  auto str = [&](const char* key, std::string& dst) {
    setters[key] = [&dst](const std::string& v) { dst = trim(v); };
  };
  str("sensor_id", c.sensor_id);
  sz("input_length_h", c.h);
  sz("horizon_f", c.f);
  dbl("extreme_threshold_epsilon", c.epsilon);
  sz("gmm_components_m", c.gmm_components);
  u64("gmm_seed", c.gmm_seed);
  static const char* kMemberKeys[3][8] = {
      {"n_batch_size", "n_hidden", "n_layers", "n_volume", "n_oversampling_os", "n_max_epochs", "n_patience", "n_seed"},
      {"e_batch_size", "e_hidden", "e_layers", "e_volume", "e_oversampling_os", "e_max_epochs", "e_patience", "e_seed"},
      {"c_batch_size", "c_hidden", "c_layers", "c_volume", "c_oversampling_os", "c_max_epochs", "c_patience", "c_seed"}};
  MemberConfig* members[3] = {&c.normal, &c.extreme, &c.classifier};
  for (int i = 0; i < 3; ++i) {
    const auto& k = kMemberKeys[i];
    sz(k[0], members[i]->batch_size);
    sz(k[1], members[i]->hidden);
    sz(k[2], members[i]->layers);
    sz(k[3], members[i]->volume);
    dbl(k[4], members[i]->oversampling);
    sz(k[5], members[i]->max_epochs);
    sz(k[6], members[i]->patience);
    u64(k[7], members[i]->seed);
  }
  dbl("loss_alpha", c.alpha);
  dbl("loss_beta", c.beta);
  dbl("lr_recurrent", c.lr_recurrent);
  dbl("lr_fc", c.lr_fc);
  dbl("decision_threshold", c.threshold);
  flag("soft_gate", c.soft_gate);
  setters["clip_norm"] = [&c](const std::string& v) {
    if (trim(v).empty()) c.clip_norm.reset();
    else c.clip_norm = parse_double(v);
  };
  flag("sampling_with_replacement", c.with_replacement);
  setters["exogenous_columns"] = [&c](const std::string& v) {
    c.exogenous_columns.clear();
    if (trim(v).empty()) return;
    for (const auto& col : split(v, ',')) c.exogenous_columns.push_back(trim(col));
  };
  flag("classifier_exogenous", c.classifier_exogenous);
  sz("holdout_sections", c.holdout_sections);
  setters["val_ranges"] = [&c](const std::string& v) { c.val_ranges = parse_ranges("val_ranges", v); };
  setters["test_ranges"] = [&c](const std::string& v) { c.test_ranges = parse_ranges("test_ranges", v); };
  u64("split_seed", c.split_seed);
  str("input_csv", c.input_csv);
  str("value_column", c.value_column);
  str("run_dir", c.run_dir);
  flag("parallel_training", c.parallel_training);
  setters["gap_max_degree"] = [&c](const std::string& v) {
    c.gap_max_degree = static_cast<int>(parse_u64("gap_max_degree", v));
  };
  sz("gap_max_hours", c.gap_max_hours);

  for (const auto& [key, value] : kv.entries()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
    try {
      it->second(value);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Config) throw;
      throw Error(ErrorKind::Config, key + ": " + e.detail());
    }
  }
  c.validate();
  return c;
}

NecConfig load_config(const std::filesystem::path& path) {
  return config_from_key_values(KeyValues::read_file(path));
}

void save_config(const std::filesystem::path& path, const NecConfig& cfg) {
  config_to_key_values(cfg).write_file(path);
}

std::string config_hash(const NecConfig& cfg) {
  char buf[17];
  const auto v = fnv1a64(config_to_key_values(cfg).to_string());
  auto [ptr, ec] = std::to_chars(buf, buf + 16, v, 16);
  std::string hex(buf, ptr);
  return std::string(16 - hex.size(), '0') + hex;
}

namespace {

struct PresetRow {
  const char* sensor;
  double epsilon;
  std::size_t m;
  std::size_t n_batch, n_layers;
  std::size_t e_batch, e_volume;
  std::size_t c_batch, c_volume;
  double alpha, beta;
  const char* exogenous;
};

constexpr PresetRow kPresets[] = {
    {"4001", 1.5, 3, 32, 4, 8, 25000, 64, 100000, 2, 0.5, ""},
    {"4003", 1.5, 3, 64, 6, 8, 25000, 8, 30000, 2, 0.5, ""},
    {"4004", 1.5, 3, 64, 6, 8, 25000, 64, 100000, 3, 0.45, ""},
    {"4005", 1.5, 3, 64, 6, 32, 50000, 64, 100000, 1, 1, "6017"},
    {"4006", 1.5, 3, 32, 4, 32, 50000, 8, 30000, 1, 1, ""},
    {"4007", 1.5, 3, 64, 6, 32, 50000, 64, 100000, 1, 1, "6044,6069"},
    {"4009", 1.8, 4, 32, 4, 8, 30000, 8, 30000, 2, 0.5, ""},
    {"4010", 1.5, 3, 64, 6, 32, 50000, 64, 100000, 2, 0.5, "6135"},
    {"4011", 1.5, 3, 32, 4, 32, 25000, 64, 100000, 1, 1, ""},
};

}  // namespace

NecConfig sensor_preset(std::string_view sensor_id) {
  for (const auto& p : kPresets) {
    if (sensor_id != p.sensor) continue;
    NecConfig c;
    c.sensor_id = p.sensor;
    c.h = 360;
    c.f = 72;
    c.epsilon = p.epsilon;
    c.gmm_components = p.m;
    c.normal = {p.n_layers, 1024, p.n_batch, 180000, 0.0, 50, 3, 1};
    c.extreme = {4, 512, p.e_batch, p.e_volume, 1.0, 50, 4, 2};
    c.classifier = {4, 1024, p.c_batch, p.c_volume, 1.0, 50, 4, 3};
    c.alpha = p.alpha;
    c.beta = p.beta;
    if (*p.exogenous) {
      for (const auto& col : split(p.exogenous, ',')) c.exogenous_columns.push_back(col);
    }
    return c;
  }
  throw Error(ErrorKind::Config, "no preset for sensor '" + std::string(sensor_id) + "'");
}

std::vector<std::string> preset_sensors() {
  std::vector<std::string> out;
  for (const auto& p : kPresets) out.emplace_back(p.sensor);
  return out;
}

ExogenousSeries standardize_exogenous(const RawSeries& raw, const TransformParams& params) {
  if (!raw.complete()) throw Error(ErrorKind::InvalidInput, "exogenous series '" + raw.sensor_id + "' has gaps");
  if (raw.size() < 2) throw Error(ErrorKind::InvalidInput, "exogenous series is too short");
  if (!(params.scale > 0.0)) throw Error(ErrorKind::InvalidInput, "exogenous scale must be positive");
  ExogenousSeries out;
  out.name = raw.sensor_id;
  out.first_timestamp = raw.timestamps[1];
  out.values.reserve(raw.size() - 1);
  for (std::size_t i = 1; i < raw.size(); ++i) {
    out.values.push_back((raw.values[i] - params.location) / params.scale);
  }
  return out;
}

FeatureSeries assemble_features(const StandardizedSeries& series, const GmmModel& gmm,
                                const std::vector<ExogenousSeries>& exogenous) {
  const std::size_t n = series.size();
  FeatureSeries out;
  out.first_timestamp = series.first_timestamp;
  out.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(2 + exogenous.size()));
  out.channel_names = {"value", "gmm_indicator"};
  const auto indicator = gmm_indicator(gmm, series.values);
  for (std::size_t i = 0; i < n; ++i) {
    out.values(static_cast<Eigen::Index>(i), 0) = series.values[i];
    out.values(static_cast<Eigen::Index>(i), 1) = indicator[i];
  }
  for (std::size_t k = 0; k < exogenous.size(); ++k) {
    const auto& ex = exogenous[k];
    if (ex.values.size() != n || ex.first_timestamp != series.first_timestamp) {
      throw Error(ErrorKind::Alignment, "exogenous channel '" + ex.name + "' starts at " +
                                            format_timestamp(ex.first_timestamp) + " with " +
                                            std::to_string(ex.values.size()) + " points; expected " +
                                            format_timestamp(series.first_timestamp) + " with " +
                                            std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(2 + k)) = ex.values[i];
    }
    out.channel_names.push_back(ex.name);
  }
  return out;
}

std::vector<std::size_t> classifier_channels(const NecConfig& cfg, std::size_t channels) {
  std::vector<std::size_t> out;
  const std::size_t used = cfg.classifier_exogenous ? channels : std::min<std::size_t>(2, channels);
  for (std::size_t i = 0; i < used; ++i) out.push_back(i);
  return out;
}

nn::TrainConfig member_train_config(const NecConfig& cfg, const MemberConfig& member) {
  nn::TrainConfig t;
  t.batch_size = member.batch_size;
  t.lr_recurrent = cfg.lr_recurrent;
  t.lr_fc = cfg.lr_fc;
  t.max_epochs = member.max_epochs;
  t.patience = member.patience;
  t.seed = mix_seed(member.seed, 2);
  t.clip_norm = cfg.clip_norm;
  return t;
}

namespace {

MemberTraining train_member(const NecConfig& cfg, const MemberConfig& member, nn::HeadKind head,
                            const FeatureSeries& features, const ExtremeLabels& labels,
                            const Split& split, const std::vector<std::size_t>& channels) {
  SamplerConfig sampler{cfg.h, cfg.f, member.volume, member.oversampling, mix_seed(member.seed, 0),
                        cfg.with_replacement};
  auto train_set = draw_samples(features, labels, split.train_mask, sampler);
  auto val_set = holdout_windows(features, labels, split.val_sections, cfg.h, cfg.f);
  if (channels.size() != features.channels()) {
    train_set = select_channels(train_set, channels);
    val_set = select_channels(val_set, channels);
  }
  MemberTraining out;
  out.samples = train_set.size();
  for (const auto& w : train_set) {
    if (std::find(w.target_mask.begin(), w.target_mask.end(), true) != w.target_mask.end()) {
      ++out.extreme_samples;
    }
  }
  auto net = nn::NetStack::create(head, channels.size(), member.layers, member.hidden, cfg.f,
                                  mix_seed(member.seed, 1));
  out.train = member_train_config(cfg, member);
  out.result = nn::train(std::move(net), train_set, val_set,
                         nn::LossSpec::for_head(head, cfg.alpha, cfg.beta), out.train);
  return out;
}

}  // namespace

NecTraining train_nec(const NecConfig& cfg, const FeatureSeries& features, const ExtremeLabels& labels,
                      const Split& split) {
  cfg.validate();
  if (labels.labels.size() != features.length()) {
    throw Error(ErrorKind::Dimension, "labels do not cover the feature series");
  }
  std::vector<std::size_t> all(features.channels());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto c_channels = classifier_channels(cfg, features.channels());

  NecTraining out;
  struct Job {
    const char* name;
    const MemberConfig* member;
    nn::HeadKind head;
    const std::vector<std::size_t>* channels;
    MemberTraining* result;
    std::exception_ptr error;
  };
  Job jobs[3] = {{"normal", &cfg.normal, nn::HeadKind::Normal, &all, &out.normal, nullptr},
                 {"extreme", &cfg.extreme, nn::HeadKind::Extreme, &all, &out.extreme, nullptr},
                 {"classifier", &cfg.classifier, nn::HeadKind::Classifier, &c_channels, &out.classifier,
                  nullptr}};
  auto run = [&](Job& job) {
    try {
      *job.result = train_member(cfg, *job.member, job.head, features, labels, split, *job.channels);
    } catch (...) {
      job.error = std::current_exception();
    }
  };
  if (cfg.parallel_training) {
    std::vector<std::thread> threads;
    for (auto& job : jobs) threads.emplace_back(run, std::ref(job));
    for (auto& t : threads) t.join();
  } else {
    for (auto& job : jobs) run(job);
  }
  for (const auto& job : jobs) {
    if (!job.error) continue;
    try {
      std::rethrow_exception(job.error);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(job.name) + " model: " + e.detail());
    } catch (const std::exception& e) {
      throw Error(ErrorKind::TrainingFailure, std::string(job.name) + " model: " + e.what());
    }
  }
  out.models.normal = out.normal.result.model;
  out.models.extreme = out.extreme.result.model;
  out.models.classifier = out.classifier.result.model;
  out.models.classifier_channels = c_channels;
  return out;
}

ForecastBundle compose_forecast(std::vector<double> n_pred, std::vector<double> e_pred,
                                std::vector<double> c_prob, const GateOptions& gate,
                                const TransformParams& params, double anchor) {
  const std::size_t f = n_pred.size();
  if (e_pred.size() != f || c_prob.size() != f) {
    throw Error(ErrorKind::Dimension, "member forecasts have different horizons");
  }
  ForecastBundle b;
  b.gate.resize(f);
  b.composed.resize(f);
  for (std::size_t i = 0; i < f; ++i) {
    b.gate[i] = c_prob[i] > gate.threshold;
    if (gate.soft) {
      b.composed[i] = c_prob[i] * e_pred[i] + (1.0 - c_prob[i]) * n_pred[i];
    } else {
      b.composed[i] = b.gate[i] ? e_pred[i] : n_pred[i];
    }
  }
  b.raw_scale = invert_transform(b.composed, params, anchor);
  b.n_pred = std::move(n_pred);
  b.e_pred = std::move(e_pred);
  b.c_prob = std::move(c_prob);
  return b;
}

ForecastBundle predict(const NecModels& models, const Eigen::MatrixXd& history, std::size_t h,
                       const TransformParams& params, double anchor, const GateOptions& gate) {
  if (static_cast<std::size_t>(history.rows()) != h) {
    throw Error(ErrorKind::Dimension, "history has " + std::to_string(history.rows()) +
                                          " steps; the models need " + std::to_string(h));
  }
  if (static_cast<std::size_t>(history.cols()) != models.normal.input_dim()) {
    throw Error(ErrorKind::Dimension, "history has " + std::to_string(history.cols()) +
                                          " channels; the models need " +
                                          std::to_string(models.normal.input_dim()));
  }
  auto to_vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  Eigen::MatrixXd c_input(history.rows(), static_cast<Eigen::Index>(models.classifier_channels.size()));
  for (std::size_t j = 0; j < models.classifier_channels.size(); ++j) {
    c_input.col(static_cast<Eigen::Index>(j)) =
        history.col(static_cast<Eigen::Index>(models.classifier_channels[j]));
  }
  return compose_forecast(to_vec(nn::forward(models.normal, history)),
                          to_vec(nn::forward(models.extreme, history)),
                          to_vec(nn::forward(models.classifier, c_input)), gate, params, anchor);
}

}  // namespace necplus
