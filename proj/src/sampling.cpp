#include "necplus/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "necplus/error.hpp"
#include "necplus/kv.hpp"

namespace necplus {

namespace {

std::vector<bool> train_mask_from_sections(std::size_t n, std::size_t h, std::size_t f,
                                           const std::vector<std::size_t>& val,
                                           const std::vector<std::size_t>& test) {
  std::vector<std::size_t> blocked_prefix(n + 1, 0);
  std::vector<char> blocked(n, 0);
  for (const auto* set : {&val, &test}) {
    for (std::size_t s : *set) {
      for (std::size_t j = s; j < std::min(n, s + f); ++j) blocked[j] = 1;
    }
  }
  for (std::size_t i = 0; i < n; ++i) blocked_prefix[i + 1] = blocked_prefix[i] + blocked[i];
  std::vector<bool> mask(n, false);
  const std::size_t span = h + f;
  for (std::size_t i = 0; i + span <= n; ++i) {
    mask[i] = blocked_prefix[i + span] == blocked_prefix[i];
  }
  return mask;
}

void place_sections(std::size_t n, const SplitSpec& spec, const std::vector<IndexRange>& ranges,
                    const char* set_name, std::mt19937_64& rng, std::vector<std::size_t>& taken,
                    std::vector<std::size_t>& out) {
  if (spec.holdout_sections == 0) return;
  std::vector<std::size_t> candidates;
  for (const auto& r : ranges) {
    const std::size_t lo = std::max(r.begin, spec.h);
    const std::size_t hi = std::min(r.end, n);
    for (std::size_t s = lo; s + spec.f <= hi; ++s) candidates.push_back(s);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  auto overlaps = [&](std::size_t s, std::size_t t) { return s < t + spec.f && t < s + spec.f; };
  std::erase_if(candidates, [&](std::size_t s) {
    return std::any_of(taken.begin(), taken.end(), [&](std::size_t t) { return overlaps(s, t); });
  });

  for (std::size_t k = 0; k < spec.holdout_sections; ++k) {
    if (candidates.empty()) {
      throw Error(ErrorKind::SplitInfeasible,
                  std::string(set_name) + " ranges cannot host " +
                      std::to_string(spec.holdout_sections) + " non-overlapping sections of length " +
                      std::to_string(spec.f) + " (placed " + std::to_string(k) + ")");
    }
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    const std::size_t s = candidates[pick(rng)];
    out.push_back(s);
    taken.push_back(s);
    std::erase_if(candidates, [&](std::size_t c) { return overlaps(c, s); });
  }
  std::sort(out.begin(), out.end());
}

}  // namespace

Split make_split(std::size_t series_len, const ExtremeLabels& labels, const SplitSpec& spec) {
  if (spec.f == 0 || spec.h == 0) throw Error(ErrorKind::InvalidInput, "h and f must be positive");
  if (!labels.labels.empty() && labels.labels.size() != series_len) {
    throw Error(ErrorKind::Dimension, "labels do not match series length");
  }
  Split split;
  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> taken;
  place_sections(series_len, spec, spec.val_ranges, "validation", rng, taken, split.val_sections);
  place_sections(series_len, spec, spec.test_ranges, "test", rng, taken, split.test_sections);
  split.train_mask =
      train_mask_from_sections(series_len, spec.h, spec.f, split.val_sections, split.test_sections);
  return split;
}

void write_split_csv(const std::filesystem::path& path, const Split& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "set,start_index\n";
  for (std::size_t s : split.val_sections) out << "val," << s << '\n';
  for (std::size_t s : split.test_sections) out << "test," << s << '\n';
}

Split read_split_csv(const std::filesystem::path& path, std::size_t series_len, std::size_t h,
                     std::size_t f) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Load, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (trim(line) != "set,start_index") {
    throw Error(ErrorKind::Schema, path.string() + ": expected header set,start_index");
  }
  Split result;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 2) throw Error(ErrorKind::Schema, path.string() + ": malformed row");
    const auto start = static_cast<std::size_t>(parse_int(fields[1]));
    const std::string set = trim(fields[0]);
    if (set == "val") {
      result.val_sections.push_back(start);
    } else if (set == "test") {
      result.test_sections.push_back(start);
    } else {
      throw Error(ErrorKind::Schema, path.string() + ": unknown set '" + set + "'");
    }
  }
  result.train_mask =
      train_mask_from_sections(series_len, h, f, result.val_sections, result.test_sections);
  return result;
}

std::size_t oversampling_quota(double oversampling, std::size_t volume) {
  if (!(oversampling >= 0.0 && oversampling <= 1.0)) {
    throw Error(ErrorKind::Config, "oversampling ratio must lie in [0, 1]");
  }
  // The 1e-9 slack absorbs representation error such as 0.04 * 10000.
  const double q = std::ceil(oversampling * static_cast<double>(volume) - 1e-9);
  return std::min(volume, static_cast<std::size_t>(std::max(0.0, q)));
}

std::vector<std::size_t> draw_sample_origins(const std::vector<bool>& train_mask,
                                             const ExtremeLabels& labels, const SamplerConfig& cfg) {
  if (cfg.volume < 1) throw Error(ErrorKind::InvalidInput, "sample volume must be >= 1");
  const std::size_t n = train_mask.size();
  if (labels.labels.size() != n) throw Error(ErrorKind::Dimension, "labels do not match train mask");
  const std::size_t quota = oversampling_quota(cfg.oversampling, cfg.volume);

  std::vector<std::size_t> prefix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + (labels.labels[i] ? 1 : 0);

  std::vector<std::size_t> eligible;
  std::vector<std::size_t> extreme_pool;
  const std::size_t span = cfg.h + cfg.f;
  for (std::size_t i = 0; i + span <= n; ++i) {
    if (!train_mask[i]) continue;
    eligible.push_back(i);
    if (prefix[i + span] > prefix[i + cfg.h]) extreme_pool.push_back(i);
  }
  if (eligible.empty()) {
    throw Error(ErrorKind::InvalidInput, "series too short for a single training window");
  }
  if (quota > 0 && extreme_pool.empty()) {
    throw Error(ErrorKind::StratificationInfeasible,
                "OS > 0 but no training window has an extreme in its target span");
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> origins;
  origins.reserve(cfg.volume);

  if (cfg.with_replacement) {
    if (quota > 0) {
      std::uniform_int_distribution<std::size_t> pick(0, extreme_pool.size() - 1);
      for (std::size_t k = 0; k < quota; ++k) origins.push_back(extreme_pool[pick(rng)]);
    }
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    for (std::size_t k = quota; k < cfg.volume; ++k) origins.push_back(eligible[pick(rng)]);
    return origins;
  }

  if (quota > extreme_pool.size()) {
    throw Error(ErrorKind::StratificationInfeasible,
                "quota of " + std::to_string(quota) + " exceeds the " +
                    std::to_string(extreme_pool.size()) + " extreme windows available");
  }
  if (cfg.volume > eligible.size()) {
    throw Error(ErrorKind::InvalidInput, "volume exceeds eligible windows without replacement");
  }
  // Partial Fisher-Yates on each stratum.
  for (std::size_t k = 0; k < quota; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, extreme_pool.size() - 1);
    std::swap(extreme_pool[k], extreme_pool[pick(rng)]);
    origins.push_back(extreme_pool[k]);
  }
  std::vector<std::size_t> rest;
  {
    std::vector<std::size_t> chosen(origins);
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t i : eligible) {
      if (!std::binary_search(chosen.begin(), chosen.end(), i)) rest.push_back(i);
    }
  }
  for (std::size_t k = 0; k < cfg.volume - quota; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, rest.size() - 1);
    std::swap(rest[k], rest[pick(rng)]);
    origins.push_back(rest[k]);
  }
  return origins;
}

SampleWindow make_window(const FeatureSeries& features, const ExtremeLabels& labels,
                         std::size_t origin, std::size_t h, std::size_t f) {
  if (origin + h + f > features.length() || labels.labels.size() != features.length()) {
    throw Error(ErrorKind::Dimension, "window at " + std::to_string(origin) +
                                          " does not fit the feature series");
  }
  SampleWindow w;
  w.origin_index = origin;
  w.input = features.values.block(static_cast<Eigen::Index>(origin), 0, static_cast<Eigen::Index>(h),
                                  features.values.cols());
  w.target = features.values.col(0).segment(static_cast<Eigen::Index>(origin + h),
                                            static_cast<Eigen::Index>(f));
  w.target_mask.assign(labels.labels.begin() + static_cast<std::ptrdiff_t>(origin + h),
                       labels.labels.begin() + static_cast<std::ptrdiff_t>(origin + h + f));
  return w;
}

std::vector<SampleWindow> draw_samples(const FeatureSeries& features, const ExtremeLabels& labels,
                                       const std::vector<bool>& train_mask,
                                       const SamplerConfig& cfg) {
  const auto origins = draw_sample_origins(train_mask, labels, cfg);
  std::vector<SampleWindow> out;
  out.reserve(origins.size());
  for (std::size_t o : origins) out.push_back(make_window(features, labels, o, cfg.h, cfg.f));
  return out;
}

std::vector<SampleWindow> holdout_windows(const FeatureSeries& features, const ExtremeLabels& labels,
                                          const std::vector<std::size_t>& sections, std::size_t h,
                                          std::size_t f) {
  std::vector<SampleWindow> out;
  out.reserve(sections.size());
  for (std::size_t s : sections) {
    if (s < h) throw Error(ErrorKind::Dimension, "holdout section lacks a full history window");
    out.push_back(make_window(features, labels, s - h, h, f));
  }
  return out;
}

std::vector<SampleWindow> select_channels(const std::vector<SampleWindow>& windows,
                                          const std::vector<std::size_t>& channels) {
  std::vector<SampleWindow> out = windows;
  for (auto& w : out) {
    Eigen::MatrixXd input(w.input.rows(), static_cast<Eigen::Index>(channels.size()));
    for (std::size_t c = 0; c < channels.size(); ++c) {
      input.col(static_cast<Eigen::Index>(c)) = w.input.col(static_cast<Eigen::Index>(channels[c]));
    }
    w.input = std::move(input);
  }
  return out;
}

}  // namespace necplus
