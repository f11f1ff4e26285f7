#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "necplus/series.hpp"

namespace necplus {

/// Time-aligned model inputs: one row per standardized index, one column per
/// channel (value, GMM indicator, exogenous...).
struct FeatureSeries {
  Eigen::MatrixXd values;
  std::vector<std::string> channel_names;
  std::int64_t first_timestamp = 0;

  std::size_t length() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t channels() const { return static_cast<std::size_t>(values.cols()); }
};

/// h input steps followed by f target steps of channel 0.
struct SampleWindow {
  Eigen::MatrixXd input;  // h x channels
  Eigen::VectorXd target;
  std::vector<bool> target_mask;  // true = extreme
  std::size_t origin_index = 0;
};

/// Half-open range [begin, end) of standardized-series indices.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct SplitSpec {
  std::size_t h = 360;
  std::size_t f = 72;
  std::size_t holdout_sections = 24;
  std::vector<IndexRange> val_ranges;
  std::vector<IndexRange> test_ranges;
  std::uint64_t seed = 0;
};

/// Holdout sections are f-length target spans starting at the listed
/// indices; their h-step history precedes them. `train_mask[i]` is true when
/// the window [i, i+h+f) fits in the series and touches no holdout section.
struct Split {
  std::vector<bool> train_mask;
  std::vector<std::size_t> val_sections;
  std::vector<std::size_t> test_sections;
};

Split make_split(std::size_t series_len, const ExtremeLabels& labels, const SplitSpec& spec);

/// `set,start_index` rows for audit.
void write_split_csv(const std::filesystem::path& path, const Split& split);
Split read_split_csv(const std::filesystem::path& path, std::size_t series_len, std::size_t h,
                     std::size_t f);

struct SamplerConfig {
  std::size_t h = 360;
  std::size_t f = 72;
  std::size_t volume = 1;
  double oversampling = 0.0;  // OS in [0, 1]
  std::uint64_t seed = 0;
  bool with_replacement = true;
};

/// Smallest sample count that satisfies the OS quota, ceil(OS * volume).
std::size_t oversampling_quota(double oversampling, std::size_t volume);

/// Two-stage draw of window origins: ceil(OS * volume) from windows whose
/// target span holds an extreme, the rest uniformly from every eligible
/// window. With OS = 0 this is exactly plain uniform sampling.
std::vector<std::size_t> draw_sample_origins(const std::vector<bool>& train_mask,
                                             const ExtremeLabels& labels, const SamplerConfig& cfg);

SampleWindow make_window(const FeatureSeries& features, const ExtremeLabels& labels,
                         std::size_t origin, std::size_t h, std::size_t f);

std::vector<SampleWindow> draw_samples(const FeatureSeries& features, const ExtremeLabels& labels,
                                       const std::vector<bool>& train_mask,
                                       const SamplerConfig& cfg);

/// Windows whose target span is exactly each listed holdout section.
std::vector<SampleWindow> holdout_windows(const FeatureSeries& features, const ExtremeLabels& labels,
                                          const std::vector<std::size_t>& sections, std::size_t h,
                                          std::size_t f);

/// Keeps only the listed input channels of every window.
std::vector<SampleWindow> select_channels(const std::vector<SampleWindow>& windows,
                                          const std::vector<std::size_t>& channels);

}  // namespace necplus
