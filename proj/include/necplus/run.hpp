#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "necplus/csv_io.hpp"
#include "necplus/eval.hpp"
#include "necplus/gmm.hpp"
#include "necplus/nec.hpp"
#include "necplus/sampling.hpp"
#include "necplus/series.hpp"

namespace necplus {

/// Everything needed to map a raw table onto model inputs with frozen
/// parameters.
struct TransformMeta {
  TransformParams params;
  double epsilon = 0.0;
  double anchor = 0.0;                // last raw value of the training input
  std::int64_t first_timestamp = 0;   // of standardized index 0
  std::size_t series_length = 0;      // standardized length
  std::vector<std::pair<std::string, TransformParams>> exogenous;
};

KeyValues to_key_values(const TransformMeta& meta);
TransformMeta transform_meta_from_key_values(const KeyValues& kv);

struct PreparedData {
  RawSeries raw;  // gap-filled
  StandardizedSeries standardized;
  ExtremeLabels labels;
  FeatureSeries features;
  Split split;    // empty when prepared from frozen parameters
  GmmModel gmm;
  TransformMeta meta;
};

/// Maps a configured timestamp range onto standardized indices.
IndexRange to_index_range(const TimeRange& range, std::int64_t first_timestamp, std::size_t length);
SplitSpec make_split_spec(const NecConfig& cfg, std::int64_t first_timestamp, std::size_t length);

/// Gap filling, holdout split, transform and GMM fitted on the training part
/// only, labels and feature assembly.
PreparedData prepare_training_data(const NecConfig& cfg, const SeriesTable& table);
/// Same pipeline with parameters taken from a finished run.
PreparedData prepare_frozen_data(const NecConfig& cfg, const SeriesTable& table, const GmmModel& gmm,
                                 const TransformMeta& meta);

struct RunBundle {
  NecConfig config;
  GmmModel gmm;
  TransformMeta transform;
  NecModels models;
  Split split;
  std::string train_log;
};

RunBundle train_run(const NecConfig& cfg, const SeriesTable& table, std::ostream* progress = nullptr);

/// Layout: config, gmm.model, transform.meta, n.ckpt, e.ckpt, c.ckpt,
/// train.log, split.csv.
void save_run(const std::filesystem::path& dir, const RunBundle& run);
RunBundle load_run(const std::filesystem::path& dir);

GateOptions gate_options(const NecConfig& cfg);

/// Forecast of standardized indices [origin, origin + f) from the h rows
/// before `origin`, anchored at raw value `origin`.
ForecastBundle forecast_at(const RunBundle& run, const PreparedData& data, std::size_t origin);

struct SectionForecast {
  std::size_t start = 0;
  std::vector<std::int64_t> timestamps;
  ForecastBundle bundle;
  std::vector<double> truth_raw;
  std::vector<double> truth_std;
  std::vector<bool> extreme;
  std::vector<double> normal_raw;   // N model alone
  std::vector<double> extreme_raw;  // E model alone
  std::vector<double> persistence;
};

std::vector<SectionForecast> forecast_sections(const RunBundle& run, const PreparedData& data,
                                               const std::vector<std::size_t>& sections);

struct Evaluation {
  std::vector<SectionForecast> sections;
  MetricReport nec_plus;
  MetricReport normal_model;
  MetricReport extreme_model;
  MetricReport persistence;
  // Standardized-scale RMSE of each regressor over the extreme target points.
  std::optional<double> normal_rmse_on_extremes;
  std::optional<double> extreme_rmse_on_extremes;
  std::optional<double> normal_rmse_on_normals;
  std::optional<double> extreme_rmse_on_normals;
  // Per-section (NEC+, persistence) raw-scale RMSE pairs.
  std::vector<std::pair<double, double>> section_rmse;
  std::optional<WilcoxonResult> wilcoxon;
  std::string wilcoxon_note;
};

Evaluation evaluate_sections(std::vector<SectionForecast> sections, bool with_wilcoxon);

}  // namespace necplus
