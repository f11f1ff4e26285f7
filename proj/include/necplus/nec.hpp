#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "necplus/gmm.hpp"
#include "necplus/kv.hpp"
#include "necplus/sampling.hpp"
#include "necplus/series.hpp"
#include "necplus/training.hpp"

namespace necplus {

struct MemberConfig {
  std::size_t layers = 4;
  std::size_t hidden = 1024;
  std::size_t batch_size = 32;
  std::size_t volume = 100000;
  double oversampling = 0.0;
  std::size_t max_epochs = 50;
  std::size_t patience = 3;
  std::uint64_t seed = 0;
};

/// Half-open interval of epoch seconds.
struct TimeRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;
};

struct NecConfig {
  std::string sensor_id = "sensor";
  std::size_t h = 360;
  std::size_t f = 72;
  double epsilon = 1.5;
  std::size_t gmm_components = 3;
  std::uint64_t gmm_seed = 0;
  MemberConfig normal{4, 1024, 32, 180000, 0.0, 50, 3, 1};
  MemberConfig extreme{4, 512, 32, 50000, 1.0, 50, 4, 2};
  MemberConfig classifier{4, 1024, 64, 100000, 1.0, 50, 4, 3};
  double alpha = 1.0;
  double beta = 1.0;
  double lr_recurrent = 1e-3;
  double lr_fc = 5e-4;
  double threshold = 0.5;
  bool soft_gate = false;
  std::optional<double> clip_norm;
  bool with_replacement = true;
  std::vector<std::string> exogenous_columns;
  bool classifier_exogenous = true;
  std::size_t holdout_sections = 24;
  std::vector<TimeRange> val_ranges;   // empty: fractions of the series
  std::vector<TimeRange> test_ranges;
  std::uint64_t split_seed = 0;
  std::string input_csv;
  std::string value_column = "value";
  std::string run_dir;
  bool parallel_training = true;
  int gap_max_degree = 3;
  std::size_t gap_max_hours = 14 * 24;

  void validate() const;
};

KeyValues config_to_key_values(const NecConfig& cfg);
/// Unknown keys are rejected; absent keys keep their defaults.
NecConfig config_from_key_values(const KeyValues& kv);
NecConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const NecConfig& cfg);
/// Hex digest of the canonical serialization.
std::string config_hash(const NecConfig& cfg);

/// Per-sensor metaparameter presets for the reservoir sensors.
NecConfig sensor_preset(std::string_view sensor_id);
std::vector<std::string> preset_sensors();

/// A z-scored exogenous channel aligned to the standardized series.
struct ExogenousSeries {
  std::string name;
  std::int64_t first_timestamp = 0;
  std::vector<double> values;
};

/// Z-scores raw[1..] with the given parameters so that the channel lines up
/// with the differenced target (no differencing is applied).
ExogenousSeries standardize_exogenous(const RawSeries& raw, const TransformParams& params);

/// Channel 0 = standardized value, 1 = GMM indicator of channel 0, then the
/// exogenous channels in order.
FeatureSeries assemble_features(const StandardizedSeries& series, const GmmModel& gmm,
                                const std::vector<ExogenousSeries>& exogenous);

struct NecModels {
  nn::NetStack normal;
  nn::NetStack extreme;
  nn::NetStack classifier;
  std::vector<std::size_t> classifier_channels;
};

struct MemberTraining {
  nn::TrainResult result;
  nn::TrainConfig train;
  std::size_t samples = 0;
  std::size_t extreme_samples = 0;  // samples with an extreme in the target span
};

struct NecTraining {
  NecModels models;
  MemberTraining normal;
  MemberTraining extreme;
  MemberTraining classifier;
};

std::vector<std::size_t> classifier_channels(const NecConfig& cfg, std::size_t channels);
nn::TrainConfig member_train_config(const NecConfig& cfg, const MemberConfig& member);

/// Trains N (normal positions), E (extreme positions) and C (binary targets).
/// Every member draws its own samples and initial weights from its own seed,
/// so the result does not depend on whether they run concurrently.
NecTraining train_nec(const NecConfig& cfg, const FeatureSeries& features, const ExtremeLabels& labels,
                      const Split& split);

struct GateOptions {
  double threshold = 0.5;
  bool soft = false;  // probability-weighted blend instead of a hard switch
};

struct ForecastBundle {
  std::vector<double> n_pred;
  std::vector<double> e_pred;
  std::vector<double> c_prob;
  std::vector<bool> gate;
  std::vector<double> composed;
  std::vector<double> raw_scale;
};

ForecastBundle compose_forecast(std::vector<double> n_pred, std::vector<double> e_pred,
                                std::vector<double> c_prob, const GateOptions& gate,
                                const TransformParams& params, double anchor);

/// `history` holds exactly h rows of every input channel; `anchor` is the raw
/// value at the forecast origin.
ForecastBundle predict(const NecModels& models, const Eigen::MatrixXd& history, std::size_t h,
                       const TransformParams& params, double anchor, const GateOptions& gate);

}  // namespace necplus
