#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "necplus/neural.hpp"

namespace necplus::nn {

class Sgd {
 public:
  explicit Sgd(double learning_rate) : lr_(learning_rate) {}
  void update(std::span<double> params, std::span<const double> grads) const;

 private:
  double lr_;
};

/// Adam with one moment buffer per parameter block ("slot").
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Call once per optimizer step, before the slot updates.
  void begin_step() { ++step_; }
  void update(std::size_t slot, std::span<double> params, std::span<const double> grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr_recurrent = 1e-3;
  double lr_fc = 5e-4;
  std::size_t max_epochs = 50;
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  std::optional<double> clip_norm;

  void validate() const;
};

/// Stops after `patience` consecutive epochs without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true when training should stop.
  bool update(double loss);
  bool last_improved() const { return last_improved_; }
  std::size_t bad_epochs() const { return bad_epochs_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t bad_epochs_ = 0;
  bool has_best_ = false;
  bool last_improved_ = false;
  double best_ = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;  // empty when the holdout has nothing to score
  bool improved = false;
};

struct TrainResult {
  NetStack model;  // parameters from the best monitored epoch
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
};

/// Masked losses are pooled over every selected position in the set; the
/// classifier loss is averaged per window. Empty when nothing is selected.
std::optional<double> validation_loss(const NetStack& net, const std::vector<SampleWindow>& val,
                                      const LossSpec& spec);

/// Minibatch training: recurrent parameters by SGD, head parameters by Adam,
/// seeded reshuffle each epoch, early stopping on the validation loss (the
/// training loss stands in when the validation set selects no positions).
TrainResult train(NetStack model, const std::vector<SampleWindow>& train_set,
                  const std::vector<SampleWindow>& val_set, const LossSpec& spec,
                  const TrainConfig& cfg);

std::string format_log(const std::vector<EpochLog>& log);

struct Checkpoint {
  NetStack model;
  TrainConfig train;
  std::vector<std::size_t> input_channels;
  std::string config_hash;
};

/// Text container; every parameter uses the shortest round-trip decimal form,
/// so load(save(x)) is bit-exact.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace necplus::nn
