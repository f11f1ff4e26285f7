#include "necplus/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "necplus/error.hpp"
#include "necplus/kv.hpp"

namespace necplus::nn {

void Sgd::update(std::span<double> params, std::span<const double> grads) const {
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grads[i];
}

void Adam::update(std::size_t slot, std::span<double> params, std::span<const double> grads) {
  if (slot >= m_.size()) {
    m_.resize(slot + 1);
    v_.resize(slot + 1);
  }
  auto& m = m_[slot];
  auto& v = v_[slot];
  if (m.size() != params.size()) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
  }
  const double t = static_cast<double>(std::max<std::uint64_t>(step_, 1));
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1_ * m[i] + (1.0 - beta1_) * grads[i];
    v[i] = beta2_ * v[i] + (1.0 - beta2_) * grads[i] * grads[i];
    params[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorKind::Config, "batch_size must be >= 1");
  if (!(lr_recurrent >= 0.0) || !(lr_fc >= 0.0) || !std::isfinite(lr_recurrent) ||
      !std::isfinite(lr_fc)) {
    throw Error(ErrorKind::Config, "learning rates must be finite and non-negative");
  }
  if (patience < 1) throw Error(ErrorKind::Config, "patience must be >= 1");
  if (max_epochs < 1) throw Error(ErrorKind::Config, "max_epochs must be >= 1");
  if (clip_norm && !(*clip_norm > 0.0)) throw Error(ErrorKind::Config, "clip_norm must be positive");
}

bool EarlyStopping::update(double loss) {
  if (!has_best_ || loss < best_) {
    has_best_ = true;
    best_ = loss;
    bad_epochs_ = 0;
    last_improved_ = true;
    return false;
  }
  last_improved_ = false;
  ++bad_epochs_;
  return bad_epochs_ >= patience_;
}

std::optional<double> validation_loss(const NetStack& net, const std::vector<SampleWindow>& val,
                                      const LossSpec& spec) {
  if (val.empty()) return std::nullopt;
  constexpr std::size_t kChunk = 256;
  double total = 0.0;
  double weight = 0.0;
  for (std::size_t start = 0; start < val.size(); start += kChunk) {
    const std::size_t end = std::min(val.size(), start + kChunk);
    std::vector<const Eigen::MatrixXd*> inputs;
    for (std::size_t i = start; i < end; ++i) inputs.push_back(&val[i].input);
    const Eigen::MatrixXd out = forward_batch(net, inputs);
    for (std::size_t i = start; i < end; ++i) {
      const auto col = static_cast<Eigen::Index>(i - start);
      if (spec.kind == LossSpec::Kind::Classifier) {
        total += evaluate_loss(spec, out.col(col), val[i]).loss;
        weight += 1.0;
        continue;
      }
      for (std::size_t j = 0; j < val[i].target_mask.size(); ++j) {
        if (val[i].target_mask[j] != spec.select_extreme) continue;
        const double d = out(static_cast<Eigen::Index>(j), col) - val[i].target(static_cast<Eigen::Index>(j));
        total += d * d;
        weight += 1.0;
      }
    }
  }
  if (weight == 0.0) return std::nullopt;
  return total / weight;
}

namespace {

void clip_gradients(Gradients& grad, double max_norm) {
  double sq = 0.0;
  for (auto& b : parameter_blocks(grad)) {
    for (double g : b.values) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (auto& b : parameter_blocks(grad)) {
    for (double& g : b.values) g *= scale;
  }
}

}  // namespace

TrainResult train(NetStack model, const std::vector<SampleWindow>& train_set,
                  const std::vector<SampleWindow>& val_set, const LossSpec& spec,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw Error(ErrorKind::InvalidInput, "empty training set");

  const Sgd sgd(cfg.lr_recurrent);
  Adam adam(cfg.lr_fc);
  EarlyStopping stopper(cfg.patience);
  std::mt19937_64 rng(cfg.seed);

  TrainResult result;
  result.model = model;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const SampleWindow*> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
      BatchGradient step = loss_and_gradient(model, batch, spec);
      epoch_loss += step.loss * static_cast<double>(batch.size());
      if (cfg.clip_norm) clip_gradients(step.gradient, *cfg.clip_norm);

      auto params = parameter_blocks(model);
      auto grads = parameter_blocks(step.gradient);
      adam.begin_step();
      for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].group == ParamGroup::Recurrent) {
          sgd.update(params[b].values, grads[b].values);
        } else {
          adam.update(b, params[b].values, grads[b].values);
        }
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss / static_cast<double>(order.size());
    entry.val_loss = validation_loss(model, val_set, spec);
    const double monitored = entry.val_loss.value_or(entry.train_loss);
    if (!std::isfinite(monitored) || !std::isfinite(entry.train_loss)) {
      result.log.push_back(entry);
      throw Error(ErrorKind::TrainingFailure,
                  "loss diverged at epoch " + std::to_string(epoch) + "\n" + format_log(result.log));
    }
    const bool stop = stopper.update(monitored);
    entry.improved = stopper.last_improved();
    result.log.push_back(entry);
    if (entry.improved) {
      result.model = model;
      result.best_epoch = epoch;
    }
    if (stop) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

std::string format_log(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,improved\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << format_double(e.train_loss) << ','
        << (e.val_loss ? format_double(*e.val_loss) : std::string("")) << ','
        << (e.improved ? 1 : 0) << '\n';
  }
  return out.str();
}

namespace {

constexpr const char* kCheckpointFormat = "necplus-ckpt-1";

std::vector<double> to_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  KeyValues kv;
  kv.set("format", std::string(kCheckpointFormat));
  kv.set("head", std::string(head_kind_name(ckpt.model.head)));
  kv.set("config_hash", ckpt.config_hash);
  kv.set("input_dim", static_cast<std::int64_t>(ckpt.model.input_dim()));
  kv.set("width", static_cast<std::int64_t>(ckpt.model.width()));
  kv.set("lstm_layers", static_cast<std::int64_t>(ckpt.model.lstm.size()));
  kv.set("fc_layers", static_cast<std::int64_t>(ckpt.model.fc.size()));
  std::string channels;
  for (std::size_t i = 0; i < ckpt.input_channels.size(); ++i) {
    if (i) channels += ',';
    channels += std::to_string(ckpt.input_channels[i]);
  }
  kv.set("input_channels", channels);
  kv.set("train.batch_size", static_cast<std::int64_t>(ckpt.train.batch_size));
  kv.set("train.lr_recurrent", ckpt.train.lr_recurrent);
  kv.set("train.lr_fc", ckpt.train.lr_fc);
  kv.set("train.max_epochs", static_cast<std::int64_t>(ckpt.train.max_epochs));
  kv.set("train.patience", static_cast<std::int64_t>(ckpt.train.patience));
  kv.set("train.seed", std::to_string(ckpt.train.seed));
  kv.set("train.clip_norm", ckpt.train.clip_norm ? format_double(*ckpt.train.clip_norm) : std::string());
  for (std::size_t k = 0; k < ckpt.model.fc.size(); ++k) {
    const auto& d = ckpt.model.fc[k];
    kv.set("fc." + std::to_string(k) + ".shape",
           std::to_string(d.weight.rows()) + "," + std::to_string(d.weight.cols()));
  }
  NetStack copy = ckpt.model;
  for (const auto& block : parameter_blocks(copy)) kv.set(block.name, to_vector(block.values));
  kv.write_file(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::Load, "missing checkpoint " + path.string());
  const KeyValues kv = KeyValues::read_file(path);
  if (kv.find("format") != std::optional<std::string>(kCheckpointFormat)) {
    throw Error(ErrorKind::Version, path.string() + " is not a " + kCheckpointFormat + " checkpoint");
  }
  Checkpoint ckpt;
  ckpt.config_hash = kv.get("config_hash");
  const auto input_dim = static_cast<Eigen::Index>(kv.get_int("input_dim"));
  const auto width = static_cast<Eigen::Index>(kv.get_int("width"));
  const auto layers = static_cast<std::size_t>(kv.get_int("lstm_layers"));
  const auto fc_layers = static_cast<std::size_t>(kv.get_int("fc_layers"));
  ckpt.model.head = parse_head_kind(kv.get("head"));
  for (std::size_t l = 0; l < layers; ++l) {
    const Eigen::Index in = l == 0 ? input_dim : width;
    ckpt.model.lstm.push_back({Eigen::MatrixXd(4 * width, in), Eigen::MatrixXd(4 * width, width),
                               Eigen::VectorXd(4 * width)});
  }
  for (std::size_t k = 0; k < fc_layers; ++k) {
    const auto shape = split(kv.get("fc." + std::to_string(k) + ".shape"), ',');
    if (shape.size() != 2) throw Error(ErrorKind::Load, "malformed fc shape");
    const auto rows = static_cast<Eigen::Index>(parse_int(shape[0]));
    const auto cols = static_cast<Eigen::Index>(parse_int(shape[1]));
    ckpt.model.fc.push_back({Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)});
  }
  for (auto& block : parameter_blocks(ckpt.model)) {
    const auto values = kv.get_doubles(block.name);
    if (values.size() != block.values.size()) {
      throw Error(ErrorKind::Load, "parameter " + block.name + " has " +
                                       std::to_string(values.size()) + " values, expected " +
                                       std::to_string(block.values.size()));
    }
    std::copy(values.begin(), values.end(), block.values.begin());
  }
  const std::string channels = kv.get("input_channels");
  if (!channels.empty()) {
    for (const auto& c : split(channels, ',')) {
      ckpt.input_channels.push_back(static_cast<std::size_t>(parse_int(c)));
    }
  }
  ckpt.train.batch_size = static_cast<std::size_t>(kv.get_int("train.batch_size"));
  ckpt.train.lr_recurrent = kv.get_double("train.lr_recurrent");
  ckpt.train.lr_fc = kv.get_double("train.lr_fc");
  ckpt.train.max_epochs = static_cast<std::size_t>(kv.get_int("train.max_epochs"));
  ckpt.train.patience = static_cast<std::size_t>(kv.get_int("train.patience"));
  ckpt.train.seed = std::stoull(kv.get("train.seed"));
  const std::string clip = kv.get("train.clip_norm");
  if (!clip.empty()) ckpt.train.clip_norm = parse_double(clip);
  return ckpt;
}

}  // namespace necplus::nn
