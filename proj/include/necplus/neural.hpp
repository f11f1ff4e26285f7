#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "necplus/sampling.hpp"

namespace necplus::nn {

enum class HeadKind { Normal, Extreme, Classifier };

std::string_view head_kind_name(HeadKind kind);
HeadKind parse_head_kind(std::string_view name);

/// Gate rows are stacked as [input; forget; candidate; output].
struct LstmLayer {
  Eigen::MatrixXd w_input;      // 4W x in
  Eigen::MatrixXd w_recurrent;  // 4W x W
  Eigen::VectorXd bias;         // 4W

  Eigen::Index width() const { return w_recurrent.cols(); }
  Eigen::Index input_dim() const { return w_input.cols(); }
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

/// Stacked LSTM feeding a fully connected head. Regression heads taper
/// through three affine layers (ReLU between them) down to the horizon;
/// the classifier head is a single affine layer followed by a sigmoid.
struct NetStack {
  HeadKind head = HeadKind::Normal;
  std::vector<LstmLayer> lstm;
  std::vector<DenseLayer> fc;

  std::size_t input_dim() const;
  std::size_t width() const;
  std::size_t horizon() const;
  std::size_t parameter_count() const;

  /// Weights uniform in (-1/sqrt(fan), 1/sqrt(fan)) with fan = W for the
  /// recurrent stack and the layer's fan-in for the head.
  static NetStack create(HeadKind head, std::size_t input_dim, std::size_t layers, std::size_t width,
                         std::size_t horizon, std::uint64_t seed);
  /// Same shapes, every parameter zero.
  NetStack zeros_like() const;
};

/// Gradients share the parameter layout.
using Gradients = NetStack;

enum class ParamGroup { Recurrent, Dense };

struct ParamBlock {
  std::string name;
  ParamGroup group;
  std::span<double> values;
};

/// Every parameter tensor in a fixed order (LSTM bottom-up, then head).
std::vector<ParamBlock> parameter_blocks(NetStack& net);

/// All h hidden states for a batch; `inputs[t]` is (in x B).
std::vector<Eigen::MatrixXd> lstm_forward(const LstmLayer& layer,
                                          const std::vector<Eigen::MatrixXd>& inputs);

struct LstmStepCache {
  Eigen::MatrixXd in_gate, forget_gate, candidate, out_gate, cell, cell_tanh, hidden;
};

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;                 // per step, (in x B)
  std::vector<std::vector<LstmStepCache>> lstm_steps;  // [layer][t]
  std::vector<Eigen::MatrixXd> fc_inputs;              // activation entering each FC layer
  std::vector<Eigen::MatrixXd> fc_preact;
  Eigen::MatrixXd output;                              // f x B
};

/// Forward pass for a batch of h x channels windows. Returns f x B.
Eigen::MatrixXd forward_batch(const NetStack& net, std::span<const Eigen::MatrixXd* const> windows,
                              ForwardCache* cache = nullptr);
Eigen::VectorXd forward(const NetStack& net, const Eigen::MatrixXd& window);

/// Backpropagation through the head and through time over the full window.
/// `output_grad` is dLoss/dOutput (f x B). Throws NumericInstability naming
/// the first layer whose gradient is non-finite.
Gradients backward(const NetStack& net, const ForwardCache& cache, const Eigen::MatrixXd& output_grad);

struct LossResult {
  double loss = 0.0;
  Eigen::VectorXd grad;  // d loss / d prediction
};

/// Mean squared error over the selected positions only; unselected positions
/// get exactly zero gradient and an empty selection contributes nothing.
LossResult masked_mse_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target,
                           const std::vector<bool>& mask);

inline constexpr double kProbabilityClamp = 1e-7;

/// beta * mean BCE(t, p^alpha) + (1 - beta) * RMSE(t, p).
LossResult classifier_loss(const Eigen::VectorXd& prob, const Eigen::VectorXd& target, double alpha,
                           double beta);

struct LossSpec {
  enum class Kind { MaskedMse, Classifier };
  Kind kind = Kind::MaskedMse;
  bool select_extreme = false;  // MaskedMse: which class contributes
  double alpha = 1.0;
  double beta = 1.0;

  static LossSpec normal() { return {Kind::MaskedMse, false, 1.0, 1.0}; }
  static LossSpec extreme() { return {Kind::MaskedMse, true, 1.0, 1.0}; }
  static LossSpec classifier(double alpha, double beta);
  static LossSpec for_head(HeadKind head, double alpha, double beta);
};

LossResult evaluate_loss(const LossSpec& spec, const Eigen::VectorXd& pred, const SampleWindow& window);

struct BatchGradient {
  double loss = 0.0;  // mean over the batch
  Gradients gradient;
};

BatchGradient loss_and_gradient(const NetStack& net, std::span<const SampleWindow* const> batch,
                                const LossSpec& spec);

/// Max relative error |ga - gn| / max(1e-8, |ga| + |gn|) between analytic and
/// central-difference gradients over every parameter.
double gradient_check(const NetStack& net, const SampleWindow& window, const LossSpec& spec,
                      double eps = 1e-5);

}  // namespace necplus::nn
