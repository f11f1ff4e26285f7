#include "necplus/neural.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "necplus/error.hpp"

namespace necplus::nn {

namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return (1.0 + (-z.array()).exp()).inverse().matrix();
}

void require_finite(const Eigen::MatrixXd& m, const std::string& where) {
  if (!m.allFinite()) throw Error(ErrorKind::NumericInstability, "non-finite gradient in " + where);
}

void fill_uniform(Eigen::MatrixXd& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
  }
}

void fill_uniform(Eigen::VectorXd& v, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index r = 0; r < v.size(); ++r) v(r) = dist(rng);
}

template <typename Net>
auto collect_blocks(Net& net) {
  std::vector<ParamBlock> blocks;
  auto add = [&](std::string name, ParamGroup group, auto& tensor) {
    blocks.push_back({std::move(name), group,
                      std::span<double>(tensor.data(), static_cast<std::size_t>(tensor.size()))});
  };
  for (std::size_t l = 0; l < net.lstm.size(); ++l) {
    const std::string p = "lstm." + std::to_string(l) + ".";
    add(p + "w_input", ParamGroup::Recurrent, net.lstm[l].w_input);
    add(p + "w_recurrent", ParamGroup::Recurrent, net.lstm[l].w_recurrent);
    add(p + "bias", ParamGroup::Recurrent, net.lstm[l].bias);
  }
  for (std::size_t k = 0; k < net.fc.size(); ++k) {
    const std::string p = "fc." + std::to_string(k) + ".";
    add(p + "weight", ParamGroup::Dense, net.fc[k].weight);
    add(p + "bias", ParamGroup::Dense, net.fc[k].bias);
  }
  return blocks;
}

}  // namespace

std::string_view head_kind_name(HeadKind kind) {
  switch (kind) {
    case HeadKind::Normal: return "normal";
    case HeadKind::Extreme: return "extreme";
    case HeadKind::Classifier: return "classifier";
  }
  return "normal";
}

HeadKind parse_head_kind(std::string_view name) {
  if (name == "normal") return HeadKind::Normal;
  if (name == "extreme") return HeadKind::Extreme;
  if (name == "classifier") return HeadKind::Classifier;
  throw Error(ErrorKind::Load, "unknown head kind '" + std::string(name) + "'");
}

std::size_t NetStack::input_dim() const {
  return lstm.empty() ? 0 : static_cast<std::size_t>(lstm.front().input_dim());
}

std::size_t NetStack::width() const {
  return lstm.empty() ? 0 : static_cast<std::size_t>(lstm.front().width());
}

std::size_t NetStack::horizon() const {
  return fc.empty() ? 0 : static_cast<std::size_t>(fc.back().weight.rows());
}

std::size_t NetStack::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : lstm) {
    n += static_cast<std::size_t>(l.w_input.size() + l.w_recurrent.size() + l.bias.size());
  }
  for (const auto& d : fc) n += static_cast<std::size_t>(d.weight.size() + d.bias.size());
  return n;
}

NetStack NetStack::create(HeadKind head, std::size_t input_dim, std::size_t layers,
                          std::size_t width, std::size_t horizon, std::uint64_t seed) {
  if (input_dim == 0 || layers == 0 || width == 0 || horizon == 0) {
    throw Error(ErrorKind::Config, "network dimensions must all be positive");
  }
  std::mt19937_64 rng(seed);
  NetStack net;
  net.head = head;
  const auto w = static_cast<Eigen::Index>(width);
  const double lstm_bound = 1.0 / std::sqrt(static_cast<double>(width));
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<Eigen::Index>(l == 0 ? input_dim : width);
    LstmLayer layer{Eigen::MatrixXd(4 * w, in), Eigen::MatrixXd(4 * w, w), Eigen::VectorXd(4 * w)};
    fill_uniform(layer.w_input, lstm_bound, rng);
    fill_uniform(layer.w_recurrent, lstm_bound, rng);
    fill_uniform(layer.bias, lstm_bound, rng);
    net.lstm.push_back(std::move(layer));
  }
  std::vector<std::size_t> sizes{width};
  if (head == HeadKind::Classifier) {
    sizes.push_back(horizon);
  } else {
    sizes.push_back(std::max(horizon, width / 2));
    sizes.push_back(std::max(horizon, width / 4));
    sizes.push_back(horizon);
  }
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    DenseLayer d{Eigen::MatrixXd(static_cast<Eigen::Index>(sizes[k + 1]),
                                 static_cast<Eigen::Index>(sizes[k])),
                 Eigen::VectorXd(static_cast<Eigen::Index>(sizes[k + 1]))};
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[k]));
    fill_uniform(d.weight, bound, rng);
    fill_uniform(d.bias, bound, rng);
    net.fc.push_back(std::move(d));
  }
  return net;
}

NetStack NetStack::zeros_like() const {
  NetStack z = *this;
  for (auto& l : z.lstm) {
    l.w_input.setZero();
    l.w_recurrent.setZero();
    l.bias.setZero();
  }
  for (auto& d : z.fc) {
    d.weight.setZero();
    d.bias.setZero();
  }
  return z;
}

std::vector<ParamBlock> parameter_blocks(NetStack& net) { return collect_blocks(net); }

namespace {

std::vector<LstmStepCache> lstm_forward_cached(const LstmLayer& layer,
                                               const std::vector<Eigen::MatrixXd>& inputs) {
  const Eigen::Index w = layer.width();
  std::vector<LstmStepCache> steps;
  steps.reserve(inputs.size());
  if (inputs.empty()) return steps;
  const Eigen::Index batch = inputs.front().cols();
  Eigen::MatrixXd h_prev = Eigen::MatrixXd::Zero(w, batch);
  Eigen::MatrixXd c_prev = Eigen::MatrixXd::Zero(w, batch);
  for (const auto& x : inputs) {
    if (x.rows() != layer.input_dim() || x.cols() != batch) {
      throw Error(ErrorKind::Dimension, "LSTM input has " + std::to_string(x.rows()) +
                                            " features, layer expects " +
                                            std::to_string(layer.input_dim()));
    }
    Eigen::MatrixXd z = layer.w_input * x + layer.w_recurrent * h_prev;
    z.colwise() += layer.bias;
    LstmStepCache s;
    s.in_gate = sigmoid(z.topRows(w));
    s.forget_gate = sigmoid(z.middleRows(w, w));
    s.candidate = z.middleRows(2 * w, w).array().tanh().matrix();
    s.out_gate = sigmoid(z.bottomRows(w));
    s.cell = (s.forget_gate.array() * c_prev.array() + s.in_gate.array() * s.candidate.array()).matrix();
    s.cell_tanh = s.cell.array().tanh().matrix();
    s.hidden = (s.out_gate.array() * s.cell_tanh.array()).matrix();
    h_prev = s.hidden;
    c_prev = s.cell;
    steps.push_back(std::move(s));
  }
  return steps;
}

}  // namespace

std::vector<Eigen::MatrixXd> lstm_forward(const LstmLayer& layer,
                                          const std::vector<Eigen::MatrixXd>& inputs) {
  std::vector<Eigen::MatrixXd> hidden;
  for (auto& s : lstm_forward_cached(layer, inputs)) hidden.push_back(std::move(s.hidden));
  return hidden;
}

Eigen::MatrixXd forward_batch(const NetStack& net, std::span<const Eigen::MatrixXd* const> windows,
                              ForwardCache* cache) {
  if (windows.empty()) throw Error(ErrorKind::Dimension, "empty batch");
  if (net.lstm.empty() || net.fc.empty()) throw Error(ErrorKind::Dimension, "network has no layers");
  const Eigen::Index steps = windows.front()->rows();
  const auto channels = static_cast<Eigen::Index>(net.input_dim());
  const auto batch = static_cast<Eigen::Index>(windows.size());
  if (steps < 1) throw Error(ErrorKind::Dimension, "window has no time steps");
  for (const auto* w : windows) {
    if (w->rows() != steps || w->cols() != channels) {
      throw Error(ErrorKind::Dimension, "window is " + std::to_string(w->rows()) + "x" +
                                            std::to_string(w->cols()) + ", expected " +
                                            std::to_string(steps) + "x" + std::to_string(channels));
    }
  }

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c = ForwardCache{};
  c.inputs.resize(static_cast<std::size_t>(steps));
  for (Eigen::Index t = 0; t < steps; ++t) {
    Eigen::MatrixXd x(channels, batch);
    for (Eigen::Index b = 0; b < batch; ++b) x.col(b) = windows[static_cast<std::size_t>(b)]->row(t).transpose();
    c.inputs[static_cast<std::size_t>(t)] = std::move(x);
  }

  const std::vector<Eigen::MatrixXd>* layer_in = &c.inputs;
  std::vector<Eigen::MatrixXd> hidden;
  for (const auto& layer : net.lstm) {
    c.lstm_steps.push_back(lstm_forward_cached(layer, *layer_in));
    hidden.clear();
    for (const auto& s : c.lstm_steps.back()) hidden.push_back(s.hidden);
    layer_in = &hidden;
  }

  Eigen::MatrixXd a = c.lstm_steps.back().back().hidden;
  for (std::size_t k = 0; k < net.fc.size(); ++k) {
    c.fc_inputs.push_back(a);
    Eigen::MatrixXd z = net.fc[k].weight * a;
    z.colwise() += net.fc[k].bias;
    c.fc_preact.push_back(z);
    const bool last = k + 1 == net.fc.size();
    if (!last) {
      a = z.cwiseMax(0.0);
    } else if (net.head == HeadKind::Classifier) {
      a = sigmoid(z);
    } else {
      a = std::move(z);
    }
  }
  c.output = a;
  return a;
}

Eigen::VectorXd forward(const NetStack& net, const Eigen::MatrixXd& window) {
  const Eigen::MatrixXd* ptr = &window;
  return forward_batch(net, std::span<const Eigen::MatrixXd* const>(&ptr, 1)).col(0);
}

Gradients backward(const NetStack& net, const ForwardCache& cache, const Eigen::MatrixXd& output_grad) {
  if (output_grad.rows() != cache.output.rows() || output_grad.cols() != cache.output.cols()) {
    throw Error(ErrorKind::Dimension, "output gradient shape does not match forward output");
  }
  Gradients g = net.zeros_like();

  Eigen::MatrixXd dz = output_grad;
  if (net.head == HeadKind::Classifier) {
    dz = (dz.array() * cache.output.array() * (1.0 - cache.output.array())).matrix();
  }
  Eigen::MatrixXd da;
  for (std::size_t k = net.fc.size(); k-- > 0;) {
    g.fc[k].weight = dz * cache.fc_inputs[k].transpose();
    g.fc[k].bias = dz.rowwise().sum();
    require_finite(g.fc[k].weight, "fc layer " + std::to_string(k));
    require_finite(g.fc[k].bias, "fc layer " + std::to_string(k));
    da = net.fc[k].weight.transpose() * dz;
    if (k > 0) {
      dz = (da.array() * (cache.fc_preact[k - 1].array() > 0.0).cast<double>()).matrix();
    }
  }

  const std::size_t steps = cache.inputs.size();
  const Eigen::Index batch = cache.output.cols();
  // Gradient flowing into the hidden states of the current layer from above.
  std::vector<Eigen::MatrixXd> d_hidden(steps);
  for (auto& m : d_hidden) m = Eigen::MatrixXd::Zero(net.lstm.back().width(), batch);
  d_hidden.back() = da;

  for (std::size_t l = net.lstm.size(); l-- > 0;) {
    const auto& layer = net.lstm[l];
    const auto& st = cache.lstm_steps[l];
    const Eigen::Index w = layer.width();
    auto& gl = g.lstm[l];
    std::vector<Eigen::MatrixXd> d_input(steps);

    Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(w, batch);
    Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(w, batch);
    Eigen::MatrixXd dgates(4 * w, batch);
    const Eigen::MatrixXd zero_state = Eigen::MatrixXd::Zero(w, batch);
    for (std::size_t t = steps; t-- > 0;) {
      const auto& s = st[t];
      const Eigen::MatrixXd& c_prev = t > 0 ? st[t - 1].cell : zero_state;
      const Eigen::MatrixXd& h_prev = t > 0 ? st[t - 1].hidden : zero_state;
      const Eigen::MatrixXd& x = l == 0 ? cache.inputs[t] : cache.lstm_steps[l - 1][t].hidden;

      const Eigen::ArrayXXd dh = (d_hidden[t] + dh_next).array();
      const Eigen::ArrayXXd d_out = dh * s.cell_tanh.array();
      const Eigen::ArrayXXd dc =
          dh * s.out_gate.array() * (1.0 - s.cell_tanh.array().square()) + dc_next.array();
      const Eigen::ArrayXXd d_forget = dc * c_prev.array();
      const Eigen::ArrayXXd d_in = dc * s.candidate.array();
      const Eigen::ArrayXXd d_cand = dc * s.in_gate.array();
      dc_next = (dc * s.forget_gate.array()).matrix();

      dgates.topRows(w) = (d_in * s.in_gate.array() * (1.0 - s.in_gate.array())).matrix();
      dgates.middleRows(w, w) =
          (d_forget * s.forget_gate.array() * (1.0 - s.forget_gate.array())).matrix();
      dgates.middleRows(2 * w, w) = (d_cand * (1.0 - s.candidate.array().square())).matrix();
      dgates.bottomRows(w) = (d_out * s.out_gate.array() * (1.0 - s.out_gate.array())).matrix();

      gl.w_input.noalias() += dgates * x.transpose();
      gl.w_recurrent.noalias() += dgates * h_prev.transpose();
      gl.bias += dgates.rowwise().sum();
      dh_next = layer.w_recurrent.transpose() * dgates;
      if (l > 0) d_input[t] = layer.w_input.transpose() * dgates;
    }
    const std::string where = "lstm layer " + std::to_string(l);
    require_finite(gl.w_input, where);
    require_finite(gl.w_recurrent, where);
    require_finite(gl.bias, where);
    if (l > 0) d_hidden = std::move(d_input);
  }
  return g;
}

LossResult masked_mse_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target,
                           const std::vector<bool>& mask) {
  if (pred.size() != target.size() || static_cast<std::size_t>(pred.size()) != mask.size()) {
    throw Error(ErrorKind::Dimension, "prediction, target and mask lengths differ");
  }
  LossResult r;
  r.grad = Eigen::VectorXd::Zero(pred.size());
  const auto selected = static_cast<double>(std::count(mask.begin(), mask.end(), true));
  if (selected == 0.0) return r;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const double diff = pred(i) - target(i);
    sum += diff * diff;
    r.grad(i) = 2.0 * diff / selected;
  }
  r.loss = sum / selected;
  return r;
}

LossResult classifier_loss(const Eigen::VectorXd& prob, const Eigen::VectorXd& target, double alpha,
                           double beta) {
  if (!(alpha >= 1.0) || !std::isfinite(alpha)) {
    throw Error(ErrorKind::Config, "loss alpha must be >= 1");
  }
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorKind::Config, "loss beta must lie in [0, 1]");
  if (prob.size() != target.size() || prob.size() == 0) {
    throw Error(ErrorKind::Dimension, "probability and target lengths differ");
  }
  const auto n = static_cast<double>(prob.size());
  LossResult r;
  r.grad = Eigen::VectorXd::Zero(prob.size());

  double bce = 0.0;
  double sq = 0.0;
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    const double p = prob(i);
    const double t = target(i);
    const double q = std::pow(p, alpha);
    const double qc = std::clamp(q, kProbabilityClamp, 1.0 - kProbabilityClamp);
    bce += -(t * std::log(qc) + (1.0 - t) * std::log(1.0 - qc));
    if (q > kProbabilityClamp && q < 1.0 - kProbabilityClamp) {
      const double dq = alpha * std::pow(p, alpha - 1.0);
      r.grad(i) += beta * (-t / qc + (1.0 - t) / (1.0 - qc)) * dq / n;
    }
    sq += (p - t) * (p - t);
  }
  const double rmse = std::sqrt(sq / n);
  r.loss = beta * bce / n + (1.0 - beta) * rmse;
  if (rmse > 0.0 && beta < 1.0) {
    for (Eigen::Index i = 0; i < prob.size(); ++i) {
      r.grad(i) += (1.0 - beta) * (prob(i) - target(i)) / (n * rmse);
    }
  }
  return r;
}

LossSpec LossSpec::classifier(double alpha, double beta) {
  if (!(alpha >= 1.0)) throw Error(ErrorKind::Config, "loss alpha must be >= 1");
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorKind::Config, "loss beta must lie in [0, 1]");
  return {Kind::Classifier, false, alpha, beta};
}

LossSpec LossSpec::for_head(HeadKind head, double alpha, double beta) {
  switch (head) {
    case HeadKind::Normal: return normal();
    case HeadKind::Extreme: return extreme();
    case HeadKind::Classifier: return classifier(alpha, beta);
  }
  return normal();
}

LossResult evaluate_loss(const LossSpec& spec, const Eigen::VectorXd& pred, const SampleWindow& window) {
  if (spec.kind == LossSpec::Kind::Classifier) {
    Eigen::VectorXd t(static_cast<Eigen::Index>(window.target_mask.size()));
    for (std::size_t i = 0; i < window.target_mask.size(); ++i) {
      t(static_cast<Eigen::Index>(i)) = window.target_mask[i] ? 1.0 : 0.0;
    }
    return classifier_loss(pred, t, spec.alpha, spec.beta);
  }
  if (spec.select_extreme) return masked_mse_loss(pred, window.target, window.target_mask);
  std::vector<bool> normal(window.target_mask.size());
  for (std::size_t i = 0; i < normal.size(); ++i) normal[i] = !window.target_mask[i];
  return masked_mse_loss(pred, window.target, normal);
}

BatchGradient loss_and_gradient(const NetStack& net, std::span<const SampleWindow* const> batch,
                                const LossSpec& spec) {
  std::vector<const Eigen::MatrixXd*> inputs;
  inputs.reserve(batch.size());
  for (const auto* w : batch) inputs.push_back(&w->input);
  ForwardCache cache;
  const Eigen::MatrixXd out = forward_batch(net, inputs, &cache);
  Eigen::MatrixXd out_grad(out.rows(), out.cols());
  const auto bsz = static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto col = static_cast<Eigen::Index>(b);
    const LossResult r = evaluate_loss(spec, out.col(col), *batch[b]);
    total += r.loss;
    out_grad.col(col) = r.grad / bsz;
  }
  BatchGradient result{total / bsz, backward(net, cache, out_grad)};
  return result;
}

double gradient_check(const NetStack& net, const SampleWindow& window, const LossSpec& spec,
                      double eps) {
  const SampleWindow* ptr = &window;
  const std::span<const SampleWindow* const> batch(&ptr, 1);
  BatchGradient analytic = loss_and_gradient(net, batch, spec);

  NetStack probe = net;
  auto probe_blocks = parameter_blocks(probe);
  auto grad_blocks = parameter_blocks(analytic.gradient);
  auto loss_at = [&]() { return evaluate_loss(spec, forward(probe, window.input), window).loss; };

  double worst = 0.0;
  for (std::size_t b = 0; b < probe_blocks.size(); ++b) {
    auto values = probe_blocks[b].values;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = loss_at();
      values[i] = saved - eps;
      const double down = loss_at();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double exact = grad_blocks[b].values[i];
      const double rel =
          std::abs(exact - numeric) / std::max(1e-8, std::abs(exact) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace necplus::nn
