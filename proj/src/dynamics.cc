#include "soel/dynamics.h"

#include <cmath>
#include <string>

#include "soel/error.h"

namespace soel {

void NeuronConfig::Validate() const {
  if (!(alpha_u >= 0.0 && alpha_u < 1.0)) throw ConfigError("alpha_u must lie in [0, 1)");
  if (!(alpha_v >= 0.0 && alpha_v < 1.0)) throw ConfigError("alpha_v must lie in [0, 1)");
  if (!(threshold > 0.0)) throw ConfigError("threshold must be positive");
}

void LayerState::Reset() {
  u.setZero();
  v.setZero();
  s.setZero();
}

void TraceState::Reset() {
  q.setZero();
  p.setZero();
}

void IntegrateCurrent(LayerState& state, const Eigen::Ref<const Eigen::VectorXd>& current,
                      const NeuronConfig& cfg, const ForwardMode& mode,
                      Eigen::VectorXd* v_before_reset) {
  const Eigen::Index n = state.v.size();
  if (current.size() != n) throw DimensionError("input current does not match layer size");
  state.u = cfg.alpha_u * state.u + (1.0 - cfg.alpha_u) * current;
  if (cfg.integer_state) state.u = state.u.unaryExpr([](double x) { return std::trunc(x); });
  state.v = cfg.alpha_v * state.v + (1.0 - cfg.alpha_v) * state.u;
  if (cfg.integer_state) state.v = state.v.unaryExpr([](double x) { return std::trunc(x); });
  if (v_before_reset) *v_before_reset = state.v;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = state.v[i];
    const double s = mode.smoothed ? SmoothSpike(v, cfg.threshold, mode.surrogate)
                                   : (v >= cfg.threshold ? 1.0 : 0.0);
    state.s[i] = s;
    state.v[i] = cfg.reset == ResetMode::kHard ? v * (1.0 - s) : v - cfg.threshold * s;
  }
}

void AccumulateCurrent(Eigen::VectorXd& current, const Eigen::MatrixXd& w,
                       const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (w.cols() != x.size() || w.rows() != current.size())
    throw DimensionError("weight matrix " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()) + " does not match input of size " +
                         std::to_string(x.size()));
  for (Eigen::Index j = 0; j < x.size(); ++j)
    if (x[j] != 0.0) current.noalias() += x[j] * w.col(j);
}

void AccumulateCurrentSparse(Eigen::VectorXd& current, const Eigen::MatrixXd& w,
                             std::span<const std::int32_t> active) {
  for (std::int32_t j : active) {
    if (j < 0 || j >= w.cols()) throw DimensionError("input index out of range");
    current.noalias() += w.col(j);
  }
}

Eigen::VectorXd StepCubaLayer(LayerState& state, const Eigen::Ref<const Eigen::VectorXd>& input,
                              const Eigen::MatrixXd& w, const NeuronConfig& cfg,
                              const ForwardMode& mode) {
  if (w.rows() != state.v.size()) throw DimensionError("weight rows do not match layer size");
  Eigen::VectorXd current = Eigen::VectorXd::Zero(w.rows());
  AccumulateCurrent(current, w, input);
  IntegrateCurrent(state, current, cfg, mode);
  return state.s;
}

void UpdatePresynTrace(TraceState& trace, const Eigen::Ref<const Eigen::VectorXd>& input,
                       const NeuronConfig& cfg) {
  if (input.size() != trace.q.size()) throw DimensionError("trace size does not match input");
  trace.q = cfg.alpha_u * trace.q + (1.0 - cfg.alpha_u) * input;
  trace.p = cfg.alpha_v * trace.p + (1.0 - cfg.alpha_v) * trace.q;
}

void UpdatePresynTraceSparse(TraceState& trace, std::span<const std::int32_t> active,
                             const NeuronConfig& cfg) {
  trace.q *= cfg.alpha_u;
  for (std::int32_t j : active) {
    if (j < 0 || j >= trace.q.size()) throw DimensionError("input index out of range");
    trace.q[j] += 1.0 - cfg.alpha_u;
  }
  trace.p = cfg.alpha_v * trace.p + (1.0 - cfg.alpha_v) * trace.q;
}

void NetworkTopology::Validate() const {
  if (sizes.size() < 2) throw ConfigError("topology needs at least an input and an output layer");
  if (weights.size() != sizes.size() - 1 || neurons.size() != weights.size() ||
      plastic.size() != weights.size())
    throw ConfigError("topology layer lists have inconsistent lengths");
  for (int l = 0; l < layers(); ++l) {
    if (weights[l].rows() != sizes[l + 1] || weights[l].cols() != sizes[l])
      throw DimensionError("layer " + std::to_string(l) + " weights do not match sizes");
    neurons[l].Validate();
  }
}

NetworkTopology MakeTopology(std::vector<int> sizes, const NeuronConfig& neuron) {
  NetworkTopology net;
  net.sizes = std::move(sizes);
  if (net.sizes.size() < 2) throw ConfigError("topology needs at least two layer sizes");
  for (std::size_t l = 0; l + 1 < net.sizes.size(); ++l) {
    if (net.sizes[l] <= 0 || net.sizes[l + 1] <= 0) throw ConfigError("layer sizes must be positive");
    net.weights.emplace_back(net.sizes[l + 1], net.sizes[l]);
    net.neurons.push_back(neuron);
    net.plastic.push_back(l + 2 == net.sizes.size());
  }
  return net;
}

int PlasticLayer(const NetworkTopology& net) {
  for (int l = net.layers() - 1; l >= 0; --l)
    if (net.plastic[l]) return l;
  return net.layers() - 1;
}

NetworkSimulator::NetworkSimulator(const NetworkTopology& net, WeightView view, ForwardMode mode)
    : net_(net), view_(view), mode_(std::move(mode)) {
  net_.Validate();
  for (int l = 0; l < net_.layers(); ++l) {
    states_.emplace_back(net_.sizes[l + 1]);
    inputs_.push_back(Eigen::VectorXd::Zero(net_.sizes[l]));
  }
  if (view_ == WeightView::kQuantized) {
    quantized_cache_.resize(net_.layers());
    for (int l = 0; l < net_.layers(); ++l) RefreshWeights(l);
  }
}

void NetworkSimulator::Reset() {
  for (auto& s : states_) s.Reset();
  for (auto& x : inputs_) x.setZero();
  last_active_.clear();
}

void NetworkSimulator::RefreshWeights(int layer) {
  if (view_ == WeightView::kQuantized)
    quantized_cache_[layer] = net_.weights[layer].quantized().cast<double>();
}

const Eigen::MatrixXd& NetworkSimulator::Weights(int layer) const {
  return view_ == WeightView::kQuantized ? quantized_cache_[layer] : net_.weights[layer].shadow();
}

const Eigen::VectorXd& NetworkSimulator::Step(std::span<const std::int32_t> active_inputs) {
  last_active_.assign(active_inputs.begin(), active_inputs.end());
  inputs_[0].setZero();
  for (std::int32_t j : active_inputs) {
    if (j < 0 || j >= net_.inputs()) throw DimensionError("input index out of range");
    inputs_[0][j] = 1.0;
  }
  for (int l = 0; l < net_.layers(); ++l) {
    const Eigen::MatrixXd& w = Weights(l);
    current_.setZero(w.rows());
    if (l == 0)
      AccumulateCurrentSparse(current_, w, active_inputs);
    else
      AccumulateCurrent(current_, w, inputs_[l]);
    IntegrateCurrent(states_[l], current_, net_.neurons[l], mode_);
    if (l + 1 < net_.layers()) inputs_[l + 1] = states_[l].s;
  }
  return states_.back().s;
}

NetworkRecord RunNetwork(const NetworkTopology& net, const BinnedSample& sample, int window,
                         WeightView view, const ForwardMode& mode) {
  if (sample.steps <= 0) throw DimensionError("sample has no time steps");
  if (sample.inputs() != net.inputs())
    throw DimensionError("sample has " + std::to_string(sample.inputs()) +
                         " inputs, network expects " + std::to_string(net.inputs()));
  if (window <= 0) throw ConfigError("window must be positive");
  NetworkSimulator sim(net, view, mode);
  const int plastic = PlasticLayer(net);
  const NeuronConfig& trace_cfg = net.neurons[plastic];
  NetworkRecord rec;
  rec.total_counts = Eigen::VectorXd::Zero(net.outputs());
  Eigen::VectorXd window_counts = Eigen::VectorXd::Zero(net.outputs());
  TraceState trace(net.sizes[plastic]);
  for (int t = 0; t < sample.steps; ++t) {
    const Eigen::VectorXd& out = sim.Step(sample.active[t]);
    if (plastic == 0)
      UpdatePresynTraceSparse(trace, sample.active[t], trace_cfg);
    else
      UpdatePresynTrace(trace, sim.layer_input(plastic), trace_cfg);
    rec.output_spikes.push_back(out);
    rec.total_counts += out;
    window_counts += out;
    if ((t + 1) % window == 0) {
      rec.window_counts.push_back(window_counts);
      rec.epoch_traces.push_back(trace);
      window_counts.setZero();
    }
  }
  rec.final_trace = trace;
  return rec;
}

}  // namespace soel
