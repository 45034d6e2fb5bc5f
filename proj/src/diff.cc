#include "soel/diff.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "soel/error.h"

namespace soel {
namespace {

using Value = Tape::Value;

Var NextVar(const Tape& tape) { return Var{static_cast<int>(tape.size())}; }

void CubaForward(const Eigen::VectorXd& current, const Value& prev, const NeuronConfig& cfg,
                 const ForwardMode& mode, Value& out) {
  const Eigen::Index n = current.size();
  LayerState st;
  st.u = prev.col(kStateU);
  st.v = prev.col(kStateV);
  st.s = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd v_pre;
  IntegrateCurrent(st, current, cfg, mode, &v_pre);
  out.resize(n, 4);
  out.col(kStateU) = st.u;
  out.col(kStateVPre) = v_pre;
  out.col(kStateV) = st.v;
  out.col(kStateSpikes) = st.s;
}

// Shared adjoint of a CUBA step. Returns dL/dI, the adjoint of the input current.
Eigen::VectorXd CubaBackward(Tape& tape, Var self, Var prev, const Value& g,
                             const NeuronConfig& cfg, const ForwardMode& mode) {
  const Value& st = tape.value(self);
  const Eigen::Index n = st.rows();
  Eigen::VectorXd gvpre = g.col(kStateVPre);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v_pre = st(i, kStateVPre);
    const double s = st(i, kStateSpikes);
    const double gv = g(i, kStateV);
    double gs = g(i, kStateSpikes);
    if (cfg.reset == ResetMode::kHard) {
      if (!mode.detach_reset) gs -= v_pre * gv;
      gvpre[i] += gv * (1.0 - s);
    } else {
      if (!mode.detach_reset) gs -= cfg.threshold * gv;
      gvpre[i] += gv;
    }
    gvpre[i] += gs * SurrogateDerivative(v_pre, cfg.threshold, mode.surrogate);
  }
  const Eigen::VectorXd gu = g.col(kStateU) + (1.0 - cfg.alpha_v) * gvpre;
  if (tape.requires_grad(prev)) {
    Value& gp = tape.GradSlot(prev);
    gp.col(kStateU) += cfg.alpha_u * gu;
    gp.col(kStateV) += cfg.alpha_v * gvpre;
  }
  return (1.0 - cfg.alpha_u) * gu;
}

void CheckState(const Tape& tape, Var state, Eigen::Index n) {
  if (tape.value(state).rows() != n || tape.value(state).cols() != 4)
    throw DimensionError("layer state node has the wrong shape");
}

}  // namespace

Var QuantizeStraightThrough(Tape& tape, Var w, const QuantizationScheme& scheme,
                            RandomSource& rng) {
  // replay re-draws from the same stream position, so it reproduces the rounding
  const RandomSource start = rng;
  auto forward = [w, scheme, start](const Tape& t, Value& out) {
    RandomSource r = start;
    WeightMatrix m(t.value(w));
    QuantizeWeights(m, scheme, r);
    out = m.QuantizedAsDouble();
  };
  Value out;
  forward(tape, out);
  // advance the caller's stream past the draws just consumed
  rng.set_counter(rng.counter() + static_cast<std::uint64_t>(out.size()));
  return tape.Record({w}, std::move(out), forward,
                     [w](Tape& t, const Value& g) { t.GradSlot(w) += g; });
}

Var ZeroLayerState(Tape& tape, Eigen::Index n) { return tape.Constant(Value::Zero(n, 4)); }

Var ZeroTrace(Tape& tape, Eigen::Index n) { return tape.Constant(Value::Zero(n, 2)); }

Var CubaStepInput(Tape& tape, Var w, std::span<const std::int32_t> active, Var prev_state,
                  const NeuronConfig& cfg, const ForwardMode& mode) {
  const Eigen::Index n = tape.value(w).rows();
  CheckState(tape, prev_state, n);
  std::vector<std::int32_t> idx(active.begin(), active.end());
  auto forward = [w, idx, prev_state, cfg, mode](const Tape& t, Value& out) {
    const Value& wv = t.value(w);
    Eigen::VectorXd current = Eigen::VectorXd::Zero(wv.rows());
    AccumulateCurrentSparse(current, wv, idx);
    CubaForward(current, t.value(prev_state), cfg, mode, out);
  };
  Value out;
  forward(tape, out);
  const Var self = NextVar(tape);
  return tape.Record({w, prev_state}, std::move(out), forward,
                     [self, w, idx, prev_state, cfg, mode](Tape& t, const Value& g) {
                       const Eigen::VectorXd gi = CubaBackward(t, self, prev_state, g, cfg, mode);
                       if (t.requires_grad(w)) {
                         Value& gw = t.GradSlot(w);
                         for (std::int32_t j : idx) gw.col(j) += gi;
                       }
                     });
}

Var CubaStep(Tape& tape, Var w, Var pre_state, Var prev_state, const NeuronConfig& cfg,
             const ForwardMode& mode) {
  const Eigen::Index n = tape.value(w).rows();
  CheckState(tape, prev_state, n);
  CheckState(tape, pre_state, tape.value(w).cols());
  auto forward = [w, pre_state, prev_state, cfg, mode](const Tape& t, Value& out) {
    const Value& wv = t.value(w);
    Eigen::VectorXd current = Eigen::VectorXd::Zero(wv.rows());
    AccumulateCurrent(current, wv, t.value(pre_state).col(kStateSpikes));
    CubaForward(current, t.value(prev_state), cfg, mode, out);
  };
  Value out;
  forward(tape, out);
  const Var self = NextVar(tape);
  return tape.Record(
      {w, pre_state, prev_state}, std::move(out), forward,
      [self, w, pre_state, prev_state, cfg, mode](Tape& t, const Value& g) {
        const Eigen::VectorXd gi = CubaBackward(t, self, prev_state, g, cfg, mode);
        if (t.requires_grad(w)) {
          const Value& x = t.value(pre_state);
          Value& gw = t.GradSlot(w);
          for (Eigen::Index j = 0; j < x.rows(); ++j)
            if (x(j, kStateSpikes) != 0.0) gw.col(j) += x(j, kStateSpikes) * gi;
        }
        if (t.requires_grad(pre_state))
          t.GradSlot(pre_state).col(kStateSpikes) += t.value(w).transpose() * gi;
      });
}

Var TraceStepInput(Tape& tape, std::span<const std::int32_t> active, Eigen::Index n,
                   Var prev_trace, const NeuronConfig& cfg) {
  std::vector<std::int32_t> idx(active.begin(), active.end());
  auto forward = [idx, prev_trace, cfg](const Tape& t, Value& out) {
    TraceState tr;
    tr.q = t.value(prev_trace).col(0);
    tr.p = t.value(prev_trace).col(1);
    UpdatePresynTraceSparse(tr, idx, cfg);
    out.resize(tr.q.size(), 2);
    out.col(0) = tr.q;
    out.col(1) = tr.p;
  };
  if (tape.value(prev_trace).rows() != n) throw DimensionError("trace node has the wrong size");
  Value out;
  forward(tape, out);
  // driven by constant input only; no adjoint
  return tape.Record({prev_trace}, std::move(out), forward, {});
}

Var TraceStep(Tape& tape, Var pre_state, Var prev_trace, const NeuronConfig& cfg) {
  if (tape.value(prev_trace).rows() != tape.value(pre_state).rows())
    throw DimensionError("trace node has the wrong size");
  auto forward = [pre_state, prev_trace, cfg](const Tape& t, Value& out) {
    TraceState tr;
    tr.q = t.value(prev_trace).col(0);
    tr.p = t.value(prev_trace).col(1);
    UpdatePresynTrace(tr, t.value(pre_state).col(kStateSpikes), cfg);
    out.resize(tr.q.size(), 2);
    out.col(0) = tr.q;
    out.col(1) = tr.p;
  };
  Value out;
  forward(tape, out);
  return tape.Record({pre_state, prev_trace}, std::move(out), forward,
                     [pre_state, prev_trace, cfg](Tape& t, const Value& g) {
                       const Eigen::VectorXd gq = g.col(0) + (1.0 - cfg.alpha_v) * g.col(1);
                       if (t.requires_grad(prev_trace)) {
                         Value& gp = t.GradSlot(prev_trace);
                         gp.col(0) += cfg.alpha_u * gq;
                         gp.col(1) += cfg.alpha_v * g.col(1);
                       }
                       if (t.requires_grad(pre_state))
                         t.GradSlot(pre_state).col(kStateSpikes) += (1.0 - cfg.alpha_u) * gq;
                     });
}

Var AccumulateSpikes(Tape& tape, Var acc, Var state) {
  auto forward = [acc, state](const Tape& t, Value& out) {
    out = t.value(acc) + t.value(state).col(kStateSpikes);
  };
  if (tape.value(acc).rows() != tape.value(state).rows() || tape.value(acc).cols() != 1)
    throw DimensionError("count accumulator has the wrong shape");
  Value out;
  forward(tape, out);
  return tape.Record({acc, state}, std::move(out), forward, [acc, state](Tape& t, const Value& g) {
    if (t.requires_grad(acc)) t.GradSlot(acc) += g;
    if (t.requires_grad(state)) t.GradSlot(state).col(kStateSpikes) += g;
  });
}

Var SoelShadowUpdate(Tape& tape, Var w, Var trace, Var window_counts,
                     const Eigen::VectorXd& targets, double theta, double scale,
                     bool first_order) {
  if (tape.value(w).rows() != targets.size() || tape.value(window_counts).rows() != targets.size())
    throw DimensionError("targets do not match the plastic layer");
  if (tape.value(trace).rows() != tape.value(w).cols())
    throw DimensionError("trace does not match the plastic layer");
  // gated error, with the gate as a constant mask
  auto gated = [targets, theta](const Value& counts, Eigen::VectorXd& mask) {
    Eigen::VectorXd e = targets - counts.col(0);
    mask.resize(e.size());
    for (Eigen::Index i = 0; i < e.size(); ++i) mask[i] = std::abs(e[i]) >= theta ? 1.0 : 0.0;
    return Eigen::VectorXd(e.cwiseProduct(mask));
  };
  auto forward = [w, trace, window_counts, gated, scale](const Tape& t, Value& out) {
    Eigen::VectorXd mask;
    const Eigen::VectorXd y = gated(t.value(window_counts), mask);
    out = t.value(w);
    out.noalias() += scale * y * t.value(trace).col(1).transpose();
  };
  Value out;
  forward(tape, out);
  return tape.Record(
      {w, trace, window_counts}, std::move(out), forward,
      [w, trace, window_counts, gated, scale, first_order](Tape& t, const Value& g) {
        if (t.requires_grad(w)) t.GradSlot(w) += g;
        if (first_order) return;
        Eigen::VectorXd mask;
        const Eigen::VectorXd y = gated(t.value(window_counts), mask);
        const Eigen::VectorXd p = t.value(trace).col(1);
        if (t.requires_grad(trace)) t.GradSlot(trace).col(1) += scale * g.transpose() * y;
        if (t.requires_grad(window_counts))
          t.GradSlot(window_counts).col(0) -= scale * mask.cwiseProduct(g * p);
      });
}

Var CountCrossEntropy(Tape& tape, Var counts, int label, double logit_scale) {
  const Eigen::Index n = tape.value(counts).rows();
  if (label < 0 || label >= n) throw std::out_of_range("label out of range");
  auto softmax = [logit_scale](const Value& c) {
    Eigen::VectorXd z = logit_scale * c.col(0);
    z.array() -= z.maxCoeff();
    Eigen::VectorXd e = z.array().exp();
    return Eigen::VectorXd(e / e.sum());
  };
  auto forward = [counts, label, logit_scale](const Tape& t, Value& out) {
    const Eigen::VectorXd z = logit_scale * t.value(counts).col(0);
    const double m = z.maxCoeff();
    const double lse = m + std::log((z.array() - m).exp().sum());
    out = Value::Constant(1, 1, lse - z[label]);
  };
  Value out;
  forward(tape, out);
  return tape.Record({counts}, std::move(out), forward,
                     [counts, label, logit_scale, softmax](Tape& t, const Value& g) {
                       Eigen::VectorXd d = softmax(t.value(counts));
                       d[label] -= 1.0;
                       t.GradSlot(counts).col(0) += g(0, 0) * logit_scale * d;
                     });
}

Var SumScalars(Tape& tape, std::span<const Var> terms) {
  std::vector<Var> inputs(terms.begin(), terms.end());
  auto forward = [inputs](const Tape& t, Value& out) {
    double s = 0.0;
    for (Var v : inputs) s += t.value(v)(0, 0);
    out = Value::Constant(1, 1, s);
  };
  Value out;
  forward(tape, out);
  return tape.Record(inputs, std::move(out), forward, [inputs](Tape& t, const Value& g) {
    for (Var v : inputs)
      if (t.requires_grad(v)) t.GradSlot(v) += g;
  });
}

Var Scale(Tape& tape, Var x, double factor) {
  auto forward = [x, factor](const Tape& t, Value& out) { out = factor * t.value(x); };
  Value out;
  forward(tape, out);
  return tape.Record({x}, std::move(out), forward,
                     [x, factor](Tape& t, const Value& g) { t.GradSlot(x) += factor * g; });
}

DifferentiableNetwork::DifferentiableNetwork(Tape& tape, const NetworkTopology& net,
                                             const DiffOptions& opts, RandomSource rng)
    : tape_(tape), net_(net), opts_(opts), rng_(rng), plastic_(PlasticLayer(net)) {
  net_.Validate();
  for (int l = 0; l < net_.layers(); ++l) {
    leaves_.push_back(tape_.Leaf(net_.weights[l].shadow()));
    shadow_.push_back(leaves_.back());
    forward_.push_back(ForwardWeights(l));
  }
}

Var DifferentiableNetwork::ForwardWeights(int layer) {
  if (!opts_.quantize) return shadow_[layer];
  return QuantizeStraightThrough(tape_, shadow_[layer], opts_.scheme, rng_);
}

void DifferentiableNetwork::ResetPlasticWeights() {
  shadow_[plastic_] = leaves_[plastic_];
  forward_[plastic_] = ForwardWeights(plastic_);
}

Var DifferentiableNetwork::RunSample(const BinnedSample& sample, const InnerUpdateSpec* learn) {
  if (sample.inputs() != net_.inputs()) throw DimensionError("sample does not match network inputs");
  const int layers = net_.layers();
  std::vector<Var> state(layers);
  for (int l = 0; l < layers; ++l) state[l] = ZeroLayerState(tape_, net_.sizes[l + 1]);
  const Var zero_counts = tape_.Constant(Value::Zero(net_.outputs(), 1));
  Var total = zero_counts;
  Var window = zero_counts;
  Var trace;
  Eigen::VectorXd targets;
  if (learn) {
    trace = ZeroTrace(tape_, net_.sizes[plastic_]);
    targets = Eigen::VectorXd::Constant(net_.outputs(), learn->soel->off_target_spikes);
    targets[learn->label] = learn->soel->target_spikes;
  }
  for (int t = 0; t < sample.steps; ++t) {
    state[0] = CubaStepInput(tape_, forward_[0], sample.active[t], state[0], net_.neurons[0], opts_.mode);
    for (int l = 1; l < layers; ++l)
      state[l] = CubaStep(tape_, forward_[l], state[l - 1], state[l], net_.neurons[l], opts_.mode);
    total = AccumulateSpikes(tape_, total, state.back());
    if (!learn) continue;
    const NeuronConfig& tcfg = net_.neurons[plastic_];
    trace = plastic_ == 0
                ? TraceStepInput(tape_, sample.active[t], net_.sizes[0], trace, tcfg)
                : TraceStep(tape_, state[plastic_ - 1], trace, tcfg);
    window = AccumulateSpikes(tape_, window, state.back());
    if ((t + 1) % learn->soel->window == 0) {
      shadow_[plastic_] = SoelShadowUpdate(tape_, shadow_[plastic_], trace, window, targets,
                                           learn->soel->theta, learn->scale, opts_.first_order);
      forward_[plastic_] = ForwardWeights(plastic_);
      window = zero_counts;
      ++inner_updates_;
    }
  }
  return total;
}

bool GradientBundle::AllFinite() const {
  return std::isfinite(loss) &&
         std::all_of(grads.begin(), grads.end(), [](const auto& g) { return g.allFinite(); });
}

GradientBundle& GradientBundle::operator+=(const GradientBundle& other) {
  if (grads.empty()) {
    *this = other;
    return *this;
  }
  if (grads.size() != other.grads.size()) throw DimensionError("gradient bundles differ in layers");
  for (std::size_t l = 0; l < grads.size(); ++l) grads[l] += other.grads[l];
  loss += other.loss;
  return *this;
}

GradientBundle Backward(Tape& tape, Var loss, std::span<const Var> leaves) {
  tape.Backward(loss);
  GradientBundle out;
  out.loss = tape.value(loss)(0, 0);
  for (Var leaf : leaves) out.grads.push_back(tape.grad(leaf));
  return out;
}

Var RecordSupervisedLoss(DifferentiableNetwork& dnet, std::span<const BinnedSample> samples) {
  Tape& tape = *dnet.tape_ptr();
  std::vector<Var> terms;
  for (const BinnedSample& s : samples)
    terms.push_back(CountCrossEntropy(tape, dnet.RunSample(s), s.label, dnet.logit_scale()));
  return SumScalars(tape, terms);
}

double RelativeError(double a, double b, double floor) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

GradCheckResult GradCheck(const NetworkTopology& net, const LossRecorder& record, double epsilon,
                          int count, RandomSource rng, bool smoothed) {
  GradCheckResult result;
  result.surrogate_mismatch_expected = !smoothed;
  Tape tape;
  const RecordedLoss base = record(tape, net);
  const GradientBundle g = Backward(tape, base.loss, base.leaves);

  std::vector<std::pair<int, Eigen::Index>> picks;
  for (int l = 0; l < net.layers(); ++l)
    for (Eigen::Index k = 0; k < net.weights[l].shadow().size(); ++k) picks.emplace_back(l, k);
  if (count > 0 && count < static_cast<int>(picks.size())) {
    // partial Fisher-Yates
    for (int i = 0; i < count; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.UniformInt(picks.size() - i));
      std::swap(picks[i], picks[j]);
    }
    picks.resize(count);
  }
  NetworkTopology probe = net;
  for (const auto& [layer, k] : picks) {
    double& w = probe.weights[layer].mutable_shadow().data()[k];
    const double w0 = w;
    auto eval = [&](double value) {
      w = value;
      Tape t;
      const RecordedLoss r = record(t, probe);
      return t.value(r.loss)(0, 0);
    };
    const double fd = (eval(w0 + epsilon) - eval(w0 - epsilon)) / (2.0 * epsilon);
    w = w0;
    result.max_rel_error =
        std::max(result.max_rel_error, RelativeError(g.grads[layer].data()[k], fd));
    ++result.checked;
  }
  return result;
}

}  // namespace soel
