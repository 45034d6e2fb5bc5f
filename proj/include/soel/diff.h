#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "soel/dynamics.h"
#include "soel/plasticity.h"
#include "soel/quantization.h"
#include "soel/random.h"
#include "soel/sample.h"
#include "soel/tape.h"

namespace soel {

using Var = Tape::Var;

// ---- primitive operations -------------------------------------------------

// Layer state nodes are n x 4 matrices with columns (u, v before reset, v, s).
inline constexpr int kStateU = 0;
inline constexpr int kStateVPre = 1;
inline constexpr int kStateV = 2;
inline constexpr int kStateSpikes = 3;

// Stochastically rounded copy of `w` whose adjoint is the identity.
Var QuantizeStraightThrough(Tape& tape, Var w, const QuantizationScheme& scheme, RandomSource& rng);

// One CUBA-LIF step driven by binary network input (sorted active indices).
Var CubaStepInput(Tape& tape, Var w, std::span<const std::int32_t> active, Var prev_state,
                  const NeuronConfig& cfg, const ForwardMode& mode);
// One CUBA-LIF step driven by the spikes of a previous layer state node.
Var CubaStep(Tape& tape, Var w, Var pre_state, Var prev_state, const NeuronConfig& cfg,
             const ForwardMode& mode);
Var ZeroLayerState(Tape& tape, Eigen::Index n);

// Pre-synaptic trace nodes are n x 2 matrices with columns (q, p).
Var TraceStepInput(Tape& tape, std::span<const std::int32_t> active, Eigen::Index n,
                   Var prev_trace, const NeuronConfig& cfg);
Var TraceStep(Tape& tape, Var pre_state, Var prev_trace, const NeuronConfig& cfg);
Var ZeroTrace(Tape& tape, Eigen::Index n);

// acc + spikes column of a layer state node.
Var AccumulateSpikes(Tape& tape, Var acc, Var state);

// w + scale * y p^T where y = gate(targets - counts); the gate |e| >= theta is
// a stop-gradient mask. With first_order set, y and p are treated as constants.
Var SoelShadowUpdate(Tape& tape, Var w, Var trace, Var window_counts,
                     const Eigen::VectorXd& targets, double theta, double scale, bool first_order);

// -log softmax(scale * counts)[label], a 1x1 node.
Var CountCrossEntropy(Tape& tape, Var counts, int label, double logit_scale);

Var SumScalars(Tape& tape, std::span<const Var> terms);
Var Scale(Tape& tape, Var x, double factor);

// ---- network level ----------------------------------------------------------

struct DiffOptions {
  ForwardMode mode;
  bool quantize = false;
  QuantizationScheme scheme;
  double logit_scale = 1.0;
  bool first_order = false;  // drop second-order terms through the inner updates
};

struct InnerUpdateSpec {
  const SoelConfig* soel = nullptr;
  double scale = 1.0;  // alpha * eta
  int label = 0;
};

// Records a network on a tape. Every layer's shadow weights become leaves;
// plasticity rewrites the plastic layer's current weight node.
class DifferentiableNetwork {
 public:
  DifferentiableNetwork(Tape& tape, const NetworkTopology& net, const DiffOptions& opts,
                        RandomSource rng);

  const std::vector<Var>& leaves() const { return leaves_; }
  const std::vector<Var>& current_shadow() const { return shadow_; }
  int plastic_layer() const { return plastic_; }

  // Runs one sample from rest and returns its total output counts node. With
  // `learn` set, applies a differentiable SOEL update at every window end.
  Var RunSample(const BinnedSample& sample, const InnerUpdateSpec* learn = nullptr);

  // Restores the plastic layer to the initial (leaf) weights.
  void ResetPlasticWeights();

  long long inner_updates() const { return inner_updates_; }
  Tape* tape_ptr() const { return &tape_; }
  double logit_scale() const { return opts_.logit_scale; }

 private:
  Var ForwardWeights(int layer);

  Tape& tape_;
  const NetworkTopology& net_;
  DiffOptions opts_;
  RandomSource rng_;
  int plastic_;
  std::vector<Var> leaves_;
  std::vector<Var> shadow_;
  std::vector<Var> forward_;
  long long inner_updates_ = 0;
};

struct GradientBundle {
  std::vector<Eigen::MatrixXd> grads;  // aligned with the topology's layers
  double loss = 0.0;

  bool AllFinite() const;
  GradientBundle& operator+=(const GradientBundle& other);
};

// Sweeps the tape from `loss` and collects adjoints of the given leaves.
GradientBundle Backward(Tape& tape, Var loss, std::span<const Var> leaves);

// Plain supervised loss over labelled samples (no plasticity).
Var RecordSupervisedLoss(DifferentiableNetwork& dnet, std::span<const BinnedSample> samples);

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  // True when the forward is not differentiable (hard threshold), so a
  // mismatch is expected rather than a bug.
  bool surrogate_mismatch_expected = false;
};

// Relative error |a - b| / max(|a|, |b|, floor).
double RelativeError(double a, double b, double floor = 1e-7);

// Central finite differences on `count` randomly chosen weights (all when
// count <= 0) against tape gradients, for any scalar loss recorder.
struct RecordedLoss {
  Var loss;
  std::vector<Var> leaves;  // one per layer
};
using LossRecorder = std::function<RecordedLoss(Tape&, const NetworkTopology&)>;
GradCheckResult GradCheck(const NetworkTopology& net, const LossRecorder& record, double epsilon,
                          int count, RandomSource rng, bool smoothed);

}  // namespace soel
