#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "soel/quantization.h"
#include "soel/sample.h"
#include "soel/surrogate.h"

namespace soel {

enum class ResetMode { kHard, kSoft };

// Current-based LIF parameters. Decays are per 1 ms step.
struct NeuronConfig {
  double alpha_u = 0.8;
  double alpha_v = 0.9;
  double threshold = 64.0;
  ResetMode reset = ResetMode::kHard;
  // Truncate u and v toward zero after every update, emulating integer state registers.
  bool integer_state = false;

  void Validate() const;
  bool operator==(const NeuronConfig&) const = default;
};

// How spikes are produced in the forward pass.
struct ForwardMode {
  // Replace the Heaviside threshold by the surrogate's smooth antiderivative.
  bool smoothed = false;
  SurrogateConfig surrogate;
  // Backward only: treat the reset term as constant w.r.t. the spike.
  bool detach_reset = false;
};

struct LayerState {
  Eigen::VectorXd u;  // aggregated synaptic current per neuron
  Eigen::VectorXd v;  // membrane potential
  Eigen::VectorXd s;  // spikes emitted this step

  explicit LayerState(Eigen::Index n = 0)
      : u(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)), s(Eigen::VectorXd::Zero(n)) {}
  void Reset();
};

// Second-order pre-synaptic eligibility trace, one (q, p) pair per pre-neuron.
struct TraceState {
  Eigen::VectorXd q;
  Eigen::VectorXd p;

  explicit TraceState(Eigen::Index n = 0)
      : q(Eigen::VectorXd::Zero(n)), p(Eigen::VectorXd::Zero(n)) {}
  void Reset();
};

// Advances one layer by one step given its total input current W*x. When
// v_before_reset is non-null it receives the potential prior to reset.
void IntegrateCurrent(LayerState& state, const Eigen::Ref<const Eigen::VectorXd>& current,
                      const NeuronConfig& cfg, const ForwardMode& mode,
                      Eigen::VectorXd* v_before_reset = nullptr);

// Single layer step from input spikes. Returns the emitted spikes.
Eigen::VectorXd StepCubaLayer(LayerState& state, const Eigen::Ref<const Eigen::VectorXd>& input,
                              const Eigen::MatrixXd& w, const NeuronConfig& cfg,
                              const ForwardMode& mode = {});

// Adds W*x to `current`, skipping silent inputs.
void AccumulateCurrent(Eigen::VectorXd& current, const Eigen::MatrixXd& w,
                       const Eigen::Ref<const Eigen::VectorXd>& x);
void AccumulateCurrentSparse(Eigen::VectorXd& current, const Eigen::MatrixXd& w,
                             std::span<const std::int32_t> active);

void UpdatePresynTrace(TraceState& trace, const Eigen::Ref<const Eigen::VectorXd>& input,
                       const NeuronConfig& cfg);
void UpdatePresynTraceSparse(TraceState& trace, std::span<const std::int32_t> active,
                             const NeuronConfig& cfg);

// Feed-forward stack of CUBA layers. Layer l projects sizes[l] -> sizes[l+1].
struct NetworkTopology {
  std::vector<int> sizes;
  std::vector<NeuronConfig> neurons;
  std::vector<WeightMatrix> weights;
  std::vector<bool> plastic;

  int layers() const { return static_cast<int>(weights.size()); }
  int inputs() const { return sizes.front(); }
  int outputs() const { return sizes.back(); }
  void Validate() const;

  bool operator==(const NetworkTopology&) const = default;
};

// Fully-connected topology with zero weights; only the last layer is plastic.
NetworkTopology MakeTopology(std::vector<int> sizes, const NeuronConfig& neuron);

enum class WeightView { kShadow, kQuantized };

// Stateful forward simulator. In kQuantized view the simulator only ever reads
// the integer image of each weight matrix.
class NetworkSimulator {
 public:
  NetworkSimulator(const NetworkTopology& net, WeightView view, ForwardMode mode = {});

  void Reset();
  // One 1 ms step; returns the output-layer spikes.
  const Eigen::VectorXd& Step(std::span<const std::int32_t> active_inputs);
  // Re-read one layer's weights after they changed.
  void RefreshWeights(int layer);

  const LayerState& layer_state(int layer) const { return states_[layer]; }
  // Spikes entering layer `layer` on the most recent step (layer 0: network input).
  const Eigen::VectorXd& layer_input(int layer) const { return inputs_[layer]; }
  const std::vector<std::int32_t>& last_active_inputs() const { return last_active_; }
  const NetworkTopology& topology() const { return net_; }

 private:
  const NetworkTopology& net_;
  WeightView view_;
  ForwardMode mode_;
  std::vector<Eigen::MatrixXd> quantized_cache_;
  std::vector<LayerState> states_;
  std::vector<Eigen::VectorXd> inputs_;
  std::vector<std::int32_t> last_active_;
  Eigen::VectorXd current_;

  const Eigen::MatrixXd& Weights(int layer) const;
};

struct NetworkRecord {
  std::vector<Eigen::VectorXd> output_spikes;       // one per step
  std::vector<Eigen::VectorXd> window_counts;       // output counts per completed window
  Eigen::VectorXd total_counts;
  std::vector<TraceState> epoch_traces;             // plastic-layer trace at each window end
  TraceState final_trace;
};

// Runs one sample through the network without plasticity. The plastic layer is
// the last layer flagged plastic (or the output layer when none is).
NetworkRecord RunNetwork(const NetworkTopology& net, const BinnedSample& sample, int window,
                         WeightView view = WeightView::kShadow, const ForwardMode& mode = {});

int PlasticLayer(const NetworkTopology& net);

}  // namespace soel
