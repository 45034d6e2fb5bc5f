#pragma once

#include <optional>

#include <Eigen/Core>

#include "soel/dynamics.h"
#include "soel/quantization.h"
#include "soel/random.h"

namespace soel {

class SumOfProductsRule;

struct SoelConfig {
  double theta = 1.0;          // error threshold, in spikes
  double eta = 1.0;            // learning rate
  int window = 20;             // learning-epoch interval in steps, 1..63
  int offset = 64;             // post-trace offset c
  int target_spikes = 2;       // per window, labeled neuron
  int off_target_spikes = 0;   // per window, every other output neuron

  void Validate() const;
  bool operator==(const SoelConfig&) const = default;
};

struct SoelState {
  Eigen::VectorXi spike_counter;       // output spikes in the current window
  int steps_into_window = 0;
  Eigen::VectorXi last_encoded_error;  // y written at the last epoch (0 = no learning)
  long long epochs = 0;
  long long row_writes = 0;            // rows whose weights were updated

  explicit SoelState(Eigen::Index outputs = 0)
      : spike_counter(Eigen::VectorXi::Zero(outputs)),
        last_encoded_error(Eigen::VectorXi::Zero(outputs)) {}
};

// e = target - count, passed through when |e| >= theta and zeroed otherwise.
double ComputeWindowError(int target, int count, double theta);

// Offset-encodes a gated error into a non-negative post-trace value. 0 is the
// no-learning sentinel.
int EncodePostTrace(double gated_error, int offset);
inline int DecodePostTrace(int encoded, int offset) { return encoded - offset; }

// Per pre-neuron weight change for one post-neuron: eta * p_j * (y - c), or zero
// when y is the sentinel.
Eigen::VectorXd SoelUpdate(const Eigen::Ref<const Eigen::VectorXd>& pre_trace, int encoded,
                           const SoelConfig& cfg);

struct EpochOutcome {
  bool boundary = false;
  int rows_written = 0;
};

// Everything the epoch program needs besides the plastic layer's own state.
struct EpochContext {
  const SoelConfig* soel = nullptr;
  // Integer form when set: written rows become round(quantized + dw); the
  // shadow row is overwritten with the unrounded value and never read.
  const QuantizationScheme* scheme = nullptr;
  RandomSource* rng = nullptr;                 // required with scheme
  const SumOfProductsRule* rule = nullptr;     // evaluate via rule engine when set
  double eta_scale = 1.0;                      // multiplies eta (inner-loop rate)
};

// Called once per simulation step with that step's output spikes. At window
// boundaries: a blank window writes 0 to every post-trace; an unlabeled window
// is inference only; a labeled window writes offset-encoded errors and applies
// the SOEL update to the rows whose error passed the gate.
EpochOutcome LearningEpochStep(SoelState& state, const TraceState& trace,
                               const Eigen::Ref<const Eigen::VectorXd>& output_spikes,
                               std::optional<int> label, bool blank, WeightMatrix& w,
                               const EpochContext& ctx);

}  // namespace soel
