#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "soel/data.h"
#include "soel/diff.h"
#include "soel/dynamics.h"
#include "soel/plasticity.h"
#include "soel/quantization.h"

namespace soel {

struct InnerLoopConfig {
  double alpha = 0.1;              // scales the SOEL learning rate during adaptation
  int steps = 1;                   // passes over the training shots
  std::vector<int> plastic_layers; // empty = final layer only

  void Validate(int layers) const;
  bool operator==(const InnerLoopConfig&) const = default;
};

struct OuterLoopConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int meta_batch = 8;
  int iterations = 1000;

  void Validate() const;
};

// Everything needed to deploy or resume a meta-trained initialization.
struct MetaModel {
  NetworkTopology net;  // shadow + quantized weights = w0
  SoelConfig soel;
  SurrogateConfig surrogate;
  QuantizationScheme scheme;
  InnerLoopConfig inner;
  bool quantized = true;       // deploy and train through the integer weight view
  double logit_scale = 0.2;
  bool detach_reset = false;   // training backward only
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  std::uint64_t rounding_seed = 0;  // stream that produced the quantized view

  // Recomputes every layer's quantized view from its shadow view using the
  // recorded rounding seed.
  void Requantize();
  bool operator==(const MetaModel&) const = default;
};

// Gaussian initialisation per layer group, in integer weight units.
struct InitOptions {
  double input_mean = 10.0;
  double input_std = 24.0;
  double hidden_mean = 10.0;
  double hidden_std = 24.0;
  double output_mean = 10.0;
  double output_std = 8.0;
};

void InitializeWeights(MetaModel& model, const InitOptions& init, std::uint64_t seed);

// ---- deployment (hardware form) --------------------------------------------

struct AdaptResult {
  NetworkTopology net;
  long long row_writes = 0;
  long long epochs = 0;
};

// One-shot style adaptation: every training shot is presented `inner.steps`
// times, with SOEL epochs applied to the plastic layer only. In quantized
// models the forward pass reads only the integer weight view.
AdaptResult InnerAdapt(const MetaModel& model, std::span<const BinnedSample> train,
                       RandomSource rng);

struct Prediction {
  int label = 0;
  bool tie = false;
  Eigen::VectorXd counts;
};

// Argmax of output spike counts; ties resolve to the lowest index.
Prediction Classify(const NetworkTopology& net, const BinnedSample& sample, bool quantized,
                    int window);

struct EpisodeResult {
  double accuracy = 0.0;
  Eigen::MatrixXi confusion;  // (true, predicted)
  long long inner_updates = 0;
  int ties = 0;
};

EpisodeResult MetaTestTrial(const MetaModel& model, const Episode& task, RandomSource rng);

struct TrialStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> accuracies;
};

struct TrialProtocol {
  int trials = 200;
  int way = 5;
  int shot = 1;
  int queries = 10;
  std::uint64_t seed = 0;
  Partition partition = Partition::kTest;
};

// Each trial's episode and rounding streams are keyed by (seed, trial index).
TrialStats RunTrials(const MetaModel& model, const MetaDataset& data, const TrialProtocol& p,
                     int workers = 1);
TrialStats KnnTrials(const MetaDataset& data, const TrialProtocol& p, int k = 1);

// ---- differentiable bi-level objective -------------------------------------

DiffOptions TrainingDiffOptions(const MetaModel& model, bool first_order = false);

// Loss of one task on its query set after differentiable inner adaptation on
// its training shots, recorded on `dnet`'s tape.
Var RecordTaskLoss(DifferentiableNetwork& dnet, const Episode& task, const MetaModel& model);

struct OuterLossResult {
  GradientBundle bundle;  // summed over tasks; bundle.loss is the outer loss
  long long inner_updates = 0;
};

// Outer loss over a batch of tasks and its gradient w.r.t. w0. Task k uses the
// rounding stream `rng.Fork(k)`; gradients are summed in task order.
OuterLossResult OuterLoss(const MetaModel& model, std::span<const Episode> tasks,
                          RandomSource rng, bool first_order = false, int workers = 1);

// ---- outer optimizer -------------------------------------------------------

struct AdamState {
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  long long t = 0;

  bool operator==(const AdamState&) const = default;
};

// Bias-corrected Adam step; `t` is taken from state.t + 1.
void AdamStep(std::vector<Eigen::MatrixXd*> params, std::span<const Eigen::MatrixXd> grads,
              AdamState& state, const OuterLoopConfig& cfg);

// ---- meta-training ---------------------------------------------------------

struct MetaTrainOptions {
  OuterLoopConfig outer;
  int way = 5;
  int shot = 1;
  int train_queries = 2;   // query shots per class in meta-training tasks
  int val_every = 50;      // 0 disables validation
  int val_trials = 50;
  int val_queries = 10;
  bool first_order = false;
  int workers = 1;
};

struct MetricsRow {
  long long iteration = 0;
  double loss = 0.0;
  std::optional<double> val_accuracy;
  double wall_seconds = 0.0;
  long long inner_updates = 0;
};

struct TrainingState {
  MetaModel model;       // current w0
  AdamState adam;
  MetaModel best;        // best validation checkpoint
  double best_val = -1.0;

  // The model selected for deployment.
  const MetaModel& Selected() const { return best_val >= 0.0 ? best : model; }
  bool operator==(const TrainingState&) const = default;
};

TrainingState StartTraining(const MetaModel& init);

using MetricsSink = std::function<void(const MetricsRow&, const TrainingState&)>;

// Runs outer iterations until state.model.iteration reaches opts.outer.iterations.
// Iteration k's task sample and rounding draws are keyed by (seed, k), so a run
// resumed from a saved TrainingState matches an uninterrupted one bit for bit.
void MetaTrain(const MetaDataset& data, TrainingState& state, const MetaTrainOptions& opts,
               const MetricsSink& sink = {});

}  // namespace soel
