#include "soel/meta.h"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

#include "soel/error.h"
#include "soel/knn.h"

namespace soel {
namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kTaskStream = 0x7a5c;
constexpr std::uint64_t kTrainRoundStream = 0x7205;
constexpr std::uint64_t kTrialEpisodeStream = 0xe915;
constexpr std::uint64_t kTrialRoundStream = 0xe972;
constexpr std::uint64_t kValidationSalt = 0x76616c;

// Runs fn(i) for i in [0, n) on up to `workers` threads; each index is handled
// by exactly one thread.
template <typename Fn>
void ParallelFor(int n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

void InnerLoopConfig::Validate(int layers) const {
  if (steps < 1) throw ConfigError("inner steps must be >= 1");
  for (int l : plastic_layers)
    if (l != layers - 1)
      throw ConfigError("only the output layer can be plastic (got layer " + std::to_string(l) + ")");
}

void OuterLoopConfig::Validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in (0, 1)");
  if (meta_batch < 1) throw ConfigError("meta_batch must be positive");
  if (iterations < 0) throw ConfigError("iterations must be non-negative");
}

void MetaModel::Requantize() {
  const RandomSource root(rounding_seed, 0x9a47);
  for (int l = 0; l < net.layers(); ++l) {
    RandomSource rng = root.Fork(static_cast<std::uint64_t>(l));
    QuantizeWeights(net.weights[l], scheme, rng);
  }
}

void InitializeWeights(MetaModel& model, const InitOptions& init, std::uint64_t seed) {
  const RandomSource root(seed, kInitStream);
  const int layers = model.net.layers();
  for (int l = 0; l < layers; ++l) {
    RandomSource rng = root.Fork(static_cast<std::uint64_t>(l));
    const bool first = l == 0;
    const bool last = l == layers - 1;
    const double mean = first ? init.input_mean : (last ? init.output_mean : init.hidden_mean);
    const double std = first ? init.input_std : (last ? init.output_std : init.hidden_std);
    Eigen::MatrixXd& w = model.net.weights[l].mutable_shadow();
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = mean + std * rng.Normal();
  }
  model.seed = seed;
  model.rounding_seed = Mix64(seed);
  model.Requantize();
}

AdaptResult InnerAdapt(const MetaModel& model, std::span<const BinnedSample> train,
                       RandomSource rng) {
  if (train.empty()) throw DataError("inner adaptation needs at least one training shot");
  model.inner.Validate(model.net.layers());
  AdaptResult out{model.net, 0, 0};
  const int plastic = PlasticLayer(out.net);
  const NeuronConfig& trace_cfg = out.net.neurons[plastic];
  NetworkSimulator sim(out.net, model.quantized ? WeightView::kQuantized : WeightView::kShadow);
  EpochContext ctx;
  ctx.soel = &model.soel;
  ctx.scheme = model.quantized ? &model.scheme : nullptr;
  ctx.rng = &rng;
  ctx.eta_scale = model.inner.alpha;
  for (int pass = 0; pass < model.inner.steps; ++pass) {
    for (const BinnedSample& shot : train) {
      sim.Reset();
      SoelState state(out.net.outputs());
      TraceState trace(out.net.sizes[plastic]);
      for (int t = 0; t < shot.steps; ++t) {
        const Eigen::VectorXd& spikes = sim.Step(shot.active[t]);
        if (plastic == 0)
          UpdatePresynTraceSparse(trace, shot.active[t], trace_cfg);
        else
          UpdatePresynTrace(trace, sim.layer_input(plastic), trace_cfg);
        const EpochOutcome e = LearningEpochStep(state, trace, spikes, shot.label, false,
                                                 out.net.weights[plastic], ctx);
        if (e.rows_written > 0) sim.RefreshWeights(plastic);
      }
      out.row_writes += state.row_writes;
      out.epochs += state.epochs;
    }
  }
  return out;
}

Prediction Classify(const NetworkTopology& net, const BinnedSample& sample, bool quantized,
                    int window) {
  const NetworkRecord rec =
      RunNetwork(net, sample, window, quantized ? WeightView::kQuantized : WeightView::kShadow);
  Prediction p;
  p.counts = rec.total_counts;
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < p.counts.size(); ++i)
    if (p.counts[i] > p.counts[best]) best = i;
  p.label = static_cast<int>(best);
  for (Eigen::Index i = 0; i < p.counts.size(); ++i)
    if (i != best && p.counts[i] == p.counts[best]) p.tie = true;
  return p;
}

EpisodeResult MetaTestTrial(const MetaModel& model, const Episode& task, RandomSource rng) {
  const AdaptResult adapted = InnerAdapt(model, task.train, rng);
  EpisodeResult r;
  r.inner_updates = adapted.row_writes;
  r.confusion = Eigen::MatrixXi::Zero(task.way, model.net.outputs());
  int correct = 0;
  for (const BinnedSample& q : task.test) {
    const Prediction p = Classify(adapted.net, q, model.quantized, model.soel.window);
    correct += p.label == q.label;
    r.ties += p.tie;
    ++r.confusion(q.label, p.label);
  }
  r.accuracy = task.test.empty() ? 0.0 : static_cast<double>(correct) / task.test.size();
  return r;
}

namespace {

TrialStats Summarize(std::vector<double> acc) {
  TrialStats s;
  s.accuracies = std::move(acc);
  const double n = static_cast<double>(s.accuracies.size());
  if (n == 0) return s;
  for (double a : s.accuracies) s.mean += a;
  s.mean /= n;
  if (n > 1) {
    double ss = 0.0;
    for (double a : s.accuracies) ss += (a - s.mean) * (a - s.mean);
    s.stddev = std::sqrt(ss / (n - 1));
  }
  return s;
}

Episode TrialEpisode(const MetaDataset& data, const TrialProtocol& p, int trial) {
  RandomSource rng = RandomSource(p.seed, kTrialEpisodeStream).Fork(static_cast<std::uint64_t>(trial));
  return BuildEpisode(data, p.partition, p.way, p.shot, p.queries, rng);
}

}  // namespace

TrialStats RunTrials(const MetaModel& model, const MetaDataset& data, const TrialProtocol& p,
                     int workers) {
  std::vector<double> acc(p.trials);
  ParallelFor(p.trials, workers, [&](int i) {
    const Episode ep = TrialEpisode(data, p, i);
    acc[i] = MetaTestTrial(model, ep, RandomSource(p.seed, kTrialRoundStream).Fork(i)).accuracy;
  });
  return Summarize(std::move(acc));
}

TrialStats KnnTrials(const MetaDataset& data, const TrialProtocol& p, int k) {
  std::vector<double> acc(p.trials);
  for (int i = 0; i < p.trials; ++i) acc[i] = KnnEpisodeAccuracy(TrialEpisode(data, p, i), k);
  return Summarize(std::move(acc));
}

DiffOptions TrainingDiffOptions(const MetaModel& model, bool first_order) {
  DiffOptions o;
  o.mode.smoothed = false;
  o.mode.surrogate = model.surrogate;
  o.mode.detach_reset = model.detach_reset;
  o.quantize = model.quantized;
  o.scheme = model.scheme;
  o.logit_scale = model.logit_scale;
  o.first_order = first_order;
  return o;
}

Var RecordTaskLoss(DifferentiableNetwork& dnet, const Episode& task, const MetaModel& model) {
  Tape& tape = *dnet.tape_ptr();
  InnerUpdateSpec spec;
  spec.soel = &model.soel;
  spec.scale = model.inner.alpha * model.soel.eta;
  for (int pass = 0; pass < model.inner.steps; ++pass)
    for (const BinnedSample& shot : task.train) {
      spec.label = shot.label;
      dnet.RunSample(shot, &spec);
    }
  std::vector<Var> terms;
  for (const BinnedSample& q : task.test)
    terms.push_back(CountCrossEntropy(tape, dnet.RunSample(q), q.label, dnet.logit_scale()));
  return SumScalars(tape, terms);
}

OuterLossResult OuterLoss(const MetaModel& model, std::span<const Episode> tasks,
                          RandomSource rng, bool first_order, int workers) {
  model.inner.Validate(model.net.layers());
  const DiffOptions opts = TrainingDiffOptions(model, first_order);
  const int n = static_cast<int>(tasks.size());
  std::vector<GradientBundle> bundles(n);
  std::vector<long long> updates(n);
  ParallelFor(n, workers, [&](int k) {
    Tape tape;
    DifferentiableNetwork dnet(tape, model.net, opts, rng.Fork(static_cast<std::uint64_t>(k)));
    const Var loss = RecordTaskLoss(dnet, tasks[k], model);
    bundles[k] = Backward(tape, loss, dnet.leaves());
    updates[k] = dnet.inner_updates();
  });
  OuterLossResult out;
  for (int k = 0; k < n; ++k) {
    out.bundle += bundles[k];
    out.inner_updates += updates[k];
  }
  return out;
}

void AdamStep(std::vector<Eigen::MatrixXd*> params, std::span<const Eigen::MatrixXd> grads,
              AdamState& state, const OuterLoopConfig& cfg) {
  if (params.size() != grads.size()) throw DimensionError("Adam: params and grads differ in count");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      state.v.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t l = 0; l < params.size(); ++l) {
    const Eigen::MatrixXd& g = grads[l];
    if (g.rows() != params[l]->rows() || g.cols() != params[l]->cols())
      throw DimensionError("Adam: gradient shape mismatch");
    state.m[l] = cfg.beta1 * state.m[l] + (1.0 - cfg.beta1) * g;
    state.v[l] = cfg.beta2 * state.v[l] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    params[l]->array() -=
        cfg.lr * (state.m[l].array() / c1) / ((state.v[l].array() / c2).sqrt() + cfg.eps);
  }
}

TrainingState StartTraining(const MetaModel& init) {
  TrainingState s;
  s.model = init;
  s.best = init;
  return s;
}

void MetaTrain(const MetaDataset& data, TrainingState& state, const MetaTrainOptions& opts,
               const MetricsSink& sink) {
  opts.outer.Validate();
  data.split.Validate();
  if (data.split.of(Partition::kTrain).empty()) throw DataError("meta-train split is empty");
  MetaModel& model = state.model;
  const auto start = std::chrono::steady_clock::now();
  while (model.iteration < static_cast<std::uint64_t>(opts.outer.iterations)) {
    const std::uint64_t k = model.iteration;
    RandomSource task_rng = RandomSource(model.seed, kTaskStream).Fork(k);
    std::vector<Episode> tasks;
    for (int b = 0; b < opts.outer.meta_batch; ++b)
      tasks.push_back(BuildEpisode(data, Partition::kTrain, opts.way, opts.shot,
                                   opts.train_queries, task_rng));
    const OuterLossResult res =
        OuterLoss(model, tasks, RandomSource(model.seed, kTrainRoundStream).Fork(k),
                  opts.first_order, opts.workers);
    if (!res.bundle.AllFinite())
      throw std::runtime_error("non-finite outer gradient at iteration " + std::to_string(k));
    std::vector<Eigen::MatrixXd*> params;
    for (auto& w : model.net.weights) params.push_back(&w.mutable_shadow());
    AdamStep(params, res.bundle.grads, state.adam, opts.outer);
    model.iteration = k + 1;
    model.rounding_seed = Mix64(model.seed ^ Mix64(model.iteration));
    model.Requantize();

    MetricsRow row;
    row.iteration = static_cast<long long>(model.iteration);
    row.loss = res.bundle.loss;
    row.inner_updates = res.inner_updates;
    if (opts.val_every > 0 && model.iteration % static_cast<std::uint64_t>(opts.val_every) == 0) {
      TrialProtocol p;
      p.trials = opts.val_trials;
      p.way = opts.way;
      p.shot = opts.shot;
      p.queries = opts.val_queries;
      p.seed = model.seed ^ kValidationSalt;
      p.partition = Partition::kValidation;
      const double acc = RunTrials(model, data, p, opts.workers).mean;
      row.val_accuracy = acc;
      if (acc > state.best_val) {
        state.best_val = acc;
        state.best = model;
      }
    }
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (sink) sink(row, state);
  }
}

}  // namespace soel
