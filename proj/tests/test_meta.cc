#include <cmath>

#include "doctest.h"
#include "soel/meta.h"
#include "soel/synthetic.h"

using namespace soel;

namespace {

SyntheticConfig SmallFamily() {
  SyntheticConfig c;
  c.classes = 36;
  c.samples_per_class = 6;
  c.channels = 1;
  c.height = 12;
  c.width = 12;
  c.steps = 40;
  c.glyphs = 6;
  c.blobs = 2;
  c.rate = 0.4;
  return c;
}

MetaModel SmallModel(std::vector<int> sizes, std::uint64_t seed) {
  MetaModel m;
  NeuronConfig nc;
  nc.threshold = 64.0;
  m.net = MakeTopology(std::move(sizes), nc);
  m.soel.eta = 64.0;
  m.surrogate.kind = SurrogateConfig::Kind::kSigmoid;
  m.surrogate.slope = 4.0 / 64.0;
  m.detach_reset = true;
  InitOptions init;
  init.input_mean = 0.0;
  init.input_std = 128.0;
  init.output_mean = 0.0;
  init.output_std = 2.0;
  InitializeWeights(m, init, seed);
  return m;
}

BinnedSample Poisson(int inputs, int steps, double rate, int label, RandomSource rng) {
  BinnedSample s(1, 1, inputs, steps, label);
  for (int t = 0; t < steps; ++t)
    for (int j = 0; j < inputs; ++j)
      if (rng.Bernoulli(rate)) s.active[t].push_back(j);
  return s;
}

}  // namespace

TEST_CASE("initialization is seeded and requantizable") {
  const MetaModel a = SmallModel({144, 16, 5}, 3);
  const MetaModel b = SmallModel({144, 16, 5}, 3);
  CHECK(a == b);
  CHECK_FALSE(a == SmallModel({144, 16, 5}, 4));
  for (const WeightMatrix& w : a.net.weights) CHECK(SatisfiesScheme(w.quantized(), a.scheme));
  MetaModel c = a;
  c.net.weights[0].mutable_quantized().setZero();
  c.Requantize();
  CHECK(c == a);
}

TEST_CASE("inner adaptation touches only the plastic layer") {
  const MetaModel m = SmallModel({144, 16, 5}, 1);
  const MetaDataset data = GenerateSyntheticFamily(SmallFamily(), 2);
  RandomSource rng(5, 0);
  const Episode ep = BuildEpisode(data, Partition::kTrain, 5, 1, 2, rng);
  const AdaptResult r = InnerAdapt(m, ep.train, RandomSource(1, 2));
  CHECK(r.net.weights[0] == m.net.weights[0]);
  CHECK(r.row_writes > 0);
  CHECK(r.net.weights[1].shadow() != m.net.weights[1].shadow());
  CHECK(SatisfiesScheme(r.net.weights[1].quantized(), m.scheme));
  // rows that were never written keep their quantized image
  const AdaptResult again = InnerAdapt(m, ep.train, RandomSource(1, 2));
  CHECK(again.net == r.net);
}

TEST_CASE("a gate wider than any error means no adaptation") {
  MetaModel m = SmallModel({144, 16, 5}, 1);
  m.soel.theta = 1000.0;
  const MetaDataset data = GenerateSyntheticFamily(SmallFamily(), 2);
  RandomSource rng(5, 0);
  const Episode ep = BuildEpisode(data, Partition::kTrain, 5, 1, 2, rng);
  const AdaptResult r = InnerAdapt(m, ep.train, RandomSource(1, 2));
  CHECK(r.row_writes == 0);
  CHECK(r.net == m.net);
}

TEST_CASE("single silent neuron learns upward") {
  MetaModel m;
  m.net = MakeTopology({50, 1}, NeuronConfig{});
  m.soel.eta = 3.0;
  m.inner.alpha = 1.0;
  m.Requantize();
  std::vector<BinnedSample> shots;
  for (int k = 0; k < 10; ++k) shots.push_back(Poisson(50, 100, 0.2, 0, RandomSource(7, k)));
  const AdaptResult r = InnerAdapt(m, shots, RandomSource(1, 1));
  CHECK(r.row_writes > 0);
  CHECK((r.net.weights[0].shadow().array() >= 0.0).all());
  CHECK(r.net.weights[0].shadow().sum() > 0.0);
}

TEST_CASE("all-tie readout picks the lowest index") {
  MetaModel m;
  m.net = MakeTopology({144, 5}, NeuronConfig{});
  m.soel.theta = 1000.0;
  m.Requantize();
  const MetaDataset data = GenerateSyntheticFamily(SmallFamily(), 2);
  const Prediction p = Classify(m.net, data.by_class[0][0], true, m.soel.window);
  CHECK(p.label == 0);
  CHECK(p.tie);
  TrialProtocol proto;
  proto.trials = 20;
  proto.queries = 2;
  const TrialStats s = RunTrials(m, data, proto);
  CHECK(s.mean == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(s.accuracies.size() == 20);
}

TEST_CASE("trials are deterministic and independent of worker count") {
  const MetaModel m = SmallModel({144, 16, 5}, 1);
  const MetaDataset data = GenerateSyntheticFamily(SmallFamily(), 2);
  TrialProtocol proto;
  proto.trials = 12;
  proto.queries = 2;
  proto.seed = 9;
  const TrialStats a = RunTrials(m, data, proto, 1);
  const TrialStats b = RunTrials(m, data, proto, 3);
  CHECK(a.accuracies == b.accuracies);
  CHECK(a.mean >= 0.0);
  CHECK(a.mean <= 1.0);
}

TEST_CASE("quantized deployment never reads the shadow weights") {
  const MetaModel m = SmallModel({144, 16, 5}, 1);
  const MetaDataset data = GenerateSyntheticFamily(SmallFamily(), 2);
  TrialProtocol proto;
  proto.trials = 8;
  proto.queries = 2;
  const TrialStats before = RunTrials(m, data, proto);
  MetaModel poisoned = m;
  for (WeightMatrix& w : poisoned.net.weights) w.mutable_shadow().setConstant(std::nan(""));
  const TrialStats after = RunTrials(poisoned, data, proto);
  CHECK(before.accuracies == after.accuracies);
}

TEST_CASE("no-update episode loss is the plain cross entropy") {
  MetaModel m = SmallModel({144, 16, 5}, 1);
  m.soel.theta = 1000.0;
  m.quantized = false;
  const MetaDataset data = GenerateSyntheticFamily(SmallFamily(), 2);
  RandomSource rng(5, 0);
  std::vector<Episode> eps{BuildEpisode(data, Partition::kTrain, 5, 1, 2, rng)};
  const OuterLossResult r = OuterLoss(m, eps, RandomSource(3, 3));
  CHECK(r.inner_updates == 10);  // learning epochs on the tape, all gated off
  Tape tape;
  DifferentiableNetwork dnet(tape, m.net, TrainingDiffOptions(m), RandomSource(3, 3).Fork(0));
  const Var plain = RecordSupervisedLoss(dnet, eps[0].test);
  CHECK(r.bundle.loss == tape.value(plain)(0, 0));
}

TEST_CASE("outer gradient is deterministic and worker independent") {
  const MetaModel m = SmallModel({144, 16, 5}, 1);
  const MetaDataset data = GenerateSyntheticFamily(SmallFamily(), 2);
  RandomSource rng(5, 0);
  std::vector<Episode> eps;
  for (int k = 0; k < 3; ++k) eps.push_back(BuildEpisode(data, Partition::kTrain, 5, 1, 2, rng));
  const OuterLossResult a = OuterLoss(m, eps, RandomSource(3, 3), false, 1);
  const OuterLossResult b = OuterLoss(m, eps, RandomSource(3, 3), false, 3);
  CHECK(a.bundle.loss == b.bundle.loss);
  CHECK(a.bundle.grads == b.bundle.grads);
  CHECK(a.bundle.AllFinite());
  CHECK(a.inner_updates > 0);
}

TEST_CASE("adam first step moves each coordinate by the learning rate") {
  Eigen::MatrixXd p(2, 2);
  p << 1, 2, 3, 4;
  const Eigen::MatrixXd start = p;
  Eigen::MatrixXd g(2, 2);
  g << 0.5, -3.0, 1e-3, -7.0;
  AdamState st;
  OuterLoopConfig cfg;
  cfg.lr = 0.01;
  std::vector<Eigen::MatrixXd> grads{g};
  AdamStep({&p}, grads, st, cfg);
  CHECK(st.t == 1);
  for (int i = 0; i < 4; ++i)
    CHECK(Eigen::MatrixXd(p - start).data()[i] == doctest::Approx(-cfg.lr * (g.data()[i] > 0 ? 1 : -1)).epsilon(1e-4));

  const Eigen::MatrixXd m_before = st.m[0];
  const Eigen::MatrixXd after_first = p;
  std::vector<Eigen::MatrixXd> zero{Eigen::MatrixXd::Zero(2, 2)};
  AdamStep({&p}, zero, st, cfg);
  CHECK(st.m[0].isApprox(cfg.beta1 * m_before));
  CHECK(p != after_first);  // momentum keeps moving the parameters
}

TEST_CASE("adam with zero gradients from rest leaves parameters unchanged") {
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(3, 1, 2.5);
  AdamState st;
  std::vector<Eigen::MatrixXd> zero{Eigen::MatrixXd::Zero(3, 1)};
  AdamStep({&p}, zero, st, OuterLoopConfig{});
  CHECK((p.array() == 2.5).all());
}

TEST_CASE("zero iterations returns the initialization") {
  const MetaModel m = SmallModel({144, 16, 5}, 1);
  const MetaDataset data = GenerateSyntheticFamily(SmallFamily(), 2);
  TrainingState st = StartTraining(m);
  MetaTrainOptions opts;
  opts.outer.iterations = 0;
  MetaTrain(data, st, opts);
  CHECK(st.model == m);
  CHECK(st.Selected() == m);
}

TEST_CASE("resumed training matches an uninterrupted run") {
  const MetaModel m = SmallModel({144, 16, 5}, 1);
  const MetaDataset data = GenerateSyntheticFamily(SmallFamily(), 2);
  MetaTrainOptions opts;
  opts.outer.lr = 0.2;
  opts.outer.meta_batch = 2;
  opts.val_every = 2;
  opts.val_trials = 4;
  opts.val_queries = 2;

  TrainingState full = StartTraining(m);
  opts.outer.iterations = 4;
  std::vector<MetricsRow> rows;
  MetaTrain(data, full, opts, [&](const MetricsRow& r, const TrainingState&) { rows.push_back(r); });
  CHECK(rows.size() == 4);
  CHECK(rows[1].val_accuracy.has_value());
  CHECK_FALSE(rows[0].val_accuracy.has_value());
  CHECK(full.model.iteration == 4);
  CHECK(full.model.net.weights[0].shadow() != m.net.weights[0].shadow());

  TrainingState part = StartTraining(m);
  opts.outer.iterations = 2;
  MetaTrain(data, part, opts);
  opts.outer.iterations = 4;
  MetaTrain(data, part, opts);
  CHECK(part == full);
}
