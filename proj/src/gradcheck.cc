#include "soel/gradcheck.h"

#include <chrono>

namespace soel {
namespace {

BinnedSample RandomSample(int inputs, int steps, int label, double rate, RandomSource& rng) {
  BinnedSample s(1, 1, inputs, steps, label);
  for (int t = 0; t < steps; ++t)
    for (int j = 0; j < inputs; ++j)
      if (rng.Bernoulli(rate)) s.active[t].push_back(j);
  return s;
}

NetworkTopology RandomNet(std::vector<int> sizes, ResetMode reset, RandomSource& rng) {
  NeuronConfig nc;
  nc.threshold = 1.0;
  nc.reset = reset;
  NetworkTopology net = MakeTopology(std::move(sizes), nc);
  for (WeightMatrix& w : net.weights)
    for (Eigen::Index k = 0; k < w.shadow().size(); ++k) w.mutable_shadow().data()[k] = rng.Normal(0.3, 0.6);
  return net;
}

}  // namespace

GradCheckReport RunGradCheck(std::uint64_t seed, double epsilon, int count, bool smoothed,
                             ResetMode reset) {
  const auto start = std::chrono::steady_clock::now();
  RandomSource rng(seed, 0x6763);
  DiffOptions opts;
  opts.mode.smoothed = smoothed;
  opts.mode.surrogate.kind = SurrogateConfig::Kind::kSigmoid;
  opts.mode.surrogate.slope = 4.0;
  opts.quantize = false;
  opts.logit_scale = 0.5;
  GradCheckReport report;

  {
    const NetworkTopology net = RandomNet({16, 16, 5}, reset, rng);
    std::vector<BinnedSample> samples;
    for (int label : {0, 2}) samples.push_back(RandomSample(16, 20, label, 0.3, rng));
    auto record = [&](Tape& tape, const NetworkTopology& n) {
      DifferentiableNetwork dnet(tape, n, opts, RandomSource(seed, 1));
      return RecordedLoss{RecordSupervisedLoss(dnet, samples), dnet.leaves()};
    };
    report.network = GradCheck(net, record, epsilon, count, rng.Fork(1), smoothed);
  }
  {
    const NetworkTopology net = RandomNet({16, 10, 5}, reset, rng);
    SoelConfig soel;
    soel.window = 5;
    soel.target_spikes = 3;
    soel.theta = 0.5;
    std::vector<BinnedSample> shots, queries;
    for (int c = 0; c < 5; ++c) {
      shots.push_back(RandomSample(16, 20, c, 0.3, rng));
      queries.push_back(RandomSample(16, 20, c, 0.3, rng));
    }
    auto record = [&](Tape& tape, const NetworkTopology& n) {
      DifferentiableNetwork dnet(tape, n, opts, RandomSource(seed, 2));
      InnerUpdateSpec spec{&soel, 0.7, 0};
      for (const BinnedSample& s : shots) {
        spec.label = s.label;
        dnet.RunSample(s, &spec);
      }
      return RecordedLoss{RecordSupervisedLoss(dnet, queries), dnet.leaves()};
    };
    report.meta = GradCheck(net, record, epsilon, count, rng.Fork(2), smoothed);
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace soel
