#include <cmath>

#include "doctest.h"
#include "soel/dynamics.h"
#include "soel/error.h"
#include "soel/random.h"
#include "soel/surrogate.h"

using namespace soel;

namespace {

NeuronConfig Neuron(double au, double av, double th, ResetMode reset = ResetMode::kHard) {
  NeuronConfig c;
  c.alpha_u = au;
  c.alpha_v = av;
  c.threshold = th;
  c.reset = reset;
  return c;
}

BinnedSample RandomSample(int channels, int h, int w, int steps, double rate, RandomSource rng) {
  BinnedSample s(channels, h, w, steps);
  for (int t = 0; t < steps; ++t)
    for (int i = 0; i < s.inputs(); ++i)
      if (rng.Bernoulli(rate)) s.active[t].push_back(i);
  return s;
}

}  // namespace

TEST_CASE("zero state and zero input is a fixed point") {
  LayerState st(3);
  const Eigen::MatrixXd w = Eigen::MatrixXd::Constant(3, 4, 5.0);
  for (int t = 0; t < 10; ++t) {
    const Eigen::VectorXd s = StepCubaLayer(st, Eigen::VectorXd::Zero(4), w, NeuronConfig{});
    CHECK(s.isZero());
  }
  CHECK(st.u.isZero());
  CHECK(st.v.isZero());
}

TEST_CASE("one step without leak reaches twice threshold") {
  const double th = 64.0;
  for (ResetMode mode : {ResetMode::kHard, ResetMode::kSoft}) {
    const NeuronConfig cfg = Neuron(0.0, 0.0, th, mode);
    LayerState st(1);
    Eigen::VectorXd v_pre;
    IntegrateCurrent(st, Eigen::VectorXd::Constant(1, 2 * th), cfg, {}, &v_pre);
    CHECK(st.u[0] == 2 * th);
    CHECK(v_pre[0] == 2 * th);
    CHECK(st.s[0] == 1.0);
    CHECK(st.v[0] == (mode == ResetMode::kHard ? 0.0 : th));
  }
}

TEST_CASE("membrane decays geometrically without input") {
  const NeuronConfig cfg = Neuron(0.0, 0.5, 2.0);
  LayerState st(1);
  IntegrateCurrent(st, Eigen::VectorXd::Constant(1, 2.0), cfg, {});
  CHECK(st.v[0] == 1.0);
  for (int k = 1; k <= 20; ++k) {
    IntegrateCurrent(st, Eigen::VectorXd::Zero(1), cfg, {});
    CHECK(st.s[0] == 0.0);
    CHECK(st.v[0] == doctest::Approx(std::pow(0.5, k)).epsilon(1e-15));
  }
}

TEST_CASE("integer state truncates toward zero") {
  NeuronConfig cfg = Neuron(0.5, 0.5, 100.0);
  cfg.integer_state = true;
  LayerState st(2);
  Eigen::VectorXd cur(2);
  cur << 7.0, -7.0;
  IntegrateCurrent(st, cur, cfg, {});
  CHECK(st.u[0] == 3.0);
  CHECK(st.u[1] == -3.0);
  CHECK(st.v[0] == 1.0);
  CHECK(st.v[1] == -1.0);
}

TEST_CASE("trace hand iteration") {
  const NeuronConfig cfg = Neuron(0.5, 0.75, 1.0);
  TraceState tr(1);
  UpdatePresynTrace(tr, Eigen::VectorXd::Ones(1), cfg);
  CHECK(tr.q[0] == 0.5);
  CHECK(tr.p[0] == 0.125);
  UpdatePresynTrace(tr, Eigen::VectorXd::Zero(1), cfg);
  CHECK(tr.q[0] == 0.25);
  CHECK(tr.p[0] == 0.15625);
}

TEST_CASE("silent and saturated traces") {
  const NeuronConfig cfg;
  TraceState silent(4), busy(1);
  for (int t = 0; t < 500; ++t) {
    UpdatePresynTraceSparse(silent, {}, cfg);
    const std::int32_t one = 0;
    UpdatePresynTraceSparse(busy, std::span<const std::int32_t>(&one, 1), cfg);
  }
  CHECK(silent.p.isZero());
  CHECK(busy.p[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sparse and dense trace updates agree") {
  const NeuronConfig cfg;
  RandomSource rng(1, 2);
  TraceState a(10), b(10);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::int32_t> active;
    Eigen::VectorXd dense = Eigen::VectorXd::Zero(10);
    for (int j = 0; j < 10; ++j)
      if (rng.Bernoulli(0.3)) {
        active.push_back(j);
        dense[j] = 1.0;
      }
    UpdatePresynTrace(a, dense, cfg);
    UpdatePresynTraceSparse(b, active, cfg);
    CHECK((a.p - b.p).cwiseAbs().maxCoeff() < 1e-14);
  }
  CHECK_THROWS_AS(UpdatePresynTrace(a, Eigen::VectorXd::Zero(3), cfg), DimensionError);
}

TEST_CASE("membrane response is linear below threshold") {
  // superposition: with an unreachable threshold the state is linear in the input
  const NeuronConfig cfg = Neuron(0.8, 0.9, 1e12);
  RandomSource rng(3, 3);
  LayerState a(2), b(2), ab(2);
  for (int t = 0; t < 40; ++t) {
    Eigen::VectorXd x(2), y(2);
    x << rng.Normal(), rng.Normal();
    y << rng.Normal(), rng.Normal();
    IntegrateCurrent(a, x, cfg, {});
    IntegrateCurrent(b, y, cfg, {});
    IntegrateCurrent(ab, 2.0 * x - 3.0 * y, cfg, {});
    CHECK((ab.v - (2.0 * a.v - 3.0 * b.v)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("surrogate derivative values") {
  SurrogateConfig box;
  box.width = 1.0;
  CHECK(SurrogateDerivative(5.0, 5.0, box) == doctest::Approx(1.0));
  CHECK(SurrogateDerivative(5.0 + 10.0, 5.0, box) == 0.0);
  SurrogateConfig sig;
  sig.kind = SurrogateConfig::Kind::kSigmoid;
  sig.slope = 3.0;
  CHECK(SurrogateDerivative(5.0, 5.0, sig) == doctest::Approx(0.75));
  // smooth spike is the antiderivative
  for (const SurrogateConfig& c : {box, sig})
    for (double v : {4.3, 4.9, 5.2, 5.6}) {
      const double h = 1e-6;
      const double fd = (SmoothSpike(v + h, 5.0, c) - SmoothSpike(v - h, 5.0, c)) / (2 * h);
      CHECK(fd == doctest::Approx(SurrogateDerivative(v, 5.0, c)).epsilon(1e-5));
    }
}

TEST_CASE("all-zero sample produces no spikes and zero traces") {
  NetworkTopology net = MakeTopology({8, 6, 5}, NeuronConfig{});
  net.weights[0].mutable_shadow().setConstant(100.0);
  net.weights[1].mutable_shadow().setConstant(100.0);
  const BinnedSample empty(2, 2, 2, 40);
  const NetworkRecord r = RunNetwork(net, empty, 20);
  CHECK(r.total_counts.isZero());
  CHECK(r.final_trace.p.isZero());
  CHECK(r.window_counts.size() == 2);
}

TEST_CASE("output counts are bounded by the number of steps") {
  NetworkTopology net = MakeTopology({8, 6, 5}, Neuron(0.0, 0.0, 1.0));
  net.weights[0].mutable_shadow().setConstant(100.0);
  net.weights[1].mutable_shadow().setConstant(100.0);
  const BinnedSample s = RandomSample(2, 2, 2, 30, 0.9, RandomSource(5, 5));
  const NetworkRecord r = RunNetwork(net, s, 10);
  CHECK(r.total_counts.maxCoeff() <= 30.0);
  CHECK(r.total_counts.minCoeff() >= 0.0);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(5);
  for (const auto& w : r.window_counts) sum += w;
  CHECK(sum == r.total_counts);
}

TEST_CASE("simulator in quantized view reads only the integer image") {
  NetworkTopology net = MakeTopology({8, 5}, NeuronConfig{});
  RandomSource rng(9, 9);
  for (Eigen::Index i = 0; i < net.weights[0].shadow().size(); ++i)
    net.weights[0].mutable_shadow().data()[i] = rng.Normal(40.0, 30.0);
  QuantizeWeights(net.weights[0], QuantizationScheme{}, rng);
  const BinnedSample s = RandomSample(2, 2, 2, 60, 0.4, RandomSource(1, 1));
  const NetworkRecord before = RunNetwork(net, s, 20, WeightView::kQuantized);
  net.weights[0].mutable_shadow().setConstant(std::nan(""));
  const NetworkRecord after = RunNetwork(net, s, 20, WeightView::kQuantized);
  CHECK(before.total_counts == after.total_counts);
}

TEST_CASE("simulator is deterministic and resettable") {
  NetworkTopology net = MakeTopology({8, 4, 3}, NeuronConfig{});
  net.weights[0].mutable_shadow().setConstant(60.0);
  net.weights[1].mutable_shadow().setConstant(90.0);
  const BinnedSample s = RandomSample(2, 2, 2, 50, 0.3, RandomSource(2, 2));
  NetworkSimulator sim(net, WeightView::kShadow);
  std::vector<Eigen::VectorXd> first;
  for (int t = 0; t < s.steps; ++t) first.push_back(sim.Step(s.active[t]));
  sim.Reset();
  for (int t = 0; t < s.steps; ++t) CHECK(sim.Step(s.active[t]) == first[t]);
}

TEST_CASE("topology validation") {
  CHECK_THROWS_AS(MakeTopology({4}, NeuronConfig{}), ConfigError);
  NeuronConfig bad;
  bad.alpha_u = 1.0;
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
  NetworkTopology net = MakeTopology({4, 3, 2}, NeuronConfig{});
  CHECK_FALSE(net.plastic[0]);
  CHECK(net.plastic[1]);
  CHECK(PlasticLayer(net) == 1);
  net.weights[1] = WeightMatrix(3, 3);
  CHECK_THROWS_AS(net.Validate(), DimensionError);
}
