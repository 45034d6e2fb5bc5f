#include <cmath>

#include "doctest.h"
#include "soel/diff.h"
#include "soel/gradcheck.h"
#include "soel/tape.h"

using namespace soel;

namespace {

// Pulls one entry of a node out as a 1x1 node.
Var Pick(Tape& tape, Var x, int row, int col) {
  auto fwd = [x, row, col](const Tape& t, Tape::Value& out) {
    out = Tape::Value::Constant(1, 1, t.value(x)(row, col));
  };
  Tape::Value v;
  fwd(tape, v);
  return tape.Record({x}, v, fwd,
                     [x, row, col](Tape& t, const Tape::Value& g) { t.GradSlot(x)(row, col) += g(0, 0); });
}

}  // namespace

TEST_CASE("tape product rule and replay") {
  Tape tape;
  const Var a = tape.Leaf(Tape::Value::Constant(1, 1, 3.0));
  const Var b = tape.Leaf(Tape::Value::Constant(1, 1, 4.0));
  auto mul = [a, b](const Tape& t, Tape::Value& out) { out = t.value(a).cwiseProduct(t.value(b)); };
  Tape::Value v;
  mul(tape, v);
  const Var c = tape.Record({a, b}, v, mul, [a, b](Tape& t, const Tape::Value& g) {
    t.GradSlot(a) += g.cwiseProduct(t.value(b));
    t.GradSlot(b) += g.cwiseProduct(t.value(a));
  });
  const Var d = Scale(tape, c, 2.0);
  CHECK(tape.value(d)(0, 0) == 24.0);
  tape.Backward(d);
  CHECK(tape.grad(a)(0, 0) == 8.0);
  CHECK(tape.grad(b)(0, 0) == 6.0);
  tape.SetLeafValue(a, Tape::Value::Constant(1, 1, -1.0));
  tape.Replay();
  CHECK(tape.value(d)(0, 0) == -8.0);
}

TEST_CASE("straight-through quantization passes gradients unchanged") {
  Tape tape;
  RandomSource rng(1, 1);
  Tape::Value w(2, 3);
  w << 1.3, -7.7, 300.0, 0.0, 5.0, -2.0;
  const Var leaf = tape.Leaf(w);
  const Var q = QuantizeStraightThrough(tape, leaf, QuantizationScheme{}, rng);
  CHECK(tape.value(q)(0, 2) == 254.0);
  CHECK(std::fmod(std::abs(tape.value(q)(0, 0)), 2.0) == 0.0);
  const Var s = SumScalars(tape, std::vector<Var>{Pick(tape, q, 0, 1), Scale(tape, Pick(tape, q, 1, 2), 3.0)});
  tape.Backward(s);
  Tape::Value expect = Tape::Value::Zero(2, 3);
  expect(0, 1) = 1.0;
  expect(1, 2) = 3.0;
  CHECK(tape.grad(leaf) == expect);
  const Tape::Value before = tape.value(q);
  tape.Replay();
  CHECK(tape.value(q) == before);
}

TEST_CASE("zero input gives the uniform cross entropy") {
  NetworkTopology net = MakeTopology({8, 6, 5}, NeuronConfig{});
  net.weights[0].mutable_shadow().setConstant(50.0);
  net.weights[1].mutable_shadow().setConstant(50.0);
  Tape tape;
  DiffOptions opts;
  opts.logit_scale = 0.7;
  DifferentiableNetwork dnet(tape, net, opts, RandomSource(1, 1));
  std::vector<BinnedSample> s{BinnedSample(2, 2, 2, 40, 3)};
  const Var loss = RecordSupervisedLoss(dnet, s);
  CHECK(tape.value(loss)(0, 0) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("weights of a silent input get zero gradient") {
  NeuronConfig nc;
  nc.threshold = 1.0;
  NetworkTopology net = MakeTopology({4, 3, 2}, nc);
  RandomSource rng(2, 2);
  for (WeightMatrix& w : net.weights)
    for (Eigen::Index k = 0; k < w.shadow().size(); ++k) w.mutable_shadow().data()[k] = rng.Normal(0.5, 0.5);
  BinnedSample s(1, 1, 4, 30, 1);
  for (int t = 0; t < 30; ++t)
    for (int j : {0, 1, 3})
      if (rng.Bernoulli(0.5)) s.active[t].push_back(j);
  Tape tape;
  DiffOptions opts;
  opts.mode.smoothed = true;
  opts.mode.surrogate.kind = SurrogateConfig::Kind::kSigmoid;
  opts.mode.surrogate.slope = 4.0;
  DifferentiableNetwork dnet(tape, net, opts, RandomSource(1, 1));
  std::vector<BinnedSample> samples{s};
  const Var loss = RecordSupervisedLoss(dnet, samples);
  const GradientBundle g = Backward(tape, loss, dnet.leaves());
  CHECK(g.AllFinite());
  CHECK(g.grads[0].col(2).isZero());
  CHECK_FALSE(g.grads[0].col(0).isZero());
}

TEST_CASE("linear membrane path has the closed-form gradient") {
  // unreachable threshold: v_T is linear in w, so dv_T/dw = v_T / w
  NeuronConfig nc;
  nc.threshold = 1e12;
  Tape tape;
  const double w0 = 3.0;
  const Var w = tape.Leaf(Tape::Value::Constant(1, 1, w0));
  Var st = ZeroLayerState(tape, 1);
  const std::int32_t one = 0;
  for (int t = 0; t < 25; ++t) {
    const bool on = t % 3 != 1;
    st = CubaStepInput(tape, w, on ? std::span<const std::int32_t>(&one, 1) : std::span<const std::int32_t>{},
                       st, nc, ForwardMode{});
  }
  const Var out = Pick(tape, st, 0, kStateV);
  tape.Backward(out);
  const double vt = tape.value(out)(0, 0);
  CHECK(vt > 0.0);
  CHECK(std::abs(tape.grad(w)(0, 0) - vt / w0) / (vt / w0) < 1e-12);
}

TEST_CASE("smoothed network gradients match finite differences") {
  const GradCheckReport r = RunGradCheck(5, 1e-4, 60);
  CHECK(r.network.checked == 60);
  CHECK(r.network.max_rel_error < 1e-4);
  CHECK(r.meta.max_rel_error < 1e-3);
  CHECK_FALSE(r.network.surrogate_mismatch_expected);
}

TEST_CASE("soft reset network gradients match finite differences") {
  const GradCheckReport r = RunGradCheck(6, 1e-4, 40, true, ResetMode::kSoft);
  CHECK(r.network.max_rel_error < 1e-4);
  CHECK(r.meta.max_rel_error < 1e-3);
}

TEST_CASE("hard threshold check flags the surrogate mismatch") {
  const GradCheckReport r = RunGradCheck(5, 1e-4, 20, false);
  CHECK(r.network.surrogate_mismatch_expected);
  CHECK(r.meta.surrogate_mismatch_expected);
}

TEST_CASE("relative error") {
  CHECK(RelativeError(1.0, 1.0) == 0.0);
  CHECK(RelativeError(2.0, 1.0) == 0.5);
  CHECK(RelativeError(0.0, 1e-9) == doctest::Approx(1e-2));
}
