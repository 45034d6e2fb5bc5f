// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "soel/checkpoint.h"
#include "soel/config.h"
#include "soel/demo.h"
#include "soel/gradcheck.h"
#include "soel/meta.h"
#include "soel/plasticity.h"
#include "soel/quantization.h"
#include "soel/rule_engine.h"
#include "soel/synthetic.h"

using namespace soel;

namespace {

using Clock = std::chrono::steady_clock;

double Since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
std::string Fmt(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, args);
  va_end(args);
  return buf;
}

bool SameBits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

// ---- single-neuron convergence -------------------------------------------

std::vector<DemoResult> g_demo_runs;

Verdict Convergence() {
  const auto t0 = Clock::now();
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    DemoConfig cfg;
    cfg.seed = seed;
    g_demo_runs.push_back(RunSingleNeuronDemo(cfg));
    const DemoResult& r = g_demo_runs.back();
    ok += r.converged && r.windows_to_converge <= 50;
  }
  const double secs = Since(t0);
  return {ok >= 95 && secs < 5.0,
          Fmt("%d/100 seeds settle within 50 windows of 20 steps, %.2fs", ok, secs)};
}

Verdict NoWritesInBand() {
  long long in_band = 0, writes_in_band = 0, total_writes = 0;
  for (const DemoResult& r : g_demo_runs)
    for (const DemoWindow& w : r.windows) {
      total_writes += w.writes;
      if (w.error != 0.0) continue;
      ++in_band;
      writes_in_band += w.writes;
    }
  // the network-level path: a gate wider than any error writes nothing
  ExperimentConfig cfg;
  cfg.hidden = {16};
  cfg.soel.theta = 1e9;
  const MetaModel m = BuildModel(cfg);
  SyntheticConfig small = cfg.data;
  small.classes = 10;
  small.samples_per_class = 2;
  const MetaDataset d = GenerateSyntheticFamily(small, 1);
  std::vector<BinnedSample> shots;
  for (int c = 0; c < 5; ++c) {
    shots.push_back(d.by_class[c][0]);
    shots.back().label = c;
  }
  const AdaptResult a = InnerAdapt(m, shots, RandomSource(1, 1));
  const bool net_clean = a.row_writes == 0 && a.net == m.net;
  return {in_band > 0 && writes_in_band == 0 && total_writes > 0 && net_clean,
          Fmt("%lld in-band windows, %lld writes in them (%lld writes elsewhere); gated network "
              "adaptation wrote %lld rows",
              in_band, writes_in_band, total_writes, a.row_writes)};
}

// ---- gradients -------------------------------------------------------------

Verdict Gradients() {
  const GradCheckReport r = RunGradCheck(1, 1e-4, 200);
  const bool pass = r.network.checked >= 100 && r.network.max_rel_error < 1e-4 &&
                    r.meta.checked >= 100 && r.meta.max_rel_error < 1e-3 && r.seconds < 30.0;
  return {pass, Fmt("network max rel err %.2e over %d weights; meta-gradient %.2e over %d; %.1fs",
                    r.network.max_rel_error, r.network.checked, r.meta.max_rel_error, r.meta.checked,
                    r.seconds)};
}

// ---- quantization ----------------------------------------------------------

Verdict Quantization() {
  const QuantizationScheme scheme;
  RandomSource xs(77, 1), rng(77, 2);
  long long bad = 0;
  for (int i = 0; i < 1000000; ++i) {
    const double x = (xs.Uniform() - 0.5) * 800.0;
    if (!scheme.Contains(QuantizeValue(x, scheme, rng))) ++bad;
  }
  double worst = 0.0;
  for (double x : {-255.3, -77.7, -1.5, 0.3, 3.0, 41.9, 253.1}) {
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) sum += QuantizeValue(x, scheme, rng);
    worst = std::max(worst, std::abs(sum / 100000 - x));
  }
  return {bad == 0 && worst < 0.02,
          Fmt("%lld of 1e6 values outside the even range [-256, 254]; worst |mean - x| = %.4f", bad,
              worst)};
}

// ---- rule engine -----------------------------------------------------------

Verdict RuleEngine() {
  const SumOfProductsRule rule = SumOfProductsRule::Soel();
  RandomSource rng(5, 5);
  long long mismatches = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    SoelConfig cfg;
    cfg.eta = rng.Uniform() * 256.0;
    Eigen::VectorXd p(1);
    p[0] = rng.Bernoulli(0.1) ? 0.0 : rng.Uniform();
    const double e = static_cast<double>(rng.UniformInt(41)) - 20.0;
    const int y = EncodePostTrace(ComputeWindowError(2, 2 - static_cast<int>(e), cfg.theta), cfg.offset);
    const double direct = SoelUpdate(p, y, cfg)[0];
    const double engine = EvalRuleRow(rule, p, y, cfg)[0];
    mismatches += !SameBits(direct, engine);
  }
  return {mismatches == 0, Fmt("%lld of %d bindings differ from the direct update", mismatches, n)};
}

// ---- meta-learning ---------------------------------------------------------

constexpr double kHighJitter = 2.0;

struct TrainedRun {
  TrainingState state;
  TrialStats test;
  double seconds = 0.0;
};

TrainedRun TrainAndTest(const ExperimentConfig& cfg, const MetaDataset& data, const char* tag) {
  const auto t0 = Clock::now();
  TrainedRun run;
  run.state = StartTraining(BuildModel(cfg));
  MetaTrainOptions opts = cfg.train;
  opts.way = cfg.eval.way;
  opts.shot = cfg.eval.shot;
  opts.val_queries = cfg.eval.queries;
  MetaTrain(data, run.state, opts, [&](const MetricsRow& r, const TrainingState&) {
    if (r.val_accuracy)
      std::printf("  [%s] iter %lld loss %.2f val %.4f (%.0fs)\n", tag, r.iteration, r.loss,
                  *r.val_accuracy, r.wall_seconds);
    std::fflush(stdout);
  });
  TrialProtocol p = cfg.eval;
  p.seed = cfg.seed;
  run.test = RunTrials(run.state.Selected(), data, p, cfg.workers);
  run.seconds = Since(t0);
  std::printf("  [%s] meta-test %.4f +- %.4f over %d trials, %.0fs\n", tag, run.test.mean,
              run.test.stddev, p.trials, run.seconds);
  return run;
}

struct EndToEnd {
  ExperimentConfig cfg;
  MetaDataset data;
  TrainedRun main;
};

EndToEnd* g_e2e = nullptr;

Verdict ManifestRun(const char* path, std::string& detail) {
  ExperimentConfig cfg;
  cfg.train.outer.iterations = 500;
  BinningOptions bin;
  bin.merge_polarity = cfg.data.channels == 1;
  MetaDataset data = LoadManifest(path, bin, cfg.data_seed);
  auto& train = data.split.classes[static_cast<int>(Partition::kTrain)];
  if (train.size() > 20) train.resize(20);
  std::vector<int> sizes{data.inputs()};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(cfg.eval.way);
  MetaModel model = BuildModel(cfg);
  model.net = MakeTopology(sizes, cfg.neuron);
  InitializeWeights(model, cfg.init, cfg.seed);
  TrainingState st = StartTraining(model);
  MetaTrain(data, st, cfg.train);
  TrialProtocol p = cfg.eval;
  const double acc = RunTrials(st.Selected(), data, p, cfg.workers).mean;
  const double knn = KnnTrials(data, p).mean;
  detail = Fmt("manifest run %.4f vs KNN %.4f", acc, knn);
  return {acc >= knn + 0.20, detail};
}

Verdict EndToEndLearning() {
  const auto t0 = Clock::now();
  auto* e = new EndToEnd;
  g_e2e = e;
  e->data = GenerateSyntheticFamily(e->cfg.data, e->cfg.data_seed);
  const bool split_ok = e->data.split.of(Partition::kTrain).size() == 64 &&
                        e->data.split.of(Partition::kValidation).size() == 16 &&
                        e->data.split.of(Partition::kTest).size() == 20;
  e->main = TrainAndTest(e->cfg, e->data, "default");
  const bool iters_ok = e->cfg.train.outer.iterations <= 2000;

  // the same classes with heavier sample jitter; KNN and the model see the same episodes
  SyntheticConfig hard = e->cfg.data;
  hard.jitter = kHighJitter;
  const MetaDataset hard_data = GenerateSyntheticFamily(hard, e->cfg.data_seed);
  TrialProtocol p = e->cfg.eval;
  p.seed = e->cfg.seed;
  const double knn_hard = KnnTrials(hard_data, p).mean;
  const double model_hard = RunTrials(e->main.state.Selected(), hard_data, p, e->cfg.workers).mean;
  const double knn_default = KnnTrials(e->data, p).mean;
  const double secs = Since(t0);

  bool pass = split_ok && iters_ok && e->main.test.mean >= 0.85 && knn_hard < model_hard && secs < 1800.0;
  std::string detail = Fmt(
      "%d iterations, meta-test %.4f over %d trials (chance 0.20); high-jitter family: model %.4f, "
      "KNN %.4f (KNN %.4f on the default family); %.0fs",
      e->cfg.train.outer.iterations, e->main.test.mean, p.trials, model_hard, knn_hard, knn_default, secs);
  if (const char* manifest = std::getenv("SOEL_MANIFEST"); manifest && *manifest) {
    std::string mdetail;
    const Verdict m = ManifestRun(manifest, mdetail);
    pass = pass && m.pass;
    detail += "; " + mdetail;
  } else {
    detail += "; manifest run skipped (SOEL_MANIFEST not set)";
  }
  return {pass, detail};
}

Verdict RoundTrip() {
  if (!g_e2e) return {false, "no trained model"};
  const EndToEnd& e = *g_e2e;
  const TrainingState imported = ImportJson(ExportJson(e.main.state));
  TrialProtocol p = e.cfg.eval;
  p.seed = e.cfg.seed;
  const TrialStats again = RunTrials(imported.Selected(), e.data, p, e.cfg.workers);
  bool same = again.accuracies.size() == e.main.test.accuracies.size() && imported == e.main.state;
  for (std::size_t i = 0; same && i < again.accuracies.size(); ++i)
    same = SameBits(again.accuracies[i], e.main.test.accuracies[i]);

  // poison every shadow weight; the quantized deployment path must not notice
  MetaModel poisoned = imported.Selected();
  for (WeightMatrix& w : poisoned.net.weights)
    w.mutable_shadow().setConstant(std::numeric_limits<double>::quiet_NaN());
  const TrialStats blind = RunTrials(poisoned, e.data, p, e.cfg.workers);
  const bool blind_ok = blind.accuracies == e.main.test.accuracies;
  return {same && blind_ok && e.cfg.quantized,
          Fmt("re-imported accuracy %.4f vs %.4f (%s); NaN shadow weights give %.4f (%s)", again.mean,
              e.main.test.mean, same ? "bit-exact" : "differs", blind.mean,
              blind_ok ? "identical" : "differs")};
}

Verdict Variants() {
  if (!g_e2e) return {false, "no trained model"};
  const EndToEnd& e = *g_e2e;
  std::string detail;
  bool pass = true;
  for (ResetMode reset : {ResetMode::kSoft, ResetMode::kHard})
    for (bool quantized : {false, true}) {
      const std::string tag = std::string(reset == ResetMode::kSoft ? "soft" : "hard") + "/" +
                              (quantized ? "quantized" : "full");
      double acc;
      if (reset == e.cfg.neuron.reset && quantized == e.cfg.quantized) {
        acc = e.main.test.mean;
      } else {
        ExperimentConfig cfg = e.cfg;
        cfg.neuron.reset = reset;
        cfg.quantized = quantized;
        acc = TrainAndTest(cfg, e.data, tag.c_str()).test.mean;
      }
      pass = pass && acc > 0.80;
      detail += Fmt("%s%s %.4f", detail.empty() ? "" : ", ", tag.c_str(), acc);
    }
  return {pass, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"single-neuron convergence", Convergence},
      {"no weight writes inside the error band", NoWritesInBand},
      {"gradient check", Gradients},
      {"stochastic quantization", Quantization},
      {"rule engine equivalence", RuleEngine},
      {"end-to-end meta-learning", EndToEndLearning},
      {"export/import reproducibility", RoundTrip},
      {"reset and precision variants", Variants},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& ex) {
      v = {false, std::string("exception: ") + ex.what()};
    }
    failed += !v.pass;
    std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  delete g_e2e;
  return failed == 0 ? 0 : 1;
}
