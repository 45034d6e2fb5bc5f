#include "soel/demo.h"

#include <ostream>

#include "soel/error.h"
#include "soel/random.h"

namespace soel {
namespace {

constexpr std::uint64_t kDemoInputStream = 0xde30;
constexpr std::uint64_t kDemoRoundStream = 0xde31;

}  // namespace

DemoConfig::DemoConfig() { soel.eta = 1.5; }

void DemoConfig::Validate() const {
  if (inputs < 1) throw ConfigError("demo needs at least one input");
  if (!(input_rate >= 0.0 && input_rate <= 1.0)) throw ConfigError("input_rate must be in [0, 1]");
  if (max_windows < 1 || stable_windows < 1) throw ConfigError("window budgets must be positive");
  neuron.Validate();
  soel.Validate();
}

DemoResult RunSingleNeuronDemo(const DemoConfig& cfg) {
  cfg.Validate();
  NetworkTopology net = MakeTopology({cfg.inputs, 1}, cfg.neuron);
  const QuantizationScheme scheme;
  RandomSource input_rng(cfg.seed, kDemoInputStream);
  RandomSource round_rng(cfg.seed, kDemoRoundStream);
  net.weights[0].mutable_shadow().setConstant(cfg.initial_weight);
  QuantizeWeights(net.weights[0], scheme, round_rng);

  NetworkSimulator sim(net, cfg.quantized ? WeightView::kQuantized : WeightView::kShadow);
  SoelState state(1);
  TraceState trace(cfg.inputs);
  EpochContext ctx;
  ctx.soel = &cfg.soel;
  ctx.scheme = cfg.quantized ? &scheme : nullptr;
  ctx.rng = &round_rng;

  DemoResult r;
  std::vector<std::int32_t> active;
  int window_spikes = 0;
  int streak = 0;
  const int total_steps = cfg.max_windows * cfg.soel.window;
  for (int t = 0; t < total_steps; ++t) {
    active.clear();
    for (int j = 0; j < cfg.inputs; ++j)
      if (input_rng.Bernoulli(cfg.input_rate)) active.push_back(j);
    const Eigen::VectorXd& out = sim.Step(active);
    UpdatePresynTraceSparse(trace, active, cfg.neuron);
    const int spike = out[0] > 0.0 ? 1 : 0;
    window_spikes += spike;
    const EpochOutcome e = LearningEpochStep(state, trace, out, 0, false, net.weights[0], ctx);
    if (e.rows_written > 0) sim.RefreshWeights(0);

    DemoStep s;
    s.step = t;
    s.input_spikes = static_cast<int>(active.size());
    s.output_spike = spike;
    s.weight = net.weights[0].shadow().mean();
    s.quantized_weight = net.weights[0].QuantizedAsDouble().mean();
    s.encoded_error = state.last_encoded_error[0];
    r.steps.push_back(s);

    if (!e.boundary) continue;
    DemoWindow w;
    w.window = static_cast<int>(r.windows.size());
    w.count = window_spikes;
    w.error = ComputeWindowError(cfg.soel.target_spikes, window_spikes, cfg.soel.theta);
    w.writes = e.rows_written;
    r.windows.push_back(w);
    window_spikes = 0;
    streak = w.error == 0.0 ? streak + 1 : 0;
    if (streak >= cfg.stable_windows) {
      r.converged = true;
      r.windows_to_converge = static_cast<int>(r.windows.size());
      break;
    }
  }
  r.row_writes = state.row_writes;
  return r;
}

void WriteDemoCsv(std::ostream& out, const DemoResult& r) {
  out << "step,input_spikes,output_spike,weight,quantized_weight,encoded_error\n";
  for (const DemoStep& s : r.steps)
    out << s.step << ',' << s.input_spikes << ',' << s.output_spike << ',' << s.weight << ','
        << s.quantized_weight << ',' << s.encoded_error << '\n';
}

void WriteDemoWindowsCsv(std::ostream& out, const DemoResult& r) {
  out << "window,count,error,writes\n";
  for (const DemoWindow& w : r.windows)
    out << w.window << ',' << w.count << ',' << w.error << ',' << w.writes << '\n';
}

}  // namespace soel
