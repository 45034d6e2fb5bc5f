// soel: meta-train, meta-test and inspect SOEL plasticity models.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "soel/checkpoint.h"
#include "soel/config.h"
#include "soel/demo.h"
#include "soel/error.h"
#include "soel/gradcheck.h"
#include "soel/meta.h"
#include "soel/synthetic.h"

namespace fs = std::filesystem;
using namespace soel;

namespace {

enum ExitCode {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kNoCheckpoint = 3,
  kNoManifest = 4,
  kBadFile = 5,
};

struct ExitError {
  int code;
  std::string message;
};

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;
  std::optional<std::string> dataset;
  std::string checkpoint;
  std::optional<int> trials, way, shot, queries;
  std::string input;  // import source
  bool resume = false;
  bool print_keys = false;
};

ExperimentConfig LoadConfig(const Flags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : LoadConfigFile(f.config);
  ApplyEnvOverrides(cfg, [](const char* k) { return std::getenv(k); });
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out_dir = *f.out;
  if (f.workers) cfg.workers = *f.workers;
  if (f.dataset) cfg.dataset = *f.dataset;
  if (f.trials) cfg.eval.trials = *f.trials;
  if (f.way) cfg.eval.way = *f.way;
  if (f.shot) cfg.eval.shot = *f.shot;
  if (f.queries) cfg.eval.queries = *f.queries;
  cfg.train.way = cfg.eval.way;
  cfg.train.shot = cfg.eval.shot;
  cfg.train.val_queries = cfg.eval.queries;
  cfg.train.workers = cfg.workers;
  cfg.eval.seed = cfg.seed;
  cfg.Validate();
  return cfg;
}

MetaDataset LoadDataset(const ExperimentConfig& cfg) {
  if (cfg.dataset == "synthetic") return GenerateSyntheticFamily(cfg.data, cfg.data_seed);
  const std::string path = cfg.dataset.substr(std::string("manifest:").size());
  if (!fs::exists(path)) throw ExitError{kNoManifest, "manifest not found: " + path};
  BinningOptions bin;
  bin.merge_polarity = cfg.data.channels == 1;
  return LoadManifest(path, bin, cfg.data_seed);
}

TrainingState LoadState(const std::string& path) {
  if (path.empty()) throw ExitError{kUsage, "--checkpoint is required"};
  if (!fs::exists(path)) throw ExitError{kNoCheckpoint, "checkpoint not found: " + path};
  return LoadCheckpoint(path);
}

std::string FormatStats(const TrialStats& s) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.4f +- %.4f", s.mean, s.stddev);
  return buf;
}

void CheckEvalShape(const MetaModel& m, const ExperimentConfig& cfg, const MetaDataset& data) {
  if (m.net.outputs() != cfg.eval.way)
    throw ExitError{kUsage, "model has " + std::to_string(m.net.outputs()) + " outputs but --way is " +
                                std::to_string(cfg.eval.way)};
  const BinnedSample& any = data.by_class.at(0).at(0);
  if (any.inputs() != m.net.inputs())
    throw ExitError{kUsage, "dataset samples do not match the model's input size"};
}

int MetaTrainCmd(const Flags& f) {
  const ExperimentConfig cfg = LoadConfig(f);
  const MetaDataset data = LoadDataset(cfg);
  fs::create_directories(cfg.out_dir);
  const std::string ckpt = f.checkpoint.empty() ? cfg.out_dir + "/checkpoint.bin" : f.checkpoint;
  TrainingState state = f.resume ? LoadState(ckpt) : StartTraining(BuildModel(cfg));
  {
    std::ofstream out(cfg.out_dir + "/config.txt");
    out << EmitConfig(cfg);
  }
  const std::string metrics_path = cfg.out_dir + "/metrics.csv";
  const bool fresh = !f.resume || !fs::exists(metrics_path);
  std::ofstream metrics(metrics_path, fresh ? std::ios::trunc : std::ios::app);
  if (fresh) metrics << "iteration,loss,val_accuracy,wall_seconds,inner_updates\n";
  const int val_every = cfg.train.val_every;
  MetaTrain(data, state, cfg.train, [&](const MetricsRow& r, const TrainingState& s) {
    metrics << r.iteration << ',' << r.loss << ',';
    if (r.val_accuracy) metrics << *r.val_accuracy;
    metrics << ',' << r.wall_seconds << ',' << r.inner_updates << '\n';
    metrics.flush();
    if (r.val_accuracy) {
      std::printf("iter %lld loss %.3f val %.4f (%.1fs)\n", r.iteration, r.loss, *r.val_accuracy,
                  r.wall_seconds);
      std::fflush(stdout);
    }
    if (val_every > 0 && r.iteration % val_every == 0) SaveCheckpoint(ckpt, s);
  });
  SaveCheckpoint(ckpt, state);
  SaveCheckpoint(cfg.out_dir + "/model.bin", state, false);
  std::printf("trained %llu iterations, best val %.4f\n",
              static_cast<unsigned long long>(state.model.iteration), state.best_val);
  std::printf("checkpoint %s\nmodel %s/model.bin\n", ckpt.c_str(), cfg.out_dir.c_str());
  return kOk;
}

int MetaTestCmd(const Flags& f) {
  const ExperimentConfig cfg = LoadConfig(f);
  const TrainingState state = LoadState(f.checkpoint);
  const MetaDataset data = LoadDataset(cfg);
  const MetaModel& model = state.Selected();
  CheckEvalShape(model, cfg, data);
  const TrialStats s = RunTrials(model, data, cfg.eval, cfg.workers);
  std::printf("accuracy %s over %d trials\n", FormatStats(s).c_str(), cfg.eval.trials);
  return kOk;
}

int KnnCmd(const Flags& f) {
  const ExperimentConfig cfg = LoadConfig(f);
  const MetaDataset data = LoadDataset(cfg);
  const TrialStats s = KnnTrials(data, cfg.eval);
  std::printf("knn accuracy %s over %d trials\n", FormatStats(s).c_str(), cfg.eval.trials);
  return kOk;
}

int GradCheckCmd(const Flags& f) {
  const ExperimentConfig cfg = LoadConfig(f);
  const GradCheckReport smooth = RunGradCheck(cfg.seed, 1e-4, 200, true, cfg.neuron.reset);
  std::printf("smoothed network: max rel error %.3g over %d weights\n",
              smooth.network.max_rel_error, smooth.network.checked);
  std::printf("smoothed meta-gradient: max rel error %.3g over %d weights\n",
              smooth.meta.max_rel_error, smooth.meta.checked);
  const GradCheckReport hard = RunGradCheck(cfg.seed, 1e-4, 50, false, cfg.neuron.reset);
  std::printf("hard-threshold network: max rel error %.3g (surrogate mismatch expected)\n",
              hard.network.max_rel_error);
  return kOk;
}

int ExportCmd(const Flags& f) {
  const TrainingState state = LoadState(f.checkpoint);
  const std::string json = ExportJson(state);
  if (!f.out) {
    std::cout << json;
    return kOk;
  }
  std::ofstream out(*f.out, std::ios::binary);
  if (!out) throw ExitError{kInternal, "cannot write " + *f.out};
  out << json;
  return kOk;
}

int ImportCmd(const Flags& f) {
  if (f.checkpoint.empty()) throw ExitError{kUsage, "--checkpoint (destination) is required"};
  if (!fs::exists(f.input)) throw ExitError{kNoCheckpoint, "export file not found: " + f.input};
  std::ifstream in(f.input, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  const TrainingState state = ImportJson(ss.str());
  SaveCheckpoint(f.checkpoint, state, state.best_val >= 0.0 || !state.adam.m.empty());
  return kOk;
}

int DemoCmd(const Flags& f) {
  const ExperimentConfig cfg = LoadConfig(f);
  DemoConfig demo;
  demo.seed = cfg.seed;
  demo.neuron.reset = cfg.neuron.reset;
  const DemoResult r = RunSingleNeuronDemo(demo);
  fs::create_directories(cfg.out_dir);
  std::ofstream steps(cfg.out_dir + "/demo.csv");
  WriteDemoCsv(steps, r);
  std::ofstream windows(cfg.out_dir + "/demo_windows.csv");
  WriteDemoWindowsCsv(windows, r);
  if (r.converged)
    std::printf("converged after %d windows, %lld weight writes\n", r.windows_to_converge, r.row_writes);
  else
    std::printf("not converged within %zu windows, %lld weight writes\n", r.windows.size(), r.row_writes);
  std::printf("trajectory %s/demo.csv\n", cfg.out_dir.c_str());
  return kOk;
}

int ConfigCmd(const Flags& f) {
  if (f.print_keys) {
    for (const ConfigKeyDoc& k : ConfigKeys())
      std::printf("%-24s %-14s %s (%s)\n", k.key.c_str(), k.default_value.c_str(), k.help.c_str(),
                  EnvName(k.key).c_str());
    return kOk;
  }
  std::cout << EmitConfig(LoadConfig(f));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SOEL plasticity meta-learning"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "master seed");
  app.add_option("--out", f.out, "output directory (export: output file)");
  app.add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--dataset", f.dataset, "synthetic or manifest:PATH");
  app.add_option("--checkpoint", f.checkpoint, "checkpoint file");
  app.add_option("--trials", f.trials, "meta-test episodes (default 200)")->check(CLI::PositiveNumber);
  app.add_option("--way", f.way, "classes per episode (default 5)")->check(CLI::PositiveNumber);
  app.add_option("--shot", f.shot, "training shots per class (default 1)")->check(CLI::PositiveNumber);
  app.add_option("--queries", f.queries, "test shots per class (default 10)")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("meta-train", "meta-train an initialization");
  train->add_flag("--resume", f.resume, "continue from --checkpoint");
  auto* test = app.add_subcommand("meta-test", "one-shot trials with a trained model");
  auto* grad = app.add_subcommand("grad-check", "finite-difference check of the tape");
  auto* knn = app.add_subcommand("knn-baseline", "KNN on the same episodes");
  auto* exp = app.add_subcommand("export", "checkpoint to JSON");
  auto* imp = app.add_subcommand("import", "JSON to checkpoint");
  imp->add_option("input", f.input, "exported JSON file")->required();
  auto* demo = app.add_subcommand("demo", "single-neuron SOEL demonstration");
  auto* config = app.add_subcommand("config", "print the effective config");
  config->add_flag("--keys", f.print_keys, "list keys, defaults and environment names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return MetaTrainCmd(f);
    if (*test) return MetaTestCmd(f);
    if (*grad) return GradCheckCmd(f);
    if (*knn) return KnnCmd(f);
    if (*exp) return ExportCmd(f);
    if (*imp) return ImportCmd(f);
    if (*demo) return DemoCmd(f);
    if (*config) return ConfigCmd(f);
  } catch (const ExitError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return e.code;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "dataset error: %s\n", e.what());
    return kNoManifest;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "bad file: %s\n", e.what());
    return kBadFile;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kInternal;
  }
  return kInternal;
}
