#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "soel/dynamics.h"
#include "soel/meta.h"
#include "soel/plasticity.h"
#include "soel/surrogate.h"
#include "soel/synthetic.h"

namespace soel {

// Flat experiment configuration. Text form is one `key = value` per line;
// `#` starts a comment. Keys not present keep their defaults.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs";
  std::string dataset = "synthetic";  // or manifest:PATH
  int workers = 1;

  NeuronConfig neuron;
  std::vector<int> hidden{64, 64};
  SoelConfig soel;
  // Width and slope here are in threshold-normalized units; see Surrogate().
  SurrogateConfig surrogate;
  InnerLoopConfig inner;
  MetaTrainOptions train;
  InitOptions init;
  bool quantized = true;
  double logit_scale = 0.2;
  bool detach_reset = true;
  SyntheticConfig data;
  std::uint64_t data_seed = 1;  // synthetic family and manifest split
  TrialProtocol eval;

  ExperimentConfig();

  // Surrogate in absolute membrane units for this config's threshold.
  SurrogateConfig Surrogate() const;
  // Network sizes: inputs, hidden..., way.
  std::vector<int> LayerSizes() const;
  void Validate() const;
};

struct ConfigKeyDoc {
  std::string key;
  std::string default_value;
  std::string help;
};

// Every accepted key in emission order with its default and a one-line help.
std::vector<ConfigKeyDoc> ConfigKeys();

// Throws ConfigError on unknown keys, malformed lines or values.
ExperimentConfig ParseConfig(std::string_view text);
ExperimentConfig LoadConfigFile(const std::string& path);
std::string EmitConfig(const ExperimentConfig& cfg);

// SOEL_<KEY> with dots replaced by underscores, upper case; e.g.
// SOEL_OUTER_LR overrides `outer.lr`.
using EnvLookup = std::function<const char*(const char*)>;
void ApplyEnvOverrides(ExperimentConfig& cfg, const EnvLookup& lookup);
std::string EnvName(std::string_view key);

// Untrained model for this config, weights drawn from `cfg.init` with `cfg.seed`.
MetaModel BuildModel(const ExperimentConfig& cfg);

}  // namespace soel
