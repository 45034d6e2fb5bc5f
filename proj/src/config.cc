#include "soel/config.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "soel/error.h"

namespace soel {
namespace {

std::string FormatDouble(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

template <typename T>
std::string FormatInt(T x) {
  return std::to_string(x);
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void BadValue(std::string_view key, std::string_view value, const char* what) {
  throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(value) + "' (" +
                    what + ")");
}

template <typename T>
T ParseNumber(std::string_view key, std::string_view v) {
  T out{};
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) BadValue(key, v, "not a number");
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(out)) BadValue(key, v, "not finite");
  return out;
}

bool ParseBool(std::string_view key, std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  BadValue(key, v, "expected true or false");
}

std::vector<int> ParseIntList(std::string_view key, std::string_view v) {
  std::vector<int> out;
  if (Trim(v).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = v.find(',', start);
    out.push_back(ParseNumber<int>(key, Trim(v.substr(start, comma - start))));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string FormatIntList(const std::vector<int>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

struct Field {
  const char* key;
  const char* help;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

#define SOEL_DOUBLE(KEY, MEMBER, HELP)                                              \
  Field{KEY, HELP, [](const ExperimentConfig& c) { return FormatDouble(c.MEMBER); }, \
        [](ExperimentConfig& c, std::string_view v) { c.MEMBER = ParseNumber<double>(KEY, v); }}
#define SOEL_INT(KEY, MEMBER, HELP)                                               \
  Field{KEY, HELP, [](const ExperimentConfig& c) { return FormatInt(c.MEMBER); }, \
        [](ExperimentConfig& c, std::string_view v) {                             \
          c.MEMBER = ParseNumber<std::remove_reference_t<decltype(c.MEMBER)>>(KEY, v); \
        }}
#define SOEL_BOOL(KEY, MEMBER, HELP)                                                        \
  Field{KEY, HELP, [](const ExperimentConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }, \
        [](ExperimentConfig& c, std::string_view v) { c.MEMBER = ParseBool(KEY, v); }}

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = {
      SOEL_INT("seed", seed, "master seed for init, tasks and rounding"),
      Field{"out_dir", "output directory for checkpoints and metrics",
            [](const ExperimentConfig& c) { return c.out_dir; },
            [](ExperimentConfig& c, std::string_view v) { c.out_dir = std::string(v); }},
      Field{"dataset", "synthetic, or manifest:PATH",
            [](const ExperimentConfig& c) { return c.dataset; },
            [](ExperimentConfig& c, std::string_view v) { c.dataset = std::string(v); }},
      SOEL_INT("workers", workers, "threads for episode evaluation"),

      SOEL_DOUBLE("neuron.alpha_u", neuron.alpha_u, "current decay per step"),
      SOEL_DOUBLE("neuron.alpha_v", neuron.alpha_v, "voltage decay per step"),
      SOEL_DOUBLE("neuron.threshold", neuron.threshold, "firing threshold"),
      Field{"neuron.reset", "hard or soft",
            [](const ExperimentConfig& c) {
              return std::string(c.neuron.reset == ResetMode::kHard ? "hard" : "soft");
            },
            [](ExperimentConfig& c, std::string_view v) {
              if (v == "hard") c.neuron.reset = ResetMode::kHard;
              else if (v == "soft") c.neuron.reset = ResetMode::kSoft;
              else BadValue("neuron.reset", v, "expected hard or soft");
            }},
      SOEL_BOOL("neuron.integer_state", neuron.integer_state, "truncate u and v every step"),
      Field{"net.hidden", "hidden layer sizes, comma separated",
            [](const ExperimentConfig& c) { return FormatIntList(c.hidden); },
            [](ExperimentConfig& c, std::string_view v) { c.hidden = ParseIntList("net.hidden", v); }},

      SOEL_DOUBLE("soel.theta", soel.theta, "error gate, spikes"),
      SOEL_DOUBLE("soel.eta", soel.eta, "plasticity learning rate"),
      SOEL_INT("soel.window", soel.window, "learning epoch interval, steps"),
      SOEL_INT("soel.offset", soel.offset, "post-trace offset c"),
      SOEL_INT("soel.target_spikes", soel.target_spikes, "labeled neuron target per window"),
      SOEL_INT("soel.off_target_spikes", soel.off_target_spikes, "other neurons target per window"),

      Field{"surrogate.kind", "boxcar or sigmoid",
            [](const ExperimentConfig& c) {
              return std::string(c.surrogate.kind == SurrogateConfig::Kind::kBoxcar ? "boxcar"
                                                                                   : "sigmoid");
            },
            [](ExperimentConfig& c, std::string_view v) {
              if (v == "boxcar") c.surrogate.kind = SurrogateConfig::Kind::kBoxcar;
              else if (v == "sigmoid") c.surrogate.kind = SurrogateConfig::Kind::kSigmoid;
              else BadValue("surrogate.kind", v, "expected boxcar or sigmoid");
            }},
      SOEL_DOUBLE("surrogate.width", surrogate.width, "boxcar width, in thresholds"),
      SOEL_DOUBLE("surrogate.slope", surrogate.slope, "sigmoid slope, per threshold"),

      SOEL_DOUBLE("inner.alpha", inner.alpha, "inner-loop scale on eta"),
      SOEL_INT("inner.steps", inner.steps, "passes over the training shots"),

      SOEL_DOUBLE("outer.lr", train.outer.lr, "Adam step size, weight units"),
      SOEL_DOUBLE("outer.beta1", train.outer.beta1, "Adam beta1"),
      SOEL_DOUBLE("outer.beta2", train.outer.beta2, "Adam beta2"),
      SOEL_DOUBLE("outer.eps", train.outer.eps, "Adam epsilon"),
      SOEL_INT("outer.meta_batch", train.outer.meta_batch, "tasks per outer step"),
      SOEL_INT("outer.iterations", train.outer.iterations, "outer steps"),

      SOEL_INT("train.queries", train.train_queries, "query shots per class in training tasks"),
      SOEL_INT("train.val_every", train.val_every, "validate every N iterations, 0 = never"),
      SOEL_INT("train.val_trials", train.val_trials, "episodes per validation"),
      SOEL_BOOL("train.first_order", train.first_order, "drop second-order inner-loop terms"),
      SOEL_BOOL("train.quantized", quantized, "train and deploy through integer weights"),
      SOEL_DOUBLE("train.logit_scale", logit_scale, "spike count to logit factor"),
      SOEL_BOOL("train.detach_reset", detach_reset, "no gradient through the reset term"),

      SOEL_DOUBLE("init.input_mean", init.input_mean, "first layer weight mean"),
      SOEL_DOUBLE("init.input_std", init.input_std, "first layer weight std"),
      SOEL_DOUBLE("init.hidden_mean", init.hidden_mean, "hidden layer weight mean"),
      SOEL_DOUBLE("init.hidden_std", init.hidden_std, "hidden layer weight std"),
      SOEL_DOUBLE("init.output_mean", init.output_mean, "output layer weight mean"),
      SOEL_DOUBLE("init.output_std", init.output_std, "output layer weight std"),

      SOEL_INT("data.seed", data_seed, "seed of the synthetic family or manifest split"),
      SOEL_INT("data.classes", data.classes, "synthetic classes"),
      SOEL_INT("data.samples", data.samples_per_class, "synthetic samples per class"),
      SOEL_INT("data.channels", data.channels, "1 merges polarities, 2 keeps ON/OFF"),
      SOEL_INT("data.glyphs", data.glyphs, "shared glyphs, classes pair two; 0 = independent"),
      SOEL_INT("data.blobs", data.blobs, "moving sources per glyph"),
      SOEL_DOUBLE("data.rate", data.rate, "peak event probability per cell and step"),
      SOEL_DOUBLE("data.noise", data.noise, "background event probability"),
      SOEL_DOUBLE("data.jitter", data.jitter, "sample perturbation strength"),
      SOEL_DOUBLE("data.train_fraction", data.train_fraction, "meta-train class share"),
      SOEL_DOUBLE("data.val_fraction", data.val_fraction, "meta-validation class share"),

      SOEL_INT("eval.trials", eval.trials, "meta-test episodes"),
      SOEL_INT("eval.way", eval.way, "classes per episode"),
      SOEL_INT("eval.shot", eval.shot, "training shots per class"),
      SOEL_INT("eval.queries", eval.queries, "test shots per class"),
  };
  return fields;
}

#undef SOEL_DOUBLE
#undef SOEL_INT
#undef SOEL_BOOL

const Field* FindField(std::string_view key) {
  for (const Field& f : Fields())
    if (key == f.key) return &f;
  return nullptr;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  hidden = {128};
  surrogate.kind = SurrogateConfig::Kind::kSigmoid;
  surrogate.width = 1.0;
  surrogate.slope = 4.0;
  soel.eta = 96.0;
  inner.alpha = 0.1;
  train.outer.lr = 0.05;
  train.outer.iterations = 800;
  train.val_trials = 100;
  init.input_mean = -2.0;
  init.input_std = 128.0;
  init.hidden_mean = -2.0;
  init.hidden_std = 128.0;
  init.output_mean = 0.0;
  init.output_std = 2.0;
}

SurrogateConfig ExperimentConfig::Surrogate() const {
  SurrogateConfig s = surrogate;
  s.width = surrogate.width * neuron.threshold;
  s.slope = surrogate.slope / neuron.threshold;
  return s;
}

std::vector<int> ExperimentConfig::LayerSizes() const {
  std::vector<int> sizes{data.channels * data.height * data.width};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(eval.way);
  return sizes;
}

void ExperimentConfig::Validate() const {
  neuron.Validate();
  soel.Validate();
  Surrogate().Validate();
  train.outer.Validate();
  inner.Validate(static_cast<int>(hidden.size()) + 1);
  for (int h : hidden)
    if (h <= 0) throw ConfigError("net.hidden sizes must be positive");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (data.channels != 1 && data.channels != 2) throw ConfigError("data.channels must be 1 or 2");
  if (data.classes < eval.way) throw ConfigError("data.classes must be >= eval.way");
  if (eval.trials < 1 || eval.way < 2 || eval.shot < 1 || eval.queries < 1)
    throw ConfigError("eval trials, way, shot and queries must be positive (way >= 2)");
  if (train.train_queries < 1 || train.val_trials < 1 || train.val_every < 0)
    throw ConfigError("train.queries and train.val_trials must be positive");
  if (!(logit_scale > 0.0)) throw ConfigError("train.logit_scale must be positive");
  if (dataset != "synthetic" && dataset.rfind("manifest:", 0) != 0)
    throw ConfigError("dataset must be synthetic or manifest:PATH");
}

std::vector<ConfigKeyDoc> ConfigKeys() {
  const ExperimentConfig defaults;
  std::vector<ConfigKeyDoc> out;
  for (const Field& f : Fields()) out.push_back({f.key, f.get(defaults), f.help});
  return out;
}

ExperimentConfig ParseConfig(std::string_view text) {
  ExperimentConfig cfg;
  std::unordered_set<std::string> seen;
  int line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = Trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string_view key = Trim(line.substr(0, eq));
    const std::string_view value = Trim(line.substr(eq + 1));
    const Field* f = FindField(key);
    if (!f) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" +
                              std::string(key) + "'");
    if (!seen.insert(std::string(key)).second)
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" +
                        std::string(key) + "'");
    f->set(cfg, value);
  }
  return cfg;
}

ExperimentConfig LoadConfigFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ParseConfig(ss.str());
}

std::string EmitConfig(const ExperimentConfig& cfg) {
  std::string out;
  for (const Field& f : Fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

std::string EnvName(std::string_view key) {
  std::string name = "SOEL_";
  for (char ch : key)
    name += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return name;
}

void ApplyEnvOverrides(ExperimentConfig& cfg, const EnvLookup& lookup) {
  for (const Field& f : Fields())
    if (const char* v = lookup(EnvName(f.key).c_str())) f.set(cfg, Trim(v));
}

MetaModel BuildModel(const ExperimentConfig& cfg) {
  cfg.Validate();
  MetaModel m;
  m.net = MakeTopology(cfg.LayerSizes(), cfg.neuron);
  m.soel = cfg.soel;
  m.surrogate = cfg.Surrogate();
  m.inner = cfg.inner;
  m.quantized = cfg.quantized;
  m.logit_scale = cfg.logit_scale;
  m.detach_reset = cfg.detach_reset;
  InitializeWeights(m, cfg.init, cfg.seed);
  return m;
}

}  // namespace soel
