#include "soel/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "soel/error.h"

namespace soel {
namespace {

constexpr char kMagic[8] = {'S', 'O', 'E', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kMaxDim = 1u << 24;

class Writer {
 public:
  void Bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename T>
  void Uint(T x) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<unsigned char>(x >> (8 * i)));
  }
  void U8(std::uint8_t x) { buf_.push_back(x); }
  void Bool(bool x) { U8(x ? 1 : 0); }
  void I16(std::int16_t x) { Uint(static_cast<std::uint16_t>(x)); }
  void I32(std::int32_t x) { Uint(static_cast<std::uint32_t>(x)); }
  void I64(std::int64_t x) { Uint(static_cast<std::uint64_t>(x)); }
  void U32(std::uint32_t x) { Uint(x); }
  void U64(std::uint64_t x) { Uint(x); }
  void F64(double x) { Uint(std::bit_cast<std::uint64_t>(x)); }
  const std::vector<unsigned char>& data() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> buf) : buf_(std::move(buf)) {}
  void Bytes(void* p, std::size_t n) {
    Need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T Uint() {
    Need(sizeof(T));
    T x = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) x |= static_cast<T>(buf_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return x;
  }
  std::uint8_t U8() { return Uint<std::uint8_t>(); }
  bool Bool() {
    const std::uint8_t b = U8();
    if (b > 1) throw FormatError("checkpoint: bad boolean byte");
    return b == 1;
  }
  std::int16_t I16() { return static_cast<std::int16_t>(Uint<std::uint16_t>()); }
  std::int32_t I32() { return static_cast<std::int32_t>(Uint<std::uint32_t>()); }
  std::int64_t I64() { return static_cast<std::int64_t>(Uint<std::uint64_t>()); }
  std::uint32_t U32() { return Uint<std::uint32_t>(); }
  std::uint64_t U64() { return Uint<std::uint64_t>(); }
  double F64() { return std::bit_cast<double>(Uint<std::uint64_t>()); }
  std::uint32_t Dim() {
    const std::uint32_t d = U32();
    if (d > kMaxDim) throw FormatError("checkpoint: implausible dimension");
    return d;
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return buf_.size(); }

 private:
  void Need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw FormatError("checkpoint: truncated");
  }
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
};

std::uint64_t Fnv1a(const unsigned char* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

void WriteMatrix(Writer& w, const Eigen::MatrixXd& m) {
  w.U32(static_cast<std::uint32_t>(m.rows()));
  w.U32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index k = 0; k < m.size(); ++k) w.F64(m.data()[k]);
}

Eigen::MatrixXd ReadMatrix(Reader& r) {
  const std::uint32_t rows = r.Dim(), cols = r.Dim();
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = r.F64();
  return m;
}

void WriteModel(Writer& w, const MetaModel& m) {
  const NetworkTopology& net = m.net;
  w.U32(static_cast<std::uint32_t>(net.layers()));
  for (int s : net.sizes) w.U32(static_cast<std::uint32_t>(s));
  for (int l = 0; l < net.layers(); ++l) {
    const NeuronConfig& n = net.neurons[l];
    w.F64(n.alpha_u);
    w.F64(n.alpha_v);
    w.F64(n.threshold);
    w.U8(n.reset == ResetMode::kHard ? 0 : 1);
    w.Bool(n.integer_state);
    w.Bool(net.plastic[l]);
  }
  for (int l = 0; l < net.layers(); ++l) {
    const WeightMatrix& wm = net.weights[l];
    for (Eigen::Index k = 0; k < wm.shadow().size(); ++k) w.F64(wm.shadow().data()[k]);
    for (Eigen::Index k = 0; k < wm.quantized().size(); ++k) w.I16(wm.quantized().data()[k]);
  }
  w.F64(m.soel.theta);
  w.F64(m.soel.eta);
  w.I32(m.soel.window);
  w.I32(m.soel.offset);
  w.I32(m.soel.target_spikes);
  w.I32(m.soel.off_target_spikes);
  w.U8(m.surrogate.kind == SurrogateConfig::Kind::kBoxcar ? 0 : 1);
  w.F64(m.surrogate.width);
  w.F64(m.surrogate.slope);
  w.I32(m.scheme.step);
  w.I32(m.scheme.min);
  w.I32(m.scheme.max);
  w.I32(m.scheme.bits);
  w.F64(m.inner.alpha);
  w.I32(m.inner.steps);
  w.U32(static_cast<std::uint32_t>(m.inner.plastic_layers.size()));
  for (int l : m.inner.plastic_layers) w.I32(l);
  w.Bool(m.quantized);
  w.F64(m.logit_scale);
  w.Bool(m.detach_reset);
  w.U64(m.seed);
  w.U64(m.iteration);
  w.U64(m.rounding_seed);
}

MetaModel ReadModel(Reader& r) {
  MetaModel m;
  NetworkTopology& net = m.net;
  const std::uint32_t layers = r.Dim();
  if (layers == 0) throw FormatError("checkpoint: network has no layers");
  for (std::uint32_t i = 0; i <= layers; ++i) net.sizes.push_back(static_cast<int>(r.Dim()));
  for (std::uint32_t l = 0; l < layers; ++l) {
    NeuronConfig n;
    n.alpha_u = r.F64();
    n.alpha_v = r.F64();
    n.threshold = r.F64();
    const std::uint8_t reset = r.U8();
    if (reset > 1) throw FormatError("checkpoint: bad reset mode");
    n.reset = reset == 0 ? ResetMode::kHard : ResetMode::kSoft;
    n.integer_state = r.Bool();
    net.neurons.push_back(n);
    net.plastic.push_back(r.Bool());
  }
  for (std::uint32_t l = 0; l < layers; ++l) {
    WeightMatrix wm(net.sizes[l + 1], net.sizes[l]);
    if (r.size() - r.pos() < static_cast<std::size_t>(wm.shadow().size()) * 10)
      throw FormatError("checkpoint: truncated");
    for (Eigen::Index k = 0; k < wm.shadow().size(); ++k) wm.mutable_shadow().data()[k] = r.F64();
    for (Eigen::Index k = 0; k < wm.quantized().size(); ++k) wm.mutable_quantized().data()[k] = r.I16();
    net.weights.push_back(std::move(wm));
  }
  m.soel.theta = r.F64();
  m.soel.eta = r.F64();
  m.soel.window = r.I32();
  m.soel.offset = r.I32();
  m.soel.target_spikes = r.I32();
  m.soel.off_target_spikes = r.I32();
  const std::uint8_t kind = r.U8();
  if (kind > 1) throw FormatError("checkpoint: bad surrogate kind");
  m.surrogate.kind = kind == 0 ? SurrogateConfig::Kind::kBoxcar : SurrogateConfig::Kind::kSigmoid;
  m.surrogate.width = r.F64();
  m.surrogate.slope = r.F64();
  m.scheme.step = r.I32();
  m.scheme.min = r.I32();
  m.scheme.max = r.I32();
  m.scheme.bits = r.I32();
  m.inner.alpha = r.F64();
  m.inner.steps = r.I32();
  const std::uint32_t n_plastic = r.Dim();
  for (std::uint32_t i = 0; i < n_plastic; ++i) m.inner.plastic_layers.push_back(r.I32());
  m.quantized = r.Bool();
  m.logit_scale = r.F64();
  m.detach_reset = r.Bool();
  m.seed = r.U64();
  m.iteration = r.U64();
  m.rounding_seed = r.U64();
  try {
    net.Validate();
    m.soel.Validate();
    m.surrogate.Validate();
    m.scheme.Validate();
    m.inner.Validate(net.layers());
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint: inconsistent contents: ") + e.what());
  }
  return m;
}

std::vector<unsigned char> Serialize(const TrainingState& s, bool with_training) {
  Writer w;
  w.Bytes(kMagic, sizeof kMagic);
  w.U32(kCheckpointVersion);
  w.Bool(with_training);
  WriteModel(w, with_training ? s.model : s.Selected());
  if (with_training) {
    w.I64(s.adam.t);
    w.U32(static_cast<std::uint32_t>(s.adam.m.size()));
    for (std::size_t l = 0; l < s.adam.m.size(); ++l) {
      WriteMatrix(w, s.adam.m[l]);
      WriteMatrix(w, s.adam.v[l]);
    }
    WriteModel(w, s.best);
    w.F64(s.best_val);
  }
  std::vector<unsigned char> out = w.data();
  Writer tail;
  tail.U64(Fnv1a(out.data(), out.size()));
  out.insert(out.end(), tail.data().begin(), tail.data().end());
  return out;
}

TrainingState Deserialize(std::vector<unsigned char> bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 1 + 8) throw FormatError("checkpoint: file too short");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError("checkpoint: bad magic");
  const std::size_t body = bytes.size() - 8;
  Reader tail(std::vector<unsigned char>(bytes.begin() + body, bytes.end()));
  if (tail.U64() != Fnv1a(bytes.data(), body)) throw FormatError("checkpoint: checksum mismatch");
  bytes.resize(body);
  Reader r(std::move(bytes));
  char magic[sizeof kMagic];
  r.Bytes(magic, sizeof magic);
  const std::uint32_t version = r.U32();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  TrainingState s;
  const bool with_training = r.Bool();
  s.model = ReadModel(r);
  if (with_training) {
    s.adam.t = r.I64();
    const std::uint32_t n = r.Dim();
    for (std::uint32_t l = 0; l < n; ++l) {
      s.adam.m.push_back(ReadMatrix(r));
      s.adam.v.push_back(ReadMatrix(r));
    }
    s.best = ReadModel(r);
    s.best_val = r.F64();
  } else {
    s.best = s.model;
  }
  if (r.pos() != r.size()) throw FormatError("checkpoint: trailing bytes");
  return s;
}

using nlohmann::json;

json MatrixJson(const Eigen::MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index k = 0; k < m.size(); ++k) data.push_back(m.data()[k]);
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd MatrixFromJson(const json& j) {
  Eigen::MatrixXd m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const json& data = j.at("data");
  if (data.size() != static_cast<std::size_t>(m.size())) throw FormatError("json: matrix size");
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = data[k].get<double>();
  return m;
}

json ModelJson(const MetaModel& m) {
  json layers = json::array();
  for (int l = 0; l < m.net.layers(); ++l) {
    const NeuronConfig& n = m.net.neurons[l];
    const WeightMatrix& w = m.net.weights[l];
    json q = json::array();
    for (Eigen::Index k = 0; k < w.quantized().size(); ++k) q.push_back(w.quantized().data()[k]);
    layers.push_back({{"alpha_u", n.alpha_u},
                      {"alpha_v", n.alpha_v},
                      {"threshold", n.threshold},
                      {"reset", n.reset == ResetMode::kHard ? "hard" : "soft"},
                      {"integer_state", n.integer_state},
                      {"plastic", static_cast<bool>(m.net.plastic[l])},
                      {"shadow", MatrixJson(w.shadow())},
                      {"quantized", std::move(q)}});
  }
  return {
      {"sizes", m.net.sizes},
      {"layers", std::move(layers)},
      {"soel",
       {{"theta", m.soel.theta},
        {"eta", m.soel.eta},
        {"window", m.soel.window},
        {"offset", m.soel.offset},
        {"target_spikes", m.soel.target_spikes},
        {"off_target_spikes", m.soel.off_target_spikes}}},
      {"surrogate",
       {{"kind", m.surrogate.kind == SurrogateConfig::Kind::kBoxcar ? "boxcar" : "sigmoid"},
        {"width", m.surrogate.width},
        {"slope", m.surrogate.slope}}},
      {"scheme",
       {{"step", m.scheme.step}, {"min", m.scheme.min}, {"max", m.scheme.max}, {"bits", m.scheme.bits}}},
      {"inner",
       {{"alpha", m.inner.alpha}, {"steps", m.inner.steps}, {"plastic_layers", m.inner.plastic_layers}}},
      {"quantized", m.quantized},
      {"logit_scale", m.logit_scale},
      {"detach_reset", m.detach_reset},
      {"seed", m.seed},
      {"iteration", m.iteration},
      {"rounding_seed", m.rounding_seed},
  };
}

MetaModel ModelFromJson(const json& j) {
  // Rebuild through the binary reader so both paths share one validator.
  MetaModel m;
  m.net.sizes = j.at("sizes").get<std::vector<int>>();
  const json& layers = j.at("layers");
  if (layers.size() + 1 != m.net.sizes.size()) throw FormatError("json: layer count");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const json& lj = layers[l];
    NeuronConfig n;
    n.alpha_u = lj.at("alpha_u").get<double>();
    n.alpha_v = lj.at("alpha_v").get<double>();
    n.threshold = lj.at("threshold").get<double>();
    const std::string reset = lj.at("reset").get<std::string>();
    if (reset != "hard" && reset != "soft") throw FormatError("json: bad reset mode");
    n.reset = reset == "hard" ? ResetMode::kHard : ResetMode::kSoft;
    n.integer_state = lj.at("integer_state").get<bool>();
    m.net.neurons.push_back(n);
    m.net.plastic.push_back(lj.at("plastic").get<bool>());
    WeightMatrix w(MatrixFromJson(lj.at("shadow")));
    const json& q = lj.at("quantized");
    if (q.size() != static_cast<std::size_t>(w.quantized().size()))
      throw FormatError("json: quantized size");
    for (Eigen::Index k = 0; k < w.quantized().size(); ++k)
      w.mutable_quantized().data()[k] = q[k].get<std::int16_t>();
    m.net.weights.push_back(std::move(w));
  }
  const json& s = j.at("soel");
  m.soel.theta = s.at("theta").get<double>();
  m.soel.eta = s.at("eta").get<double>();
  m.soel.window = s.at("window").get<int>();
  m.soel.offset = s.at("offset").get<int>();
  m.soel.target_spikes = s.at("target_spikes").get<int>();
  m.soel.off_target_spikes = s.at("off_target_spikes").get<int>();
  const json& g = j.at("surrogate");
  const std::string kind = g.at("kind").get<std::string>();
  if (kind != "boxcar" && kind != "sigmoid") throw FormatError("json: bad surrogate kind");
  m.surrogate.kind = kind == "boxcar" ? SurrogateConfig::Kind::kBoxcar : SurrogateConfig::Kind::kSigmoid;
  m.surrogate.width = g.at("width").get<double>();
  m.surrogate.slope = g.at("slope").get<double>();
  const json& q = j.at("scheme");
  m.scheme = {q.at("step").get<int>(), q.at("min").get<int>(), q.at("max").get<int>(),
              q.at("bits").get<int>()};
  const json& in = j.at("inner");
  m.inner.alpha = in.at("alpha").get<double>();
  m.inner.steps = in.at("steps").get<int>();
  m.inner.plastic_layers = in.at("plastic_layers").get<std::vector<int>>();
  m.quantized = j.at("quantized").get<bool>();
  m.logit_scale = j.at("logit_scale").get<double>();
  m.detach_reset = j.at("detach_reset").get<bool>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.iteration = j.at("iteration").get<std::uint64_t>();
  m.rounding_seed = j.at("rounding_seed").get<std::uint64_t>();
  Writer w;
  WriteModel(w, m);
  Reader r(w.data());
  return ReadModel(r);
}

std::vector<unsigned char> ReadAll(std::istream& in) {
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

void WriteCheckpoint(std::ostream& out, const TrainingState& state, bool with_training) {
  const std::vector<unsigned char> bytes = Serialize(state, with_training);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("checkpoint: write failed");
}

TrainingState ReadCheckpoint(std::istream& in) { return Deserialize(ReadAll(in)); }

void SaveCheckpoint(const std::string& path, const TrainingState& state, bool with_training) {
  // Write to a sibling then rename, so an interrupted save never truncates
  // the previous checkpoint.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path);
    WriteCheckpoint(out, state, with_training);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw DataError("cannot move checkpoint into place: " + path);
}

TrainingState LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  return ReadCheckpoint(in);
}

std::string ExportJson(const TrainingState& state) {
  json j = {{"format", "soel-checkpoint"}, {"version", kCheckpointVersion}, {"model", ModelJson(state.model)}};
  if (!state.adam.m.empty() || state.best_val >= 0.0) {
    json m = json::array(), v = json::array();
    for (std::size_t l = 0; l < state.adam.m.size(); ++l) {
      m.push_back(MatrixJson(state.adam.m[l]));
      v.push_back(MatrixJson(state.adam.v[l]));
    }
    j["training"] = {{"adam_t", state.adam.t},
                     {"adam_m", std::move(m)},
                     {"adam_v", std::move(v)},
                     {"best", ModelJson(state.best)},
                     {"best_val", state.best_val}};
  }
  return j.dump(1) + "\n";
}

TrainingState ImportJson(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "soel-checkpoint") throw FormatError("json: not a soel checkpoint");
    if (j.at("version").get<std::uint32_t>() != kCheckpointVersion)
      throw FormatError("json: unsupported version");
    TrainingState s;
    s.model = ModelFromJson(j.at("model"));
    if (j.contains("training")) {
      const json& t = j.at("training");
      s.adam.t = t.at("adam_t").get<long long>();
      for (const json& m : t.at("adam_m")) s.adam.m.push_back(MatrixFromJson(m));
      for (const json& v : t.at("adam_v")) s.adam.v.push_back(MatrixFromJson(v));
      if (s.adam.m.size() != s.adam.v.size()) throw FormatError("json: Adam moments differ");
      s.best = ModelFromJson(t.at("best"));
      s.best_val = t.at("best_val").get<double>();
    } else {
      s.best = s.model;
    }
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("json: ") + e.what());
  }
}

}  // namespace soel
