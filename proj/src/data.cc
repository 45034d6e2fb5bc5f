#include "soel/data.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "soel/error.h"

namespace soel {

BinnedSample::BinnedSample(int channels, int height, int width, int steps, int label)
    : channels(channels), height(height), width(width), steps(steps), label(label), active(steps) {}

bool BinnedSample::At(int channel, int y, int x, int step) const {
  const std::int32_t idx = (channel * height + y) * width + x;
  const auto& a = active[step];
  return std::binary_search(a.begin(), a.end(), idx);
}

void BinnedSample::Set(int channel, int y, int x, int step) {
  const std::int32_t idx = (channel * height + y) * width + x;
  auto& a = active[step];
  auto it = std::lower_bound(a.begin(), a.end(), idx);
  if (it == a.end() || *it != idx) a.insert(it, idx);
}

std::size_t BinnedSample::CountActive() const {
  std::size_t n = 0;
  for (const auto& a : active) n += a.size();
  return n;
}

std::vector<double> BinnedSample::CountVector() const {
  std::vector<double> counts(inputs(), 0.0);
  for (const auto& a : active)
    for (std::int32_t j : a) counts[j] += 1.0;
  return counts;
}

void EventStream::Validate() const {
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (i > 0 && e.t_us < events[i - 1].t_us)
      throw DataError("event timestamps decrease at index " + std::to_string(i));
    if (e.x >= width || e.y >= height || e.polarity > 1)
      throw DataError("event " + std::to_string(i) + " lies outside the sensor");
  }
}

BinnedSample BinEvents(const EventStream& stream, const BinningOptions& opt) {
  stream.Validate();
  const int channels = opt.merge_polarity ? 1 : 2;
  BinnedSample out(channels, opt.out_height, opt.out_width, opt.steps);
  std::vector<std::vector<std::int32_t>>& active = out.active;
  for (const Event& e : stream.events) {
    if (e.t_us < opt.t_origin_us) continue;
    const std::uint64_t step = (e.t_us - opt.t_origin_us) / opt.dt_us;
    if (step >= static_cast<std::uint64_t>(opt.steps)) continue;
    const int x = static_cast<int>(static_cast<long>(e.x) * opt.out_width / stream.width);
    const int y = static_cast<int>(static_cast<long>(e.y) * opt.out_height / stream.height);
    const int c = opt.merge_polarity ? 0 : e.polarity;
    active[step].push_back((c * opt.out_height + y) * opt.out_width + x);
  }
  for (auto& a : active) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return out;
}

EventStream SampleToEvents(const BinnedSample& sample, std::uint32_t dt_us) {
  EventStream s;
  s.width = sample.width;
  s.height = sample.height;
  for (int t = 0; t < sample.steps; ++t)
    for (std::int32_t idx : sample.active[t]) {
      const int x = idx % sample.width;
      const int y = (idx / sample.width) % sample.height;
      const int c = idx / (sample.width * sample.height);
      s.events.push_back({static_cast<std::uint32_t>(t * dt_us + dt_us / 2),
                          static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                          static_cast<std::uint8_t>(c)});
    }
  return s;
}

namespace {

constexpr char kEventMagic[4] = {'S', 'O', 'E', 'V'};
constexpr std::uint16_t kEventVersion = 1;

template <typename T>
void PutLE(std::ostream& os, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    os.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T GetLE(std::istream& is) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw FormatError("truncated event file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return static_cast<T>(v);
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

void WriteEventFile(const std::string& path, const EventStream& stream) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  os.write(kEventMagic, 4);
  PutLE<std::uint16_t>(os, kEventVersion);
  PutLE<std::uint16_t>(os, static_cast<std::uint16_t>(stream.width));
  PutLE<std::uint16_t>(os, static_cast<std::uint16_t>(stream.height));
  PutLE<std::uint64_t>(os, stream.events.size());
  for (const Event& e : stream.events) {
    PutLE(os, e.t_us);
    PutLE(os, e.x);
    PutLE(os, e.y);
    PutLE(os, e.polarity);
  }
}

EventStream ReadEventFile(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open event file " + path);
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kEventMagic))
    throw FormatError(path + " is not an event file");
  if (GetLE<std::uint16_t>(is) != kEventVersion) throw FormatError("unsupported event file version");
  EventStream s;
  s.width = GetLE<std::uint16_t>(is);
  s.height = GetLE<std::uint16_t>(is);
  const auto n = GetLE<std::uint64_t>(is);
  s.events.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Event e;
    e.t_us = GetLE<std::uint32_t>(is);
    e.x = GetLE<std::uint16_t>(is);
    e.y = GetLE<std::uint16_t>(is);
    e.polarity = GetLE<std::uint8_t>(is);
    s.events.push_back(e);
  }
  s.Validate();
  return s;
}

void MetaSplit::Validate() const {
  std::set<int> seen;
  for (const auto& part : classes)
    for (int c : part)
      if (!seen.insert(c).second) throw DataError("class " + std::to_string(c) + " is in two partitions");
}

MetaSplit MakeSplit(int classes, double train_fraction, double val_fraction, RandomSource rng) {
  if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1.0)
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  std::vector<int> ids(classes);
  for (int i = 0; i < classes; ++i) ids[i] = i;
  for (int i = classes - 1; i > 0; --i)
    std::swap(ids[i], ids[rng.UniformInt(static_cast<std::uint64_t>(i) + 1)]);
  const int n_train = static_cast<int>(std::lround(train_fraction * classes));
  const int n_val = std::min(classes - n_train, static_cast<int>(std::lround(val_fraction * classes)));
  MetaSplit split;
  split.classes[0].assign(ids.begin(), ids.begin() + n_train);
  split.classes[1].assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  split.classes[2].assign(ids.begin() + n_train + n_val, ids.end());
  for (auto& part : split.classes) std::sort(part.begin(), part.end());
  return split;
}

void WriteSplitFile(const std::string& path, const MetaSplit& split) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  const char* names[3] = {"train", "val", "test"};
  for (int p = 0; p < 3; ++p) {
    os << names[p] << ':';
    for (int c : split.classes[p]) os << ' ' << c;
    os << '\n';
  }
}

MetaSplit ReadSplitFile(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open split file " + path);
  MetaSplit split;
  const std::map<std::string, int> names = {{"train", 0}, {"val", 1}, {"test", 2}};
  std::string line;
  while (std::getline(is, line)) {
    line = Trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw FormatError("split line without ':' in " + path);
    const auto it = names.find(Trim(line.substr(0, colon)));
    if (it == names.end()) throw FormatError("unknown partition in " + path);
    std::istringstream rest(line.substr(colon + 1));
    int c;
    while (rest >> c) split.classes[it->second].push_back(c);
  }
  split.Validate();
  return split;
}

int MetaDataset::inputs() const {
  for (const auto& cls : by_class)
    if (!cls.empty()) return cls.front().inputs();
  return 0;
}

Episode BuildEpisode(const MetaDataset& data, Partition part, int way, int shot, int queries,
                     RandomSource& rng) {
  if (way <= 0 || shot <= 0 || queries < 0) throw ConfigError("way and shot must be positive");
  std::vector<int> pool;
  for (int c : data.split.of(part))
    if (static_cast<int>(data.by_class.at(c).size()) >= shot + queries) pool.push_back(c);
  if (static_cast<int>(pool.size()) < way)
    throw DataError("partition has " + std::to_string(pool.size()) + " usable classes, need " +
                    std::to_string(way));
  Episode ep;
  ep.way = way;
  ep.shot = shot;
  ep.queries = queries;
  for (int i = 0; i < way; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.UniformInt(pool.size() - i));
    std::swap(pool[i], pool[j]);
    ep.classes.push_back(pool[i]);
  }
  for (int out = 0; out < way; ++out) {
    const auto& samples = data.by_class[ep.classes[out]];
    std::vector<int> idx(samples.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = static_cast<int>(k);
    for (int k = 0; k < shot + queries; ++k) {
      const auto j = k + static_cast<std::size_t>(rng.UniformInt(idx.size() - k));
      std::swap(idx[k], idx[j]);
    }
    for (int k = 0; k < shot + queries; ++k) {
      BinnedSample s = samples[idx[k]];
      s.label = out;
      (k < shot ? ep.train : ep.test).push_back(std::move(s));
    }
  }
  return ep;
}

MetaDataset LoadManifest(const std::string& path, const BinningOptions& opt, std::uint64_t seed) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open dataset manifest " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return (fp.is_absolute() ? fp : base / fp).string();
  };
  std::map<int, std::vector<BinnedSample>> by_id;
  std::string split_path;
  std::string line;
  while (std::getline(is, line)) {
    line = Trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string head, file;
    ls >> head >> file;
    if (file.empty()) throw FormatError("manifest line needs two fields: " + line);
    if (head == "split") {
      split_path = resolve(file);
      continue;
    }
    int cls = 0;
    try {
      cls = std::stoi(head);
    } catch (const std::exception&) {
      throw FormatError("bad class id in manifest: " + head);
    }
    if (cls < 0) throw FormatError("negative class id in manifest");
    BinnedSample s = BinEvents(ReadEventFile(resolve(file)), opt);
    s.label = cls;
    by_id[cls].push_back(std::move(s));
  }
  MetaDataset data;
  if (by_id.empty()) throw DataError("manifest lists no samples");
  data.by_class.resize(by_id.rbegin()->first + 1);
  for (auto& [cls, samples] : by_id) data.by_class[cls] = std::move(samples);
  data.split = split_path.empty() ? MakeSplit(data.classes(), 0.64, 0.16, RandomSource(seed, 0x5311))
                                  : ReadSplitFile(split_path);
  return data;
}

}  // namespace soel
