#include "soel/synthetic.h"

#include <algorithm>
#include <cmath>

#include "soel/error.h"

namespace soel {
namespace {

// Stream labels keep prototypes, samples and the split independent.
constexpr std::uint64_t kPrototypeStream = 0x70726f74;
constexpr std::uint64_t kSampleStream = 0x73616d70;
constexpr std::uint64_t kSplitStream = 0x73706c74;

std::vector<Blob> RandomBlobs(const SyntheticConfig& cfg, RandomSource rng, double x0, double span) {
  std::vector<Blob> blobs;
  for (int b = 0; b < cfg.blobs; ++b) {
    Blob blob;
    blob.cx = x0 + 4.0 + rng.Uniform() * (span - 8.0);
    blob.cy = 4.0 + rng.Uniform() * (cfg.height - 8.0);
    blob.vx = (rng.Uniform() - 0.5) * 0.3;
    blob.vy = (rng.Uniform() - 0.5) * 0.3;
    blob.radius = 1.5 + 1.5 * rng.Uniform();
    blob.duration = 25.0 + 30.0 * rng.Uniform();
    blob.onset = rng.Uniform() * std::max(0.0, cfg.steps - blob.duration);
    blob.channel = static_cast<int>(rng.UniformInt(static_cast<std::uint64_t>(cfg.channels)));
    blobs.push_back(blob);
  }
  return blobs;
}

}  // namespace

std::vector<ClassPrototype> SyntheticPrototypes(const SyntheticConfig& cfg, std::uint64_t seed) {
  std::vector<ClassPrototype> protos(cfg.classes);
  const RandomSource root(seed, kPrototypeStream);
  if (cfg.glyphs == 0) {
    for (int c = 0; c < cfg.classes; ++c)
      protos[c].blobs = RandomBlobs(cfg, root.Fork(static_cast<std::uint64_t>(c)), 0.0, cfg.width);
    return protos;
  }
  if (static_cast<long long>(cfg.glyphs) * cfg.glyphs < cfg.classes)
    throw ConfigError("synthetic family needs glyphs^2 >= classes");
  // class c pairs glyph c / glyphs (left half) with glyph c % glyphs (right half)
  const double half = cfg.width / 2.0;
  std::vector<std::vector<Blob>> glyphs;
  for (int g = 0; g < cfg.glyphs; ++g)
    glyphs.push_back(RandomBlobs(cfg, root.Fork(static_cast<std::uint64_t>(g)), 0.0, half));
  for (int c = 0; c < cfg.classes; ++c) {
    protos[c].blobs = glyphs[(c / cfg.glyphs) % cfg.glyphs];
    for (Blob b : glyphs[c % cfg.glyphs]) {
      b.cx += half;
      protos[c].blobs.push_back(b);
    }
  }
  return protos;
}

BinnedSample DrawSyntheticSample(const SyntheticConfig& cfg, const ClassPrototype& proto,
                                 int label, RandomSource rng) {
  BinnedSample s(cfg.channels, cfg.height, cfg.width, cfg.steps, label);
  const double j = cfg.jitter;
  // per-sample perturbation: global translation, per-blob timing and gain
  const int max_shift = static_cast<int>(std::lround(3.0 * j));
  const double dx = max_shift > 0 ? static_cast<double>(rng.UniformInt(2 * max_shift + 1)) - max_shift : 0.0;
  const double dy = max_shift > 0 ? static_cast<double>(rng.UniformInt(2 * max_shift + 1)) - max_shift : 0.0;
  std::vector<Blob> blobs = proto.blobs;
  std::vector<double> gain(blobs.size());
  for (std::size_t b = 0; b < blobs.size(); ++b) {
    blobs[b].cx += dx + rng.Normal(0.0, 0.5 * j);
    blobs[b].cy += dy + rng.Normal(0.0, 0.5 * j);
    blobs[b].onset += rng.Normal(0.0, 8.0 * j);
    gain[b] = std::max(0.0, 1.0 + rng.Normal(0.0, 0.3 * j));
  }

  const int plane = cfg.height * cfg.width;
  std::vector<double> prob(static_cast<std::size_t>(cfg.channels) * plane);
  const double log_keep = std::log1p(-cfg.noise);
  for (int t = 0; t < cfg.steps; ++t) {
    std::fill(prob.begin(), prob.end(), 0.0);
    for (std::size_t b = 0; b < blobs.size(); ++b) {
      const Blob& bl = blobs[b];
      const double age = t - bl.onset;
      if (age < 0.0 || age > bl.duration) continue;
      // smooth rise and fall over the blob's lifetime
      const double envelope = std::sin(M_PI * age / bl.duration);
      const double cx = bl.cx + bl.vx * age;
      const double cy = bl.cy + bl.vy * age;
      const int r = static_cast<int>(std::ceil(2.5 * bl.radius));
      for (int y = std::max(0, static_cast<int>(cy) - r); y <= std::min(cfg.height - 1, static_cast<int>(cy) + r); ++y)
        for (int x = std::max(0, static_cast<int>(cx) - r); x <= std::min(cfg.width - 1, static_cast<int>(cx) + r); ++x) {
          const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          prob[bl.channel * plane + y * cfg.width + x] +=
              cfg.rate * gain[b] * envelope * std::exp(-d2 / (2.0 * bl.radius * bl.radius));
        }
    }
    auto& active = s.active[t];
    for (std::size_t i = 0; i < prob.size(); ++i)
      if (prob[i] > 0.0 && rng.Uniform() < std::min(1.0, prob[i])) active.push_back(static_cast<std::int32_t>(i));
    if (cfg.noise > 0.0) {
      // background events by geometric skipping
      double pos = -1.0;
      while (true) {
        double u = rng.Uniform();
        while (u <= 0.0) u = rng.Uniform();
        pos += 1.0 + std::floor(std::log(u) / log_keep);
        if (pos >= static_cast<double>(prob.size())) break;
        active.push_back(static_cast<std::int32_t>(pos));
      }
    }
    std::sort(active.begin(), active.end());
    active.erase(std::unique(active.begin(), active.end()), active.end());
  }
  return s;
}

MetaDataset GenerateSyntheticFamily(const SyntheticConfig& cfg, std::uint64_t seed) {
  if (cfg.classes <= 0 || cfg.samples_per_class <= 0) throw ConfigError("synthetic family needs classes and samples");
  if (cfg.channels < 1 || cfg.channels > 2) throw ConfigError("synthetic channels must be 1 or 2");
  const auto protos = SyntheticPrototypes(cfg, seed);
  MetaDataset data;
  data.by_class.resize(cfg.classes);
  const RandomSource root(seed, kSampleStream);
  for (int c = 0; c < cfg.classes; ++c) {
    const RandomSource cls = root.Fork(static_cast<std::uint64_t>(c));
    for (int k = 0; k < cfg.samples_per_class; ++k)
      data.by_class[c].push_back(DrawSyntheticSample(cfg, protos[c], c, cls.Fork(static_cast<std::uint64_t>(k))));
  }
  data.split = MakeSplit(cfg.classes, cfg.train_fraction, cfg.val_fraction, RandomSource(seed, kSplitStream));
  return data;
}

}  // namespace soel
