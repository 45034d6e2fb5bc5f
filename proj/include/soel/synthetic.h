#pragma once

#include <cstdint>
#include <vector>

#include "soel/data.h"

namespace soel {

struct SyntheticConfig {
  int classes = 100;
  int samples_per_class = 20;
  int channels = 2;
  int height = 32;
  int width = 32;
  int steps = 100;
  // Classes pair two of `glyphs` shared sub-patterns side by side (left, right);
  // 0 gives every class independent blobs over the full frame.
  int glyphs = 10;
  int blobs = 4;              // moving Gaussian event sources per glyph (or class)
  double rate = 0.25;         // peak per-cell event probability per step
  double noise = 0.002;       // background event probability per cell and step
  double jitter = 0.1;        // sample-to-sample perturbation strength
  double train_fraction = 0.64;
  double val_fraction = 0.16;
};

struct Blob {
  double cx, cy;      // position at onset
  double vx, vy;      // drift, pixels per step
  double radius;
  double onset;       // step
  double duration;    // steps
  int channel;
};

struct ClassPrototype {
  std::vector<Blob> blobs;
};

// Prototypes per class, plus independent jittered Bernoulli draws for
// every sample. Identical (config, seed) gives an identical dataset.
MetaDataset GenerateSyntheticFamily(const SyntheticConfig& cfg, std::uint64_t seed);

// Per-class prototypes only (same seed stream as the generator).
std::vector<ClassPrototype> SyntheticPrototypes(const SyntheticConfig& cfg, std::uint64_t seed);

BinnedSample DrawSyntheticSample(const SyntheticConfig& cfg, const ClassPrototype& proto,
                                 int label, RandomSource rng);

}  // namespace soel
