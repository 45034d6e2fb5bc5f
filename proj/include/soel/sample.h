#pragma once

#include <cstdint>
#include <vector>

namespace soel {

// Binary spatio-temporal input, channels x height x width x steps, stored as the
// sorted list of active flat input indices per 1 ms step. Flat index layout is
// (channel * height + y) * width + x.
struct BinnedSample {
  int channels = 2;
  int height = 32;
  int width = 32;
  int steps = 100;
  int label = -1;
  std::vector<std::vector<std::int32_t>> active;

  BinnedSample() = default;
  BinnedSample(int channels, int height, int width, int steps, int label = -1);

  int inputs() const { return channels * height * width; }
  bool At(int channel, int y, int x, int step) const;
  void Set(int channel, int y, int x, int step);
  std::size_t CountActive() const;
  // Per-input spike counts over the whole sample.
  std::vector<double> CountVector() const;

  bool operator==(const BinnedSample&) const = default;
};

}  // namespace soel
