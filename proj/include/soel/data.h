#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "soel/random.h"
#include "soel/sample.h"

namespace soel {

struct Event {
  std::uint32_t t_us = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t polarity = 0;

  bool operator==(const Event&) const = default;
};

struct EventStream {
  int width = 32;
  int height = 32;
  std::vector<Event> events;

  // Throws DataError when timestamps decrease or coordinates leave the sensor.
  void Validate() const;
};

struct BinningOptions {
  int out_height = 32;
  int out_width = 32;
  std::uint32_t dt_us = 1000;
  int steps = 100;
  bool merge_polarity = false;  // one channel instead of ON/OFF
  std::uint32_t t_origin_us = 0;
};

// Sum-pools the sensor onto the output grid and sets a cell to 1 when at least
// one event lands in it during a step. Events outside the window are dropped.
BinnedSample BinEvents(const EventStream& stream, const BinningOptions& opt = {});

// Inverse view: one event per active cell at the middle of its step.
EventStream SampleToEvents(const BinnedSample& sample, std::uint32_t dt_us = 1000);

// Binary event file: "SOEV", u16 version, u16 width, u16 height, u64 count,
// then `count` records of (u32 t_us, u16 x, u16 y, u8 polarity), little-endian.
void WriteEventFile(const std::string& path, const EventStream& stream);
EventStream ReadEventFile(const std::string& path);

enum class Partition { kTrain = 0, kValidation = 1, kTest = 2 };

struct MetaSplit {
  std::array<std::vector<int>, 3> classes;

  const std::vector<int>& of(Partition p) const { return classes[static_cast<int>(p)]; }
  // Throws DataError unless partitions are pairwise disjoint.
  void Validate() const;
};

// Shuffles class ids and cuts them by the given fractions (rounded, test takes the rest).
MetaSplit MakeSplit(int classes, double train_fraction, double val_fraction, RandomSource rng);

// Plain-text split file: three lines `train: ...`, `val: ...`, `test: ...`.
void WriteSplitFile(const std::string& path, const MetaSplit& split);
MetaSplit ReadSplitFile(const std::string& path);

struct MetaDataset {
  std::vector<std::vector<BinnedSample>> by_class;  // index = class id
  MetaSplit split;

  int classes() const { return static_cast<int>(by_class.size()); }
  int inputs() const;
};

struct Episode {
  int way = 0;
  int shot = 0;
  int queries = 0;
  std::vector<BinnedSample> train;  // labels are output indices
  std::vector<BinnedSample> test;
  std::vector<int> classes;         // output index -> dataset class id
};

// Samples `way` classes without replacement from one partition, then `shot`
// training and `queries` test samples per class without overlap.
Episode BuildEpisode(const MetaDataset& data, Partition part, int way, int shot, int queries,
                     RandomSource& rng);

// Manifest lines: `<class id> <event file path>`; relative paths resolve
// against the manifest's directory. A sibling `split` line may name the split
// file: `split <path>`; otherwise classes are split 64/16/20 with `seed`.
MetaDataset LoadManifest(const std::string& path, const BinningOptions& opt, std::uint64_t seed);

}  // namespace soel
