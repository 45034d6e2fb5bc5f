#pragma once

#include <iosfwd>
#include <string>

#include "soel/meta.h"

namespace soel {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary container, little-endian throughout:
//   "SOELCKPT" u32 version u8 has_training
//   model block (topology, f64 shadow, i16 quantized, configs, seeds)
//   [has_training: Adam state, best model block, f64 best_val]
//   u64 FNV-1a of every preceding byte
// A deployment checkpoint carries only the model block.
void WriteCheckpoint(std::ostream& out, const TrainingState& state, bool with_training = true);
TrainingState ReadCheckpoint(std::istream& in);

void SaveCheckpoint(const std::string& path, const TrainingState& state,
                    bool with_training = true);
// Throws FormatError on a corrupt or incompatible file, DataError when the
// file cannot be opened.
TrainingState LoadCheckpoint(const std::string& path);

// Portable JSON form of a checkpoint. Doubles are written in shortest
// round-trip form, so export followed by import is bit-exact.
std::string ExportJson(const TrainingState& state);
TrainingState ImportJson(const std::string& text);

}  // namespace soel
