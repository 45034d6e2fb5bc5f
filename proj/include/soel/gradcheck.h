#pragma once

#include <cstdint>

#include "soel/diff.h"

namespace soel {

struct GradCheckReport {
  GradCheckResult network;  // 16-16-5 net, 20 steps, supervised count loss
  GradCheckResult meta;     // 16-10-5 net, loss after one differentiable SOEL pass
  double seconds = 0.0;
};

// Finite-difference checks of the tape on small random networks. With
// `smoothed` false the forward uses hard thresholds and mismatches are expected.
GradCheckReport RunGradCheck(std::uint64_t seed, double epsilon = 1e-4, int count = 200,
                             bool smoothed = true, ResetMode reset = ResetMode::kHard);

}  // namespace soel
