#pragma once

#include <span>
#include <vector>

#include "soel/data.h"

namespace soel {

struct LabeledVector {
  std::vector<double> x;
  int label = 0;
};

// Majority vote among the k nearest (Euclidean) training points. Vote ties go
// to the smaller summed distance, then to the lower label.
int KnnPredict(std::span<const LabeledVector> train, std::span<const double> query, int k);

// Fraction of an episode's test samples classified correctly by KNN on
// per-input spike counts.
double KnnEpisodeAccuracy(const Episode& episode, int k);

}  // namespace soel
