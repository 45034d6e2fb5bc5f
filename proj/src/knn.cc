#include "soel/knn.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "soel/error.h"

namespace soel {

int KnnPredict(std::span<const LabeledVector> train, std::span<const double> query, int k) {
  if (train.empty()) throw DataError("KNN needs a non-empty training set");
  if (k <= 0 || k > static_cast<int>(train.size())) throw ConfigError("k must lie in 1..training size");
  std::vector<std::pair<double, int>> dist;
  dist.reserve(train.size());
  for (const LabeledVector& p : train) {
    if (p.x.size() != query.size()) throw DimensionError("KNN vectors differ in length");
    double d2 = 0.0;
    for (std::size_t i = 0; i < query.size(); ++i) d2 += (p.x[i] - query[i]) * (p.x[i] - query[i]);
    dist.emplace_back(std::sqrt(d2), p.label);
  }
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  std::map<int, std::pair<int, double>> votes;  // label -> (count, distance sum)
  for (int i = 0; i < k; ++i) {
    auto& v = votes[dist[i].second];
    ++v.first;
    v.second += dist[i].first;
  }
  int best = votes.begin()->first;
  for (const auto& [label, v] : votes) {
    const auto& b = votes[best];
    if (v.first > b.first || (v.first == b.first && v.second < b.second)) best = label;
  }
  return best;
}

double KnnEpisodeAccuracy(const Episode& episode, int k) {
  std::vector<LabeledVector> train;
  for (const BinnedSample& s : episode.train) train.push_back({s.CountVector(), s.label});
  int correct = 0;
  for (const BinnedSample& s : episode.test) {
    const std::vector<double> q = s.CountVector();
    correct += KnnPredict(train, q, k) == s.label;
  }
  return episode.test.empty() ? 0.0 : static_cast<double>(correct) / episode.test.size();
}

}  // namespace soel
