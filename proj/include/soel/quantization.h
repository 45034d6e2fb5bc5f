#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "soel/random.h"

namespace soel {

using IntMatrix = Eigen::Matrix<std::int16_t, Eigen::Dynamic, Eigen::Dynamic>;

// Signed 8-bit mantissa with a step of two: representable weights are
// {-256, -254, ..., 252, 254}.
struct QuantizationScheme {
  int step = 2;
  int min = -256;
  int max = 254;
  int bits = 8;

  void Validate() const;
  bool operator==(const QuantizationScheme&) const = default;
  bool Contains(int value) const { return value >= min && value <= max && value % step == 0; }
};

// Synaptic weights of one projection, shape (post, pre). The shadow view is the
// full-precision master copy; the quantized view is what a deployed core sees.
class WeightMatrix {
 public:
  WeightMatrix() = default;
  WeightMatrix(Eigen::Index post, Eigen::Index pre);
  explicit WeightMatrix(Eigen::MatrixXd shadow);

  Eigen::Index rows() const { return shadow_.rows(); }
  Eigen::Index cols() const { return shadow_.cols(); }

  const Eigen::MatrixXd& shadow() const { return shadow_; }
  Eigen::MatrixXd& mutable_shadow() { return shadow_; }
  const IntMatrix& quantized() const { return quantized_; }
  IntMatrix& mutable_quantized() { return quantized_; }

  // Quantized view widened to double for arithmetic.
  Eigen::MatrixXd QuantizedAsDouble() const { return quantized_.cast<double>(); }

  bool operator==(const WeightMatrix& other) const;

 private:
  Eigen::MatrixXd shadow_;
  IntMatrix quantized_;
};

// Rounds x to one of the two bracketing multiples of `step`, picking the upper
// one with probability equal to the fractional distance. Exact multiples are
// returned unchanged without consuming a draw's influence.
std::int64_t StochasticRoundToStep(double x, int step, RandomSource& rng);
inline std::int64_t StochasticRoundEven(double x, RandomSource& rng) {
  return StochasticRoundToStep(x, 2, rng);
}

int QuantizeValue(double x, const QuantizationScheme& scheme, RandomSource& rng);

// Refreshes w's quantized view from its shadow view; shadow is untouched.
void QuantizeWeights(WeightMatrix& w, const QuantizationScheme& scheme, RandomSource& rng);
// Same, restricted to a single post-synaptic row.
void QuantizeRow(WeightMatrix& w, Eigen::Index row, const QuantizationScheme& scheme,
                 RandomSource& rng);

bool SatisfiesScheme(const IntMatrix& q, const QuantizationScheme& scheme);

}  // namespace soel
