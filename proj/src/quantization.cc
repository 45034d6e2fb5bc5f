#include "soel/quantization.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "soel/error.h"

namespace soel {

void QuantizationScheme::Validate() const {
  if (step <= 0) throw ConfigError("quantization step must be positive");
  if (min % step != 0 || max % step != 0)
    throw ConfigError("quantization range must be a multiple of the step");
  if (min >= max) throw ConfigError("quantization range is empty");
}

WeightMatrix::WeightMatrix(Eigen::Index post, Eigen::Index pre)
    : shadow_(Eigen::MatrixXd::Zero(post, pre)), quantized_(IntMatrix::Zero(post, pre)) {}

WeightMatrix::WeightMatrix(Eigen::MatrixXd shadow)
    : shadow_(std::move(shadow)), quantized_(IntMatrix::Zero(shadow_.rows(), shadow_.cols())) {}

bool WeightMatrix::operator==(const WeightMatrix& other) const {
  if (rows() != other.rows() || cols() != other.cols()) return false;
  // bitwise comparison of the shadow view, so -0.0 != 0.0 and NaN == NaN
  for (Eigen::Index i = 0; i < shadow_.size(); ++i) {
    const double a = shadow_.data()[i];
    const double b = other.shadow_.data()[i];
    if (std::memcmp(&a, &b, sizeof(double)) != 0) return false;
  }
  return quantized_ == other.quantized_;
}

std::int64_t StochasticRoundToStep(double x, int step, RandomSource& rng) {
  if (!std::isfinite(x)) throw InvalidValueError("cannot round non-finite value " + std::to_string(x));
  const double scaled = x / step;
  const double lower = std::floor(scaled);
  const double frac = scaled - lower;
  // always consume one draw so the stream position does not depend on the data
  const double r = rng.Uniform();
  const double chosen = (frac > 0.0 && r < frac) ? lower + 1.0 : lower;
  return static_cast<std::int64_t>(chosen) * step;
}

int QuantizeValue(double x, const QuantizationScheme& scheme, RandomSource& rng) {
  // saturate before converting so huge inputs cannot overflow the integer path
  if (!std::isfinite(x)) throw InvalidValueError("cannot quantize non-finite weight");
  const double bound = 2.0 * std::max(std::abs(scheme.min), std::abs(scheme.max)) + scheme.step;
  const double limited = std::clamp(x, -bound, bound);
  const std::int64_t r = StochasticRoundToStep(limited, scheme.step, rng);
  return static_cast<int>(std::clamp<std::int64_t>(r, scheme.min, scheme.max));
}

void QuantizeWeights(WeightMatrix& w, const QuantizationScheme& scheme, RandomSource& rng) {
  IntMatrix& q = w.mutable_quantized();
  const Eigen::MatrixXd& s = w.shadow();
  q.resize(s.rows(), s.cols());
  for (Eigen::Index j = 0; j < s.cols(); ++j)
    for (Eigen::Index i = 0; i < s.rows(); ++i)
      q(i, j) = static_cast<std::int16_t>(QuantizeValue(s(i, j), scheme, rng));
}

void QuantizeRow(WeightMatrix& w, Eigen::Index row, const QuantizationScheme& scheme,
                 RandomSource& rng) {
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    w.mutable_quantized()(row, j) =
        static_cast<std::int16_t>(QuantizeValue(w.shadow()(row, j), scheme, rng));
}

bool SatisfiesScheme(const IntMatrix& q, const QuantizationScheme& scheme) {
  for (Eigen::Index i = 0; i < q.size(); ++i)
    if (!scheme.Contains(q.data()[i])) return false;
  return true;
}

}  // namespace soel
