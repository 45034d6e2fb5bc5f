#include "soel/surrogate.h"

#include <algorithm>
#include <cmath>

#include "soel/error.h"

namespace soel {

void SurrogateConfig::Validate() const {
  if (kind == Kind::kBoxcar && !(width > 0.0)) throw ConfigError("boxcar width must be positive");
  if (kind == Kind::kSigmoid && !(slope > 0.0)) throw ConfigError("sigmoid slope must be positive");
}

namespace {
double Logistic(double z) {
  // branch keeps exp() from overflowing for large |z|
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}
}  // namespace

double SurrogateDerivative(double v, double threshold, const SurrogateConfig& cfg) {
  if (cfg.kind == SurrogateConfig::Kind::kBoxcar)
    return std::abs(v - threshold) <= 0.5 * cfg.width ? 1.0 / cfg.width : 0.0;
  const double s = Logistic(cfg.slope * (v - threshold));
  return cfg.slope * s * (1.0 - s);
}

double SmoothSpike(double v, double threshold, const SurrogateConfig& cfg) {
  if (cfg.kind == SurrogateConfig::Kind::kBoxcar)
    return std::clamp((v - threshold) / cfg.width + 0.5, 0.0, 1.0);
  return Logistic(cfg.slope * (v - threshold));
}

}  // namespace soel
