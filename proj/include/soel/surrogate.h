#pragma once

namespace soel {

// Stand-in for d(spike)/dv used by the backward pass. Width and slope are in
// absolute membrane-potential units.
struct SurrogateConfig {
  enum class Kind { kBoxcar, kSigmoid };
  Kind kind = Kind::kBoxcar;
  double width = 1.0;
  double slope = 1.0;

  void Validate() const;
  bool operator==(const SurrogateConfig&) const = default;
};

double SurrogateDerivative(double v, double threshold, const SurrogateConfig& cfg);

// Differentiable spike function whose exact derivative is SurrogateDerivative:
// a clamped ramp for the boxcar, a logistic for the sigmoid kind.
double SmoothSpike(double v, double threshold, const SurrogateConfig& cfg);

// Default boxcar spans one threshold, i.e. width 1 in threshold-normalized units.
inline SurrogateConfig DefaultSurrogate(double threshold) {
  SurrogateConfig cfg;
  cfg.width = threshold;
  return cfg;
}

}  // namespace soel
