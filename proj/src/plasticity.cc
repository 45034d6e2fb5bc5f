#include "soel/plasticity.h"

#include <cmath>
#include <string>

#include "soel/error.h"
#include "soel/rule_engine.h"

namespace soel {

void SoelConfig::Validate() const {
  if (!(theta >= 0.0)) throw ConfigError("theta must be non-negative");
  if (window < 1 || window > 63) throw ConfigError("window must lie in 1..63");
  // |target - count| <= max(window, |target|) since 0 <= count <= window
  if (offset <= window || offset <= std::abs(target_spikes) || offset <= std::abs(off_target_spikes))
    throw ConfigError("offset must exceed the largest possible |error| (offset " +
                      std::to_string(offset) + ", window " + std::to_string(window) + ")");
}

double ComputeWindowError(int target, int count, double theta) {
  const double e = static_cast<double>(target) - count;
  return std::abs(e) >= theta ? e : 0.0;
}

int EncodePostTrace(double gated_error, int offset) {
  if (gated_error == 0.0) return 0;
  const double y = std::round(offset + gated_error);
  if (y < 1.0)
    throw ConfigError("offset " + std::to_string(offset) + " too small to encode error " +
                      std::to_string(gated_error));
  return static_cast<int>(y);
}

Eigen::VectorXd SoelUpdate(const Eigen::Ref<const Eigen::VectorXd>& pre_trace, int encoded,
                           const SoelConfig& cfg) {
  Eigen::VectorXd dw = Eigen::VectorXd::Zero(pre_trace.size());
  if (encoded == 0) return dw;
  const double decoded = static_cast<double>(encoded - cfg.offset);
  // accumulate onto +0.0 so a zero trace never yields -0.0
  for (Eigen::Index j = 0; j < pre_trace.size(); ++j) dw[j] += cfg.eta * pre_trace[j] * decoded;
  return dw;
}

EpochOutcome LearningEpochStep(SoelState& state, const TraceState& trace,
                               const Eigen::Ref<const Eigen::VectorXd>& output_spikes,
                               std::optional<int> label, bool blank, WeightMatrix& w,
                               const EpochContext& ctx) {
  const SoelConfig& cfg = *ctx.soel;
  const Eigen::Index outputs = state.spike_counter.size();
  if (output_spikes.size() != outputs || w.rows() != outputs)
    throw DimensionError("output spikes / weights do not match the SOEL state");
  if (w.cols() != trace.p.size()) throw DimensionError("trace size does not match weights");
  if (label && (*label < 0 || *label >= outputs))
    throw std::out_of_range("label " + std::to_string(*label) + " out of range");

  for (Eigen::Index i = 0; i < outputs; ++i)
    if (output_spikes[i] != 0.0) ++state.spike_counter[i];
  EpochOutcome out;
  if (++state.steps_into_window < cfg.window) return out;

  out.boundary = true;
  ++state.epochs;
  state.steps_into_window = 0;
  state.last_encoded_error.setZero();
  if (!blank && label) {
    SoelConfig scaled = cfg;
    scaled.eta = cfg.eta * ctx.eta_scale;
    for (Eigen::Index i = 0; i < outputs; ++i) {
      const int target = i == *label ? cfg.target_spikes : cfg.off_target_spikes;
      const double e = ComputeWindowError(target, state.spike_counter[i], cfg.theta);
      const int y = EncodePostTrace(e, cfg.offset);
      state.last_encoded_error[i] = y;
      if (y == 0) continue;
      const Eigen::VectorXd dw = ctx.rule ? EvalRuleRow(*ctx.rule, trace.p, y, scaled)
                                          : SoelUpdate(trace.p, y, scaled);
      if (ctx.scheme) {
        // integer form: the update starts from the stored integer weights only
        w.mutable_shadow().row(i) = w.quantized().row(i).cast<double>() + dw.transpose();
        QuantizeRow(w, i, *ctx.scheme, *ctx.rng);
      } else {
        w.mutable_shadow().row(i) += dw.transpose();
      }
      ++out.rows_written;
    }
  }
  state.row_writes += out.rows_written;
  state.spike_counter.setZero();
  return out;
}

}  // namespace soel
