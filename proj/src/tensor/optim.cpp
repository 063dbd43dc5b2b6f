#include "voxdec/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "voxdec/error.hpp"

namespace voxdec {

void adamw_step(Tensor& param, const Tensor& grad, OptState& state, double lr, const AdamWConfig& cfg) {
  require_same_dims(param, grad, "adamw gradient");
  if (state.m.empty()) {
    state.m = Tensor(param.dims());
    state.v = Tensor(param.dims());
  }
  require_same_dims(param, state.m, "adamw first moment");
  require_same_dims(param, state.v, "adamw second moment");
  if (!grad.all_finite()) throw NumericError("adamw step rejected: gradient contains non-finite values");

  state.step += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    double& m = state.m[i];
    double& v = state.v[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    const double p = param[i];
    param[i] = p - lr * m_hat / (std::sqrt(v_hat) + cfg.eps) - lr * cfg.weight_decay * p;
  }
}

void ScheduleConfig::validate() const {
  if (!(warmup_steps > 0 && warmup_steps < total_steps))
    throw DomainError("schedule needs 0 < warmup_steps < total_steps, got warmup " + std::to_string(warmup_steps) +
                      " of " + std::to_string(total_steps));
  if (!(lr_start <= lr_peak)) throw DomainError("schedule needs lr_start <= lr_peak");
}

double lr_at(std::int64_t step, const ScheduleConfig& cfg) {
  cfg.validate();
  if (step < 0 || step > cfg.total_steps)
    throw DomainError("schedule step " + std::to_string(step) + " outside [0, " + std::to_string(cfg.total_steps) +
                      "]");
  if (step <= cfg.warmup_steps) {
    const double frac = static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * frac;
  }
  const double progress =
      static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.lr_end + (cfg.lr_peak - cfg.lr_end) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace voxdec
