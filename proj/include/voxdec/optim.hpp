#pragma once

#include <cstdint>

#include "voxdec/tensor.hpp"

namespace voxdec {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// Moment estimates for one parameter array.
struct OptState {
  Tensor m;
  Tensor v;
  std::int64_t step = 0;
};

/// One AdamW update with decoupled weight decay. A fresh (empty) state is
/// sized on first use. Non-finite gradients are rejected before anything is
/// modified.
void adamw_step(Tensor& param, const Tensor& grad, OptState& state, double lr, const AdamWConfig& cfg = {});

/// Linear warmup followed by cosine decay, evaluated per optimizer step.
struct ScheduleConfig {
  double lr_start = 2e-5;
  double lr_peak = 2e-4;
  double lr_end = 0.0;
  std::int64_t warmup_steps = 1;
  std::int64_t total_steps = 2;

  void validate() const;
};

double lr_at(std::int64_t step, const ScheduleConfig& cfg);

}  // namespace voxdec
