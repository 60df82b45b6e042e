#pragma once

#include "lad/nn/parameters.hpp"

namespace lad::nn {

struct AdamOptions {
  float beta1 = 0.9f;
  float beta2 = 0.98f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;
  float clip_norm = 1.0f;  // global gradient-norm clip; <= 0 disables
};

class Adam {
 public:
  Adam(const ParameterSet& params, AdamOptions options = {});

  // Applies one update with learning rate `lr`; returns the pre-clip gradient norm.
  double step(ParameterSet& params, Gradients& grads, float lr);
  long steps_taken() const { return t_; }

 private:
  AdamOptions opt_;
  Gradients m_;
  Gradients v_;
  long t_ = 0;
};

// Linear warmup to `peak`, then linear decay to `floor_fraction * peak` at
// `total` steps.
float warmup_linear_decay(long step, long warmup, long total, float peak, float floor_fraction = 0.1f);

}  // namespace lad::nn
