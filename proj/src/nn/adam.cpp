#include "lad/nn/adam.hpp"

#include <algorithm>
#include <cmath>

namespace lad::nn {

Adam::Adam(const ParameterSet& params, AdamOptions options) : opt_(options), m_(params), v_(params) {}

double Adam::step(ParameterSet& params, Gradients& grads, float lr) {
  const double norm = std::sqrt(grads.squared_norm());
  if (opt_.clip_norm > 0.0f && norm > opt_.clip_norm) grads.scale(static_cast<float>(opt_.clip_norm / norm));
  ++t_;
  const float bc1 = 1.0f - std::pow(opt_.beta1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(opt_.beta2, static_cast<float>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto id = static_cast<ParamId>(i);
    Matrix& w = params[id].value;
    const Matrix& g = grads[id];
    Matrix& m = m_[id];
    Matrix& v = v_[id];
    m = opt_.beta1 * m + (1.0f - opt_.beta1) * g;
    v = opt_.beta2 * v + (1.0f - opt_.beta2) * g.cwiseProduct(g);
    w.array() -= lr * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + opt_.eps) + opt_.weight_decay * w.array());
  }
  return norm;
}

float warmup_linear_decay(long step, long warmup, long total, float peak, float floor_fraction) {
  if (warmup > 0 && step < warmup) return peak * static_cast<float>(step + 1) / static_cast<float>(warmup);
  if (total <= warmup) return peak;
  const float frac = std::clamp(static_cast<float>(step - warmup) / static_cast<float>(total - warmup), 0.0f, 1.0f);
  return peak * (1.0f - (1.0f - floor_fraction) * frac);
}

}  // namespace lad::nn
