#pragma once

#include <cstdint>
#include <vector>

#include "pal/pa_nn.hpp"

namespace pal::optim {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.98f;
  float eps = 1e-8f;
  float weight_decay = 1e-4f;
};

// Per-parameter AdamW state. The running beta powers are maintained as
// pam-products in the PA optimizer (one pam per step) and as native products
// in the standard one, so each path is self-consistent and deterministic.
struct OptState {
  std::vector<Tensor> m;  // first moments
  std::vector<Tensor> v;  // second moments, entries >= 0
  int64_t t = 0;
  float beta1_pow = 1.0f;
  float beta2_pow = 1.0f;

  static OptState init_like(const nn::ParamStore& params);
};

// Fully piecewise affine AdamW: every multiply, divide and square root in
//   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
//   w <- w - lr*mhat/(sqrt(vhat)+eps) - lr*wd*w
// is pam/pad/pasqrt. Scalar constants (1-b, lr, wd) are pre-converted to
// binary32 host-side.
void adamw_pa_step(nn::ParamStore& params, const std::vector<Tensor>& grads,
                   OptState& state, const AdamConfig& cfg);

// Textbook binary32 AdamW through the instrumented native ops, with the same
// evaluation order as the PA version so power-of-two cases agree bit-exactly.
void adamw_standard_step(nn::ParamStore& params, const std::vector<Tensor>& grads,
                         OptState& state, const AdamConfig& cfg);

void sgd_step(nn::ParamStore& params, const std::vector<Tensor>& grads, float lr,
              bool pa);

}  // namespace pal::optim
