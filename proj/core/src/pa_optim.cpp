#include "pal/pa_optim.hpp"

#include <stdexcept>

#include "pal/ops_audit.hpp"

namespace pal::optim {

OptState OptState::init_like(const nn::ParamStore& params) {
  OptState s;
  for (size_t i = 0; i < params.count(); ++i) {
    s.m.emplace_back(params.entry(i).second.shape());
    s.v.emplace_back(params.entry(i).second.shape());
  }
  return s;
}

namespace {

void check_step(const nn::ParamStore& params, const std::vector<Tensor>& grads,
                const OptState& state) {
  if (grads.size() != params.count() || state.m.size() != params.count())
    throw std::invalid_argument("optimizer step: table size mismatch");
  for (size_t i = 0; i < grads.size(); ++i)
    if (!grads[i].same_shape(params.entry(i).second))
      throw std::invalid_argument("optimizer step: gradient shape mismatch");
}

}  // namespace

void adamw_pa_step(nn::ParamStore& params, const std::vector<Tensor>& grads,
                   OptState& state, const AdamConfig& cfg) {
  check_step(params, grads, state);
  ++state.t;
  state.beta1_pow = state.t == 1 ? cfg.beta1 : pam(state.beta1_pow, cfg.beta1);
  state.beta2_pow = state.t == 1 ? cfg.beta2 : pam(state.beta2_pow, cfg.beta2);
  float one_m_b1 = 1.0f - cfg.beta1;
  float one_m_b2 = 1.0f - cfg.beta2;
  float corr1 = 1.0f - state.beta1_pow;
  float corr2 = 1.0f - state.beta2_pow;

  for (size_t p = 0; p < params.count(); ++p) {
    Tensor& w = params.entry(p).second;
    const Tensor& g = grads[p];
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    for (int64_t i = 0; i < w.size(); ++i) {
      m[i] = pam_int_add(cfg.beta1, m[i]) + pam_int_add(one_m_b1, g[i]);
      v[i] = pam_int_add(cfg.beta2, v[i]) +
             pam_int_add(one_m_b2, pam_int_add(g[i], g[i]));
      float mhat = pad(m[i], corr1);
      float vhat = pad(v[i], corr2);
      float denom = (vhat == 0.0f ? 0.0f : pasqrt(vhat)) + cfg.eps;
      float ratio = (mhat == 0.0f && denom == 0.0f) ? 0.0f : pad(mhat, denom);
      float update = pam_int_add(cfg.lr, ratio);
      float decay = pam_int_add(cfg.lr, pam_int_add(cfg.weight_decay, w[i]));
      w[i] = w[i] - update - decay;
    }
  }
}

void adamw_standard_step(nn::ParamStore& params, const std::vector<Tensor>& grads,
                         OptState& state, const AdamConfig& cfg) {
  check_step(params, grads, state);
  ++state.t;
  state.beta1_pow =
      state.t == 1 ? cfg.beta1 : audit::mul(state.beta1_pow, cfg.beta1);
  state.beta2_pow =
      state.t == 1 ? cfg.beta2 : audit::mul(state.beta2_pow, cfg.beta2);
  float one_m_b1 = 1.0f - cfg.beta1;
  float one_m_b2 = 1.0f - cfg.beta2;
  float corr1 = 1.0f - state.beta1_pow;
  float corr2 = 1.0f - state.beta2_pow;

  for (size_t p = 0; p < params.count(); ++p) {
    Tensor& w = params.entry(p).second;
    const Tensor& g = grads[p];
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    for (int64_t i = 0; i < w.size(); ++i) {
      m[i] = audit::mul(cfg.beta1, m[i]) + audit::mul(one_m_b1, g[i]);
      v[i] = audit::mul(cfg.beta2, v[i]) +
             audit::mul(one_m_b2, audit::mul(g[i], g[i]));
      float mhat = audit::div(m[i], corr1);
      float vhat = audit::div(v[i], corr2);
      float denom = (vhat == 0.0f ? 0.0f : audit::sqrt(vhat)) + cfg.eps;
      float ratio = (mhat == 0.0f && denom == 0.0f) ? 0.0f : audit::div(mhat, denom);
      float update = audit::mul(cfg.lr, ratio);
      float decay = audit::mul(cfg.lr, audit::mul(cfg.weight_decay, w[i]));
      w[i] = w[i] - update - decay;
    }
  }
}

void sgd_step(nn::ParamStore& params, const std::vector<Tensor>& grads, float lr,
              bool pa) {
  if (grads.size() != params.count())
    throw std::invalid_argument("sgd_step: table size mismatch");
  for (size_t p = 0; p < params.count(); ++p) {
    Tensor& w = params.entry(p).second;
    const Tensor& g = grads[p];
    for (int64_t i = 0; i < w.size(); ++i)
      w[i] = w[i] - (pa ? pam_int_add(lr, g[i]) : audit::mul(lr, g[i]));
  }
}

}  // namespace pal::optim
