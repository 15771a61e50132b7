#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pal/ops_audit.hpp"
#include "pal/pa_optim.hpp"
#include "test_util.hpp"

using namespace pal;
using namespace pal::nn;
using namespace pal::optim;

namespace {

ParamStore single_param(float v) {
  ParamStore p;
  p.add("w", Tensor::scalar(v));
  return p;
}

}  // namespace

TEST_CASE("zero gradient applies only decoupled weight decay") {
  ParamStore p = single_param(2.0f);
  OptState st = OptState::init_like(p);
  AdamConfig cfg;
  cfg.lr = 0.125f;
  cfg.weight_decay = 0.25f;
  float w0 = p.at("w")[0];
  adamw_pa_step(p, {Tensor::scalar(0.0f)}, st, cfg);
  float expect = w0 - 0.0f - pam(cfg.lr, pam(cfg.weight_decay, w0));
  CHECK(float_bits(p.at("w")[0]) == float_bits(expect));
  CHECK(st.m[0][0] == 0.0f);
  CHECK(st.v[0][0] == 0.0f);

  // Zero gradient and zero decay leave the parameter untouched (both paths).
  for (bool standard : {false, true}) {
    ParamStore q = single_param(1.7f);
    OptState st2 = OptState::init_like(q);
    AdamConfig c2;
    c2.weight_decay = 0.0f;
    if (standard)
      adamw_standard_step(q, {Tensor::scalar(0.0f)}, st2, c2);
    else
      adamw_pa_step(q, {Tensor::scalar(0.0f)}, st2, c2);
    CHECK(q.at("w")[0] == 1.7f);
  }
}

TEST_CASE("first-step hand case: all powers of two") {
  ParamStore p = single_param(1.0f);
  OptState st = OptState::init_like(p);
  AdamConfig cfg;
  cfg.lr = 0.0625f;
  cfg.beta1 = 0.5f;
  cfg.beta2 = 0.5f;
  cfg.eps = 0.0f;
  cfg.weight_decay = 0.0f;
  adamw_pa_step(p, {Tensor::scalar(1.0f)}, st, cfg);
  CHECK(st.m[0][0] == 0.5f);
  CHECK(st.v[0][0] == 0.5f);
  CHECK(st.beta1_pow == 0.5f);
  // mhat = 1, vhat = 1, pasqrt(1) = 1, update = lr exactly.
  CHECK(p.at("w")[0] == 1.0f - 0.0625f);
}

TEST_CASE("generic first step matches a scalar composition oracle") {
  std::mt19937 g(41);
  for (int iter = 0; iter < 200; ++iter) {
    float w0 = testutil::rand_normal_exp_range(g, 125, 129);
    float g0 = testutil::rand_normal_exp_range(g, 123, 129);
    AdamConfig cfg;  // defaults
    ParamStore p = single_param(w0);
    OptState st = OptState::init_like(p);
    adamw_pa_step(p, {Tensor::scalar(g0)}, st, cfg);

    float m = pam(cfg.beta1, 0.0f) + pam(1.0f - cfg.beta1, g0);
    float v = pam(cfg.beta2, 0.0f) + pam(1.0f - cfg.beta2, pam(g0, g0));
    float mhat = pad(m, 1.0f - cfg.beta1);
    float vhat = pad(v, 1.0f - cfg.beta2);
    float denom = (vhat == 0.0f ? 0.0f : pasqrt(vhat)) + cfg.eps;
    float update = pam(cfg.lr, pad(mhat, denom));
    float decay = pam(cfg.lr, pam(cfg.weight_decay, w0));
    float expect = w0 - update - decay;
    CHECK(float_bits(p.at("w")[0]) == float_bits(expect));
    CHECK(float_bits(st.m[0][0]) == float_bits(m));
    CHECK(float_bits(st.v[0][0]) == float_bits(v));
  }
}

TEST_CASE("standard step matches an independent double-precision computation") {
  AdamConfig cfg;
  cfg.lr = 0.1f;
  cfg.beta1 = 0.9f;
  cfg.beta2 = 0.98f;
  cfg.eps = 1e-8f;
  cfg.weight_decay = 0.0f;
  // One step on the quadratic 0.5*(w-3)^2 from w = 0: g = w - 3 = -3.
  ParamStore p = single_param(0.0f);
  OptState st = OptState::init_like(p);
  adamw_standard_step(p, {Tensor::scalar(-3.0f)}, st, cfg);

  double m = (1.0 - 0.9) * -3.0;
  double v = (1.0 - 0.98) * 9.0;
  double mhat = m / (1.0 - 0.9);
  double vhat = v / (1.0 - 0.98);
  double update = 0.1 * (mhat / (std::sqrt(vhat) + double(cfg.eps)));
  double expect = 0.0 - update;
  CHECK(double(p.at("w")[0]) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("PA and standard AdamW agree bit-exactly on power-of-two runs") {
  AdamConfig cfg;
  cfg.lr = 0.0625f;
  cfg.beta1 = 0.5f;
  cfg.beta2 = 0.5f;
  cfg.eps = 0.0f;
  cfg.weight_decay = 0.25f;
  ParamStore pa = single_param(2.0f), sd = single_param(2.0f);
  OptState sa = OptState::init_like(pa), ss = OptState::init_like(sd);
  for (int step = 0; step < 6; ++step) {
    Tensor g = Tensor::scalar(1.0f);  // constant power-of-two gradient
    adamw_pa_step(pa, {g}, sa, cfg);
    adamw_standard_step(sd, {g}, ss, cfg);
    CHECK(float_bits(pa.at("w")[0]) == float_bits(sd.at("w")[0]));
    CHECK(float_bits(sa.m[0][0]) == float_bits(ss.m[0][0]));
    CHECK(float_bits(sa.v[0][0]) == float_bits(ss.v[0][0]));
    CHECK(float_bits(sa.beta1_pow) == float_bits(ss.beta1_pow));
  }
}

TEST_CASE("PA-AdamW drives a 1-D quadratic below 1% of the initial loss") {
  AdamConfig cfg;
  cfg.lr = 0.05f;
  cfg.weight_decay = 0.0f;
  ParamStore p = single_param(0.0f);
  OptState st = OptState::init_like(p);
  auto loss = [](float w) { return 0.5 * double(w - 3.0f) * double(w - 3.0f); };
  double initial = loss(p.at("w")[0]);
  for (int i = 0; i < 200; ++i) {
    float grad = p.at("w")[0] - 3.0f;
    adamw_pa_step(p, {Tensor::scalar(grad)}, st, cfg);
  }
  CHECK(loss(p.at("w")[0]) < 0.01 * initial);
}

TEST_CASE("PA step is deterministic and multiplication free") {
  std::mt19937 g(43);
  ParamStore p1, p2;
  p1.add("w", Tensor({8}));
  p2.add("w", Tensor({8}));
  std::vector<Tensor> grads = {Tensor({8})};
  for (int i = 0; i < 8; ++i) {
    float w = testutil::rand_normal_exp_range(g, 123, 130);
    p1.at("w")[i] = w;
    p2.at("w")[i] = w;
    grads[0][i] = testutil::rand_normal_exp_range(g, 121, 128);
  }
  OptState s1 = OptState::init_like(p1), s2 = OptState::init_like(p2);
  AdamConfig cfg;
  audit::set_enabled(true);
  audit::reset();
  for (int step = 0; step < 10; ++step) {
    adamw_pa_step(p1, grads, s1, cfg);
    adamw_pa_step(p2, grads, s2, cfg);
  }
  CHECK(audit::snapshot().steady.total() == 0);
  for (int i = 0; i < 8; ++i)
    CHECK(float_bits(p1.at("w")[i]) == float_bits(p2.at("w")[i]));
}

TEST_CASE("sgd step") {
  ParamStore p = single_param(1.0f);
  sgd_step(p, {Tensor::scalar(0.5f)}, 0.25f, true);
  CHECK(p.at("w")[0] == 1.0f - pam(0.25f, 0.5f));
  ParamStore q = single_param(1.0f);
  sgd_step(q, {Tensor::scalar(0.5f)}, 0.25f, false);
  CHECK(q.at("w")[0] == 1.0f - 0.125f);
}
