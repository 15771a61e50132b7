#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "pal/pa_tensor.hpp"
#include "test_util.hpp"

using namespace pal;

namespace {

Tensor random_tensor(std::mt19937& g, std::vector<int64_t> shape, uint32_t lo = 100,
                     uint32_t hi = 150) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i)
    t[i] = testutil::rand_normal_exp_range(g, lo, hi);
  return t;
}

// Naive triple loop applying the scalar op directly, ascending k.
Tensor matmul_oracle(const Tensor& a, const Tensor& b, const MatmulOptions& opt) {
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (int64_t kk = 0; kk < k; ++kk) {
        float x = a[i * k + kk], y = b[kk * n + j];
        if (opt.mode == MatmulMode::PAMQuantized) {
          x = quantize_mantissa(x, opt.fmt);
          y = quantize_mantissa(y, opt.fmt);
        }
        acc += opt.mode == MatmulMode::Standard ? x * y : pam(x, y);
      }
      c[i * n + j] = acc;
    }
  return c;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (int64_t i = 0; i < a.size(); ++i)
    if (float_bits(a[i]) != float_bits(b[i])) return false;
  return true;
}

}  // namespace

TEST_CASE("matmul by identity is exact") {
  std::mt19937 g(1);
  Tensor a = random_tensor(g, {4, 4});
  Tensor eye({4, 4});
  for (int i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0f;
  CHECK(bit_equal(matmul(a, eye, MatmulOptions::pam()), a));
}

TEST_CASE("power-of-two operands make PAM match Standard") {
  std::mt19937 g(2);
  Tensor a({3, 5}), b({5, 4});
  for (int64_t i = 0; i < a.size(); ++i) a[i] = pow2(int(g() % 8) - 4);
  for (int64_t i = 0; i < b.size(); ++i) b[i] = pow2(int(g() % 8) - 4);
  CHECK(bit_equal(matmul(a, b, MatmulOptions::pam()),
                  matmul(a, b, MatmulOptions::standard())));
}

TEST_CASE("matmul matches the scalar-loop oracle in every mode") {
  std::mt19937 g(3);
  PaFormat fmt4;
  fmt4.mantissa_bits = 4;
  for (const auto& opt : {MatmulOptions::standard(), MatmulOptions::pam(),
                          MatmulOptions::pam_quantized(fmt4)}) {
    for (int iter = 0; iter < 50; ++iter) {
      int64_t m = 1 + g() % 8, k = 1 + g() % 8, n = 1 + g() % 8;
      Tensor a = random_tensor(g, {m, k});
      Tensor b = random_tensor(g, {k, n});
      CHECK(bit_equal(matmul(a, b, opt), matmul_oracle(a, b, opt)));
    }
  }
}

TEST_CASE("matmul shape mismatch throws") {
  Tensor a({2, 3}), b({4, 2});
  CHECK_THROWS(matmul(a, b, MatmulOptions::pam()));
}

TEST_CASE("batched matmul") {
  std::mt19937 g(4);
  Tensor a = random_tensor(g, {1, 3, 4});
  Tensor b = random_tensor(g, {1, 4, 2});
  Tensor flat_a({3, 4}, std::vector<float>(a.data(), a.data() + a.size()));
  Tensor flat_b({4, 2}, std::vector<float>(b.data(), b.data() + b.size()));
  Tensor c = batched_matmul(a, b, MatmulOptions::pam());
  Tensor c2 = matmul(flat_a, flat_b, MatmulOptions::pam());
  CHECK(std::equal(c.data(), c.data() + c.size(), c2.data(),
                   [](float x, float y) { return float_bits(x) == float_bits(y); }));

  // Second batch of zeros stays zero.
  Tensor a2({2, 2, 2}), b2({2, 2, 2});
  for (int i = 0; i < 4; ++i) {
    a2[i] = 1.5f;
    b2[i] = 2.5f;
  }
  Tensor out = batched_matmul(a2, b2, MatmulOptions::pam());
  for (int i = 4; i < 8; ++i) CHECK(out[i] == 0.0f);

  // Random case against a per-batch oracle.
  Tensor ra = random_tensor(g, {2, 2, 2});
  Tensor rb = random_tensor(g, {2, 2, 2});
  Tensor rc = batched_matmul(ra, rb, MatmulOptions::pam());
  for (int64_t bb = 0; bb < 2; ++bb) {
    Tensor sa({2, 2}, {ra[bb * 4], ra[bb * 4 + 1], ra[bb * 4 + 2], ra[bb * 4 + 3]});
    Tensor sb({2, 2}, {rb[bb * 4], rb[bb * 4 + 1], rb[bb * 4 + 2], rb[bb * 4 + 3]});
    Tensor sc = matmul_oracle(sa, sb, MatmulOptions::pam());
    for (int64_t i = 0; i < 4; ++i)
      CHECK(float_bits(rc[bb * 4 + i]) == float_bits(sc[i]));
  }
}

TEST_CASE("map_binary and map_unary examples") {
  Tensor a({2}, {1.5f, 2.0f});
  Tensor b({2}, {1.5f, 3.0f});
  Tensor r = map_binary(a, b, BinaryOp::Pam);
  CHECK(r[0] == pam(1.5f, 1.5f));
  CHECK(r[1] == pam(2.0f, 3.0f));
  CHECK(r[0] == 2.0f);
  CHECK(r[1] == 6.0f);

  Tensor u({2}, {4.0f, 1.0f});
  Tensor s = map_unary(u, UnaryOp::PaSqrt);
  CHECK(s[0] == 2.0f);
  CHECK(s[1] == 1.0f);

  // Broadcasting a scalar one through pam is the identity.
  std::mt19937 g(5);
  Tensor x = random_tensor(g, {3, 4});
  Tensor one = Tensor::scalar(1.0f);
  CHECK(bit_equal(map_binary(x, one, BinaryOp::Pam), x));

  Tensor bad({3}, {1.0f, 2.0f, 3.0f});
  CHECK_THROWS(map_binary(x, bad, BinaryOp::Pam));
}

TEST_CASE("map domain errors flag the result") {
  Tensor neg({2}, {-1.0f, 2.0f});
  Tensor r = map_unary(neg, UnaryOp::PaLog2);
  CHECK(r.domain_error());
  CHECK(std::isnan(r[0]));
  CHECK(r[1] == 1.0f);

  Tensor z({1}, {0.0f});
  Tensor rr = map_binary(z, z, BinaryOp::Pad);
  CHECK(rr.domain_error());
  CHECK(std::isnan(rr[0]));

  Tensor ok = map_unary(Tensor({2}, {1.0f, 2.0f}), UnaryOp::PaLog2);
  CHECK(!ok.domain_error());
}

TEST_CASE("determinism of repeated kernel calls") {
  std::mt19937 g(6);
  Tensor a = random_tensor(g, {6, 7});
  Tensor b = random_tensor(g, {7, 5});
  Tensor c1 = matmul(a, b, MatmulOptions::pam());
  Tensor c2 = matmul(a, b, MatmulOptions::pam());
  CHECK(bit_equal(c1, c2));
  Tensor s1 = matmul(a, b, MatmulOptions::standard());
  Tensor s2 = matmul(a, b, MatmulOptions::standard());
  CHECK(bit_equal(s1, s2));
}

TEST_CASE("tensor wire format round trip and layout") {
  std::mt19937 g(7);
  Tensor t = random_tensor(g, {2, 3});
  std::stringstream ss;
  t.save(ss);
  std::string payload = ss.str();
  CHECK(payload.size() == 4 * (1 + 2 + 6));
  // rank then dims, little endian u32.
  CHECK(uint8_t(payload[0]) == 2);
  CHECK(uint8_t(payload[4]) == 2);
  CHECK(uint8_t(payload[8]) == 3);
  Tensor back = Tensor::load(ss);
  CHECK(back.shape() == t.shape());
  CHECK(bit_equal(back, t));

  // Zero-size and rank-0 tensors round trip too.
  for (Tensor empty : {Tensor({0, 3}), Tensor::scalar(4.25f)}) {
    std::stringstream s2;
    empty.save(s2);
    Tensor b2 = Tensor::load(s2);
    CHECK(b2.shape() == empty.shape());
    CHECK(bit_equal(b2, empty));
  }
}

TEST_CASE("conv2d via unfolding matches a direct convolution oracle") {
  std::mt19937 g(8);
  Tensor x = random_tensor(g, {2, 5, 4});
  Tensor k = random_tensor(g, {3, 2, 2, 3});
  Tensor out = conv2d_via_matmul(x, k, MatmulOptions::pam());
  CHECK(out.shape() == std::vector<int64_t>{3, 4, 2});
  // Direct sliding-window oracle with the same scalar product and the same
  // channel-major reduction order as the unfolded rows.
  for (int64_t o = 0; o < 3; ++o)
    for (int64_t oy = 0; oy < 4; ++oy)
      for (int64_t ox = 0; ox < 2; ++ox) {
        float acc = 0.0f;
        for (int64_t c = 0; c < 2; ++c)
          for (int64_t ky = 0; ky < 2; ++ky)
            for (int64_t kx = 0; kx < 3; ++kx)
              acc += pam(x[(c * 5 + oy + ky) * 4 + ox + kx],
                         k[((o * 2 + c) * 2 + ky) * 3 + kx]);
        CHECK(float_bits(out[(o * 4 + oy) * 2 + ox]) == float_bits(acc));
      }
  CHECK_THROWS(conv2d_via_matmul(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}),
                                 MatmulOptions::pam()));
}

TEST_CASE("map_unary quantize matches quantize_mantissa") {
  std::mt19937 g(9);
  Tensor x = random_tensor(g, {16}, 1, 254);
  PaFormat fmt;
  fmt.mantissa_bits = 5;
  Tensor q = map_unary(x, UnaryOp::Quantize, fmt);
  for (int64_t i = 0; i < x.size(); ++i)
    CHECK(float_bits(q[i]) == float_bits(quantize_mantissa(x[i], fmt)));
}
