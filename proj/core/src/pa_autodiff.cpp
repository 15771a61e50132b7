#include "pal/pa_autodiff.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "pal/ops_audit.hpp"

namespace pal::ad {

namespace {

std::vector<int64_t> strides_for(const std::vector<int64_t>& shape, size_t rank,
                                 const std::vector<int64_t>& out_shape) {
  std::vector<int64_t> strides(rank, 0);
  int64_t s = 1;
  for (size_t i = shape.size(); i-- > 0;) {
    size_t oi = i + (rank - shape.size());
    strides[oi] = (shape[i] == 1 && out_shape[oi] != 1) ? 0 : s;
    s *= shape[i];
  }
  return strides;
}

// Calls f(ia, ib, flat_out) over the broadcast iteration space of a and b.
template <typename F>
void for_each_broadcast(const Tensor& a, const Tensor& b,
                        const std::vector<int64_t>& out_shape, F&& f) {
  size_t rank = out_shape.size();
  auto sa = strides_for(a.shape(), rank, out_shape);
  auto sb = strides_for(b.shape(), rank, out_shape);
  int64_t total = 1;
  for (int64_t d : out_shape) total *= d;
  std::vector<int64_t> idx(rank, 0);
  for (int64_t flat = 0; flat < total; ++flat) {
    int64_t ia = 0, ib = 0;
    for (size_t d = 0; d < rank; ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    f(ia, ib, flat);
    for (size_t d = rank; d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
}

Tensor transpose2d_val(const Tensor& t) {
  Tensor out({t.dim(1), t.dim(0)});
  for (int64_t i = 0; i < t.dim(0); ++i)
    for (int64_t j = 0; j < t.dim(1); ++j) out[j * t.dim(0) + i] = t[i * t.dim(1) + j];
  return out;
}

bool positive_normal(float x) noexcept { return is_normal(x) && x > 0.0f; }

// d(pam)/dA at (av, bv): (-1)^{S_B} * 2^{E_B + carry}, applied to dv. Zero
// where the forward output saturated or flushed (those regions are constant).
inline float pam_exact_partial(float av, float bv, float dv) noexcept {
  if (!is_normal(av) || !is_normal(bv)) return 0.0f;
  int carry = int(pam_carry(av, bv));
  int out_e = unbiased_exp(av) + unbiased_exp(bv) + carry;
  if (out_e < -126 || out_e > 127) return 0.0f;
  float g = scale_pow2(dv, unbiased_exp(bv) + carry);
  return std::signbit(bv) ? -g : g;
}

// d(pad)/dA at (av, bv): (-1)^{S_B} * 2^{-E_B - borrow}, applied to dv.
inline float pad_exact_partial_a(float av, float bv, float dv) noexcept {
  if (!is_normal(av) || !is_normal(bv)) return 0.0f;
  int borrow = int(pad_borrow(av, bv));
  int out_e = unbiased_exp(av) - unbiased_exp(bv) - borrow;
  if (out_e < -126 || out_e > 127) return 0.0f;
  float g = scale_pow2(dv, -unbiased_exp(bv) - borrow);
  return std::signbit(bv) ? -g : g;
}

// d(pad)/dB, same rule in both modes: -pad(pam(A, dY), pam(B, B)).
inline float pad_partial_b(float av, float bv, float dv) noexcept {
  if (!is_normal(bv)) return 0.0f;
  return -pal::pad(pal::pam_int_add(av, dv), pal::pam_int_add(bv, bv));
}

constexpr uint64_t kFnvOffset = 1469598103934665603ull;
constexpr uint64_t kFnvPrime = 1099511628211ull;

struct Hasher {
  uint64_t h = kFnvOffset;
  void mix(uint64_t v) noexcept {
    h ^= v;
    h *= kFnvPrime;
  }
};

uint64_t exp_field(float x) noexcept { return (float_bits(x) >> kMantBits) & 0xFFu; }

}  // namespace

const Tensor& Gradients::wrt(Var v) const {
  if (v.id < 0 || size_t(v.id) >= grads_.size())
    throw std::out_of_range("Gradients::wrt: bad var");
  const Tensor& g = grads_[size_t(v.id)];
  if (g.size() == 0 && g.rank() == 0)
    throw std::logic_error("Gradients::wrt: no gradient recorded for this node");
  return g;
}

void Tape::check_same_tape(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= size())
    throw std::invalid_argument("Tape: var does not belong to this tape");
}

Var Tape::emit(Op op, int a, int b, Tensor value) {
  Node n;
  n.op = op;
  n.mclass = class_;
  n.a = a;
  n.b = b;
  nodes_.push_back(std::move(n));
  vals_.push_back(std::move(value));
  int id = size() - 1;
  fingerprint(id);
  return Var{this, id};
}

Var Tape::input(Tensor v) { return emit(Op::kInput, -1, -1, std::move(v)); }
Var Tape::constant(Tensor v) { return emit(Op::kConstant, -1, -1, std::move(v)); }

const Tensor& Tape::val(Var v) const {
  check_same_tape(v);
  return vals_[size_t(v.id)];
}

Var Tape::add(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  return emit(Op::kAdd, a.id, b.id, map_binary(val(a), val(b), BinaryOp::Add));
}

Var Tape::sub(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  return emit(Op::kSub, a.id, b.id, map_binary(val(a), val(b), BinaryOp::Sub));
}

Var Tape::neg(Var a) {
  check_same_tape(a);
  return emit(Op::kNeg, a.id, -1, map_unary(val(a), UnaryOp::Neg));
}

Var Tape::sum_last(Var a) {
  check_same_tape(a);
  const Tensor& x = val(a);
  if (x.rank() < 1) throw std::invalid_argument("sum_last: rank 0 operand");
  int64_t d = x.shape().back();
  auto out_shape = x.shape();
  out_shape.back() = 1;
  Tensor out(out_shape);
  int64_t rows = d == 0 ? 0 : x.size() / d;
  for (int64_t r = 0; r < rows; ++r) {
    float acc = 0.0f;
    for (int64_t j = 0; j < d; ++j) acc += x[r * d + j];
    out[r] = acc;
  }
  return emit(Op::kSumLast, a.id, -1, std::move(out));
}

Var Tape::sum_all(Var a) {
  check_same_tape(a);
  const Tensor& x = val(a);
  float acc = 0.0f;
  for (int64_t i = 0; i < x.size(); ++i) acc += x[i];
  return emit(Op::kSumAll, a.id, -1, Tensor::scalar(acc));
}

Var Tape::row_max(Var a) {
  check_same_tape(a);
  const Tensor& x = val(a);
  if (x.rank() < 1) throw std::invalid_argument("row_max: rank 0 operand");
  int64_t d = x.shape().back();
  if (d == 0) throw std::invalid_argument("row_max: empty last axis");
  auto out_shape = x.shape();
  out_shape.back() = 1;
  Tensor out(out_shape);
  int64_t rows = x.size() / d;
  std::vector<int64_t> argmax(static_cast<size_t>(rows), 0);
  for (int64_t r = 0; r < rows; ++r) {
    int64_t best = 0;
    for (int64_t j = 1; j < d; ++j)
      if (x[r * d + j] > x[r * d + best]) best = j;
    argmax[size_t(r)] = best;
    out[r] = x[r * d + best];
  }
  Var v = emit(Op::kRowMax, a.id, -1, std::move(out));
  nodes_[size_t(v.id)].aux = std::move(argmax);
  return v;
}

Var Tape::relu(Var a) {
  check_same_tape(a);
  const Tensor& x = val(a);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return emit(Op::kRelu, a.id, -1, std::move(out));
}

Var Tape::pam(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  return emit(Op::kPam, a.id, b.id, map_binary(val(a), val(b), BinaryOp::Pam));
}

Var Tape::pad(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  return emit(Op::kPad, a.id, b.id, map_binary(val(a), val(b), BinaryOp::Pad));
}

Var Tape::paexp2(Var a) {
  check_same_tape(a);
  return emit(Op::kPaExp2, a.id, -1, map_unary(val(a), UnaryOp::PaExp2));
}

Var Tape::palog2(Var a) {
  check_same_tape(a);
  return emit(Op::kPaLog2, a.id, -1, map_unary(val(a), UnaryOp::PaLog2));
}

Var Tape::paexp(Var a) { return paexp2(pam(constant_scalar(kLog2E), a)); }

Var Tape::palog(Var a) { return pad(palog2(a), constant_scalar(kLog2E)); }

Var Tape::pasqrt(Var a) { return paexp2(pad(palog2(a), constant_scalar(2.0f))); }

Var Tape::nat_mul(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  Tensor out(broadcast_shape(A.shape(), B.shape()));
  for_each_broadcast(A, B, out.shape(), [&](int64_t ia, int64_t ib, int64_t o) {
    out[o] = audit::mul(A[ia], B[ib]);
  });
  return emit(Op::kNatMul, a.id, b.id, std::move(out));
}

Var Tape::nat_div(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  Tensor out(broadcast_shape(A.shape(), B.shape()));
  for_each_broadcast(A, B, out.shape(), [&](int64_t ia, int64_t ib, int64_t o) {
    out[o] = audit::div(A[ia], B[ib]);
  });
  return emit(Op::kNatDiv, a.id, b.id, std::move(out));
}

Var Tape::nat_sqrt(Var a) {
  check_same_tape(a);
  const Tensor& A = val(a);
  Tensor out(A.shape());
  for (int64_t i = 0; i < A.size(); ++i) out[i] = audit::sqrt(A[i]);
  return emit(Op::kNatSqrt, a.id, -1, std::move(out));
}

Var Tape::nat_exp(Var a) {
  check_same_tape(a);
  const Tensor& A = val(a);
  Tensor out(A.shape());
  // std::exp is not a mul/div/sqrt but it is certainly not PA either; it only
  // appears in the baseline stack.
  for (int64_t i = 0; i < A.size(); ++i) out[i] = std::exp(A[i]);
  return emit(Op::kNatExp, a.id, -1, std::move(out));
}

Var Tape::nat_log(Var a) {
  check_same_tape(a);
  const Tensor& A = val(a);
  Tensor out(A.shape());
  for (int64_t i = 0; i < A.size(); ++i) out[i] = std::log(A[i]);
  return emit(Op::kNatLog, a.id, -1, std::move(out));
}

Var Tape::matmul(Var a, Var b, const MatmulOptions& opt) {
  check_same_tape(a);
  check_same_tape(b);
  Var v = emit(Op::kMatmul, a.id, b.id, pal::matmul(val(a), val(b), opt));
  nodes_[size_t(v.id)].mm = opt;
  fingerprint_matmul(v.id);
  return v;
}

Var Tape::batched_matmul(Var a, Var b, const MatmulOptions& opt) {
  check_same_tape(a);
  check_same_tape(b);
  Var v = emit(Op::kBatchedMatmul, a.id, b.id, pal::batched_matmul(val(a), val(b), opt));
  nodes_[size_t(v.id)].mm = opt;
  fingerprint_matmul(v.id);
  return v;
}

Var Tape::transpose2d(Var a) {
  check_same_tape(a);
  if (val(a).rank() != 2) throw std::invalid_argument("transpose2d: rank != 2");
  return emit(Op::kTranspose2D, a.id, -1, transpose2d_val(val(a)));
}

namespace {
Tensor batch_transpose_val(const Tensor& x) {
  int64_t nb = x.dim(0), m = x.dim(1), n = x.dim(2);
  Tensor out({nb, n, m});
  for (int64_t b = 0; b < nb; ++b)
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j)
        out[(b * n + j) * m + i] = x[(b * m + i) * n + j];
  return out;
}
}  // namespace

Var Tape::batch_transpose(Var a) {
  check_same_tape(a);
  if (val(a).rank() != 3) throw std::invalid_argument("batch_transpose: rank != 3");
  return emit(Op::kBatchTranspose, a.id, -1, batch_transpose_val(val(a)));
}

Var Tape::reshape(Var a, std::vector<int64_t> shape) {
  check_same_tape(a);
  const Tensor& x = val(a);
  Tensor out(shape, std::vector<float>(x.data(), x.data() + x.size()));
  return emit(Op::kReshape, a.id, -1, std::move(out));
}

Var Tape::gather_rows(Var table, std::vector<int64_t> indices) {
  check_same_tape(table);
  const Tensor& t = val(table);
  if (t.rank() != 2) throw std::invalid_argument("gather_rows: table rank != 2");
  int64_t e = t.dim(1);
  Tensor out({int64_t(indices.size()), e});
  for (size_t i = 0; i < indices.size(); ++i) {
    int64_t row = indices[i];
    if (row < 0 || row >= t.dim(0)) throw std::out_of_range("gather_rows: bad index");
    std::memcpy(out.data() + int64_t(i) * e, t.data() + row * e, size_t(e) * 4);
  }
  Var v = emit(Op::kGatherRows, table.id, -1, std::move(out));
  nodes_[size_t(v.id)].aux = std::move(indices);
  return v;
}

Var Tape::split_heads(Var a, int64_t heads) {
  check_same_tape(a);
  const Tensor& x = val(a);
  if (x.rank() != 3 || x.dim(2) % heads != 0)
    throw std::invalid_argument("split_heads: bad shape");
  int64_t bsz = x.dim(0), seq = x.dim(1), hd = x.dim(2) / heads;
  Tensor out({bsz * heads, seq, hd});
  for (int64_t b = 0; b < bsz; ++b)
    for (int64_t s = 0; s < seq; ++s)
      for (int64_t h = 0; h < heads; ++h)
        std::memcpy(out.data() + (((b * heads + h) * seq + s) * hd),
                    x.data() + ((b * seq + s) * heads * hd + h * hd), size_t(hd) * 4);
  Var v = emit(Op::kSplitHeads, a.id, -1, std::move(out));
  nodes_[size_t(v.id)].aux = {heads};
  return v;
}

Var Tape::merge_heads(Var a, int64_t heads) {
  check_same_tape(a);
  const Tensor& x = val(a);
  if (x.rank() != 3 || x.dim(0) % heads != 0)
    throw std::invalid_argument("merge_heads: bad shape");
  int64_t bsz = x.dim(0) / heads, seq = x.dim(1), hd = x.dim(2);
  Tensor out({bsz, seq, heads * hd});
  for (int64_t b = 0; b < bsz; ++b)
    for (int64_t s = 0; s < seq; ++s)
      for (int64_t h = 0; h < heads; ++h)
        std::memcpy(out.data() + ((b * seq + s) * heads * hd + h * hd),
                    x.data() + (((b * heads + h) * seq + s) * hd), size_t(hd) * 4);
  Var v = emit(Op::kMergeHeads, a.id, -1, std::move(out));
  nodes_[size_t(v.id)].aux = {heads};
  return v;
}

// --- segment fingerprints --------------------------------------------------

void Tape::fingerprint(int id) {
  segment_ids_.push_back(0);
  if (!collect_segments_) return;
  const Node& n = nodes_[size_t(id)];
  Hasher hash;
  switch (n.op) {
    case Op::kPam:
    case Op::kPad: {
      const Tensor& A = vals_[size_t(n.a)];
      const Tensor& B = vals_[size_t(n.b)];
      bool is_pam = n.op == Op::kPam;
      for_each_broadcast(A, B, vals_[size_t(id)].shape(),
                         [&](int64_t ia, int64_t ib, int64_t) {
                           float av = A[ia], bv = B[ib];
                           uint64_t flags = (is_normal(av) ? 1u : 0u) |
                                            (is_normal(bv) ? 2u : 0u);
                           uint64_t ind = 0;
                           if (flags == 3)
                             ind = is_pam ? pam_carry(av, bv) : pad_borrow(av, bv);
                           hash.mix((exp_field(av) << 12) | (exp_field(bv) << 4) |
                                    (ind << 2) | flags);
                         });
      break;
    }
    case Op::kPaExp2: {
      const Tensor& A = vals_[size_t(n.a)];
      for (int64_t i = 0; i < A.size(); ++i) {
        float x = A[i];
        PaFlags fl;
        pal::paexp2(x, PaFormat{}, &fl);
        uint64_t state = (fl.special ? 4u : 0u) | (fl.clamped ? 2u : 0u) |
                         (fl.flushed ? 1u : 0u);
        int64_t k = (std::isfinite(x) && std::abs(x) < 16384.0f)
                        ? int64_t(std::floor(x))
                        : int64_t(1) << 40;
        hash.mix((uint64_t(k + (int64_t(1) << 20)) << 3) | state);
      }
      break;
    }
    case Op::kPaLog2: {
      const Tensor& A = vals_[size_t(n.a)];
      for (int64_t i = 0; i < A.size(); ++i)
        hash.mix(positive_normal(A[i]) ? exp_field(A[i]) : 0x1FFu);
      break;
    }
    case Op::kRelu: {
      const Tensor& A = vals_[size_t(n.a)];
      for (int64_t i = 0; i < A.size(); ++i) hash.mix(A[i] > 0.0f ? 1u : 0u);
      break;
    }
    case Op::kRowMax: {
      for (int64_t v : n.aux) hash.mix(uint64_t(v));
      break;
    }
    default:
      return;  // affine or smooth: no segment structure to record
  }
  segment_ids_.back() = hash.h;
}

void Tape::fingerprint_matmul(int id) {
  if (!collect_segments_) return;
  const Node& n = nodes_[size_t(id)];
  if (n.mm.mode == MatmulMode::Standard) return;
  const Tensor& A = vals_[size_t(n.a)];
  const Tensor& B = vals_[size_t(n.b)];
  bool quantized = n.mm.mode == MatmulMode::PAMQuantized;
  Tensor qa = quantized ? map_unary(A, UnaryOp::Quantize, n.mm.fmt) : A;
  Tensor qb = quantized ? map_unary(B, UnaryOp::Quantize, n.mm.fmt) : B;
  Hasher hash;
  // Quantization cells (full bit patterns) when quantized, octaves otherwise.
  for (int64_t i = 0; i < qa.size(); ++i)
    hash.mix(quantized ? float_bits(qa[i]) : exp_field(qa[i]));
  for (int64_t i = 0; i < qb.size(); ++i)
    hash.mix(quantized ? float_bits(qb[i]) : exp_field(qb[i]));
  // Carry indicator of every scalar product.
  int64_t batch = 1, m, k, nn;
  if (n.op == Op::kBatchedMatmul) {
    batch = qa.dim(0), m = qa.dim(1), k = qa.dim(2), nn = qb.dim(2);
  } else {
    m = qa.dim(0), k = qa.dim(1), nn = qb.dim(1);
  }
  for (int64_t bb = 0; bb < batch; ++bb) {
    const float* pa_ = qa.data() + bb * m * k;
    const float* pb_ = qb.data() + bb * k * nn;
    for (int64_t i = 0; i < m; ++i)
      for (int64_t kk = 0; kk < k; ++kk) {
        float av = pa_[i * k + kk];
        uint64_t bits = 0;
        for (int64_t j = 0; j < nn; ++j) {
          float bv = pb_[kk * nn + j];
          uint64_t c = (is_normal(av) && is_normal(bv)) ? pam_carry(av, bv) : 2u;
          bits = bits * 3u + c;
          if ((j & 31) == 31) {
            hash.mix(bits);
            bits = 0;
          }
        }
        hash.mix(bits);
      }
  }
  segment_ids_[size_t(id)] = hash.h;
}

// --- backward ----------------------------------------------------------------

void add_into(Tensor& dst, const Tensor& src) {
  if (!dst.same_shape(src)) throw std::invalid_argument("add_into: shape mismatch");
  for (int64_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor reduce_to_shape(const Tensor& g, const std::vector<int64_t>& shape) {
  if (g.shape() == shape) return g;
  Tensor out(shape);
  size_t rank = g.shape().size();
  auto st = strides_for(shape, rank, g.shape());
  std::vector<int64_t> idx(rank, 0);
  for (int64_t flat = 0; flat < g.size(); ++flat) {
    int64_t io = 0;
    for (size_t d = 0; d < rank; ++d) io += idx[d] * st[d];
    out[io] += g[flat];
    for (size_t d = rank; d-- > 0;) {
      if (++idx[d] < g.shape()[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

namespace {

// Exact-mode backward of one PAM matrix product: every entry of the input
// gradients is a sum of sign-carrying power-of-two scalings of the output
// deltas, accumulated in ascending index order.
void matmul_exact_backward(const float* qa, const float* qb, const float* d, float* ga,
                           float* gb, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t kk = 0; kk < k; ++kk) {
      float av = qa[i * k + kk];
      float acc = 0.0f;
      if (is_normal(av)) {
        for (int64_t j = 0; j < n; ++j)
          acc += pam_exact_partial(av, qb[kk * n + j], d[i * n + j]);
      }
      ga[i * k + kk] += acc;
    }
  for (int64_t kk = 0; kk < k; ++kk)
    for (int64_t j = 0; j < n; ++j) {
      float bv = qb[kk * n + j];
      float acc = 0.0f;
      if (is_normal(bv)) {
        for (int64_t i = 0; i < m; ++i)
          acc += pam_exact_partial(bv, qa[i * k + kk], d[i * n + j]);
      }
      gb[kk * n + j] += acc;
    }
}

}  // namespace

Gradients Tape::backward(Var out, const Tensor& seed, const DerivativeModes& modes) {
  check_same_tape(out);
  if (seed.shape() != vals_[size_t(out.id)].shape())
    throw std::invalid_argument("backward: seed shape mismatch");

  std::vector<Tensor> grads(nodes_.size());
  std::vector<char> has(nodes_.size(), 0);
  auto accum = [&](int id, const Tensor& g) {
    if (id < 0 || nodes_[size_t(id)].op == Op::kConstant) return;
    if (!has[size_t(id)]) {
      grads[size_t(id)] = Tensor(vals_[size_t(id)].shape());
      has[size_t(id)] = 1;
    }
    add_into(grads[size_t(id)], g);
  };
  accum(out.id, seed);

  for (int id = out.id; id >= 0; --id) {
    if (!has[size_t(id)]) continue;
    const Node& n = nodes_[size_t(id)];
    const Tensor& d = grads[size_t(id)];
    DerivativeMode mode = modes.for_class(n.mclass);
    switch (n.op) {
      case Op::kInput:
      case Op::kConstant:
        break;
      case Op::kAdd: {
        accum(n.a, reduce_to_shape(d, vals_[size_t(n.a)].shape()));
        accum(n.b, reduce_to_shape(d, vals_[size_t(n.b)].shape()));
        break;
      }
      case Op::kSub: {
        accum(n.a, reduce_to_shape(d, vals_[size_t(n.a)].shape()));
        accum(n.b, reduce_to_shape(map_unary(d, UnaryOp::Neg),
                                   vals_[size_t(n.b)].shape()));
        break;
      }
      case Op::kNeg:
        accum(n.a, map_unary(d, UnaryOp::Neg));
        break;
      case Op::kSumLast: {
        const Tensor& A = vals_[size_t(n.a)];
        int64_t dl = A.shape().back();
        Tensor ga(A.shape());
        int64_t rows = dl == 0 ? 0 : A.size() / dl;
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < dl; ++j) ga[r * dl + j] = d[r];
        accum(n.a, ga);
        break;
      }
      case Op::kSumAll: {
        accum(n.a, Tensor::full(vals_[size_t(n.a)].shape(), d[0]));
        break;
      }
      case Op::kRowMax: {
        const Tensor& A = vals_[size_t(n.a)];
        int64_t dl = A.shape().back();
        Tensor ga(A.shape());
        for (size_t r = 0; r < n.aux.size(); ++r)
          ga[int64_t(r) * dl + n.aux[r]] = d[int64_t(r)];
        accum(n.a, ga);
        break;
      }
      case Op::kRelu: {
        const Tensor& A = vals_[size_t(n.a)];
        Tensor ga(A.shape());
        for (int64_t i = 0; i < A.size(); ++i) ga[i] = A[i] > 0.0f ? d[i] : 0.0f;
        accum(n.a, ga);
        break;
      }
      case Op::kPam: {
        const Tensor& A = vals_[size_t(n.a)];
        const Tensor& B = vals_[size_t(n.b)];
        Tensor ga(d.shape()), gb(d.shape());
        for_each_broadcast(A, B, d.shape(), [&](int64_t ia, int64_t ib, int64_t o) {
          float av = A[ia], bv = B[ib], dv = d[o];
          if (mode == DerivativeMode::Exact) {
            ga[o] = pam_exact_partial(av, bv, dv);
            gb[o] = pam_exact_partial(bv, av, dv);
          } else {
            ga[o] = pal::pam_int_add(bv, dv);
            gb[o] = pal::pam_int_add(av, dv);
          }
        });
        accum(n.a, reduce_to_shape(ga, A.shape()));
        accum(n.b, reduce_to_shape(gb, B.shape()));
        break;
      }
      case Op::kPad: {
        const Tensor& A = vals_[size_t(n.a)];
        const Tensor& B = vals_[size_t(n.b)];
        Tensor ga(d.shape()), gb(d.shape());
        for_each_broadcast(A, B, d.shape(), [&](int64_t ia, int64_t ib, int64_t o) {
          float av = A[ia], bv = B[ib], dv = d[o];
          if (mode == DerivativeMode::Exact) {
            ga[o] = pad_exact_partial_a(av, bv, dv);
          } else {
            ga[o] = is_normal(bv) ? pal::pad(dv, bv) : 0.0f;
          }
          gb[o] = pad_partial_b(av, bv, dv);
        });
        accum(n.a, reduce_to_shape(ga, A.shape()));
        accum(n.b, reduce_to_shape(gb, B.shape()));
        break;
      }
      case Op::kPaExp2: {
        const Tensor& A = vals_[size_t(n.a)];
        const Tensor& Y = vals_[size_t(id)];
        Tensor ga(A.shape());
        for (int64_t i = 0; i < A.size(); ++i) {
          float av = A[i], dv = d[i];
          if (mode == DerivativeMode::Exact) {
            PaFlags fl;
            pal::paexp2(av, PaFormat{}, &fl);
            ga[i] = (fl.special || fl.clamped || fl.flushed)
                        ? 0.0f
                        : scale_pow2(dv, int(std::floor(av)));
          } else {
            // "2^A" taken from the saved forward output.
            ga[i] = pal::pam_int_add(pal::pam_int_add(Y[i], kLn2), dv);
          }
        }
        accum(n.a, ga);
        break;
      }
      case Op::kPaLog2: {
        const Tensor& A = vals_[size_t(n.a)];
        Tensor ga(A.shape());
        for (int64_t i = 0; i < A.size(); ++i) {
          float av = A[i], dv = d[i];
          if (!positive_normal(av)) {
            ga[i] = 0.0f;
          } else if (mode == DerivativeMode::Exact) {
            ga[i] = scale_pow2(dv, -unbiased_exp(av));
          } else {
            ga[i] = pal::pad(dv, pal::pam_int_add(av, kLn2));
          }
        }
        accum(n.a, ga);
        break;
      }
      case Op::kNatMul: {
        const Tensor& A = vals_[size_t(n.a)];
        const Tensor& B = vals_[size_t(n.b)];
        Tensor ga(d.shape()), gb(d.shape());
        for_each_broadcast(A, B, d.shape(), [&](int64_t ia, int64_t ib, int64_t o) {
          ga[o] = audit::mul(B[ib], d[o]);
          gb[o] = audit::mul(A[ia], d[o]);
        });
        accum(n.a, reduce_to_shape(ga, A.shape()));
        accum(n.b, reduce_to_shape(gb, B.shape()));
        break;
      }
      case Op::kNatDiv: {
        const Tensor& A = vals_[size_t(n.a)];
        const Tensor& B = vals_[size_t(n.b)];
        const Tensor& Y = vals_[size_t(id)];
        Tensor ga(d.shape()), gb(d.shape());
        for_each_broadcast(A, B, d.shape(), [&](int64_t, int64_t ib, int64_t o) {
          ga[o] = audit::div(d[o], B[ib]);
          gb[o] = -audit::mul(d[o], audit::div(Y[o], B[ib]));
        });
        accum(n.a, reduce_to_shape(ga, A.shape()));
        accum(n.b, reduce_to_shape(gb, B.shape()));
        break;
      }
      case Op::kNatSqrt: {
        const Tensor& Y = vals_[size_t(id)];
        Tensor ga(Y.shape());
        for (int64_t i = 0; i < Y.size(); ++i)
          ga[i] = audit::div(audit::mul(d[i], 0.5f), Y[i]);
        accum(n.a, ga);
        break;
      }
      case Op::kNatExp: {
        const Tensor& Y = vals_[size_t(id)];
        Tensor ga(Y.shape());
        for (int64_t i = 0; i < Y.size(); ++i) ga[i] = audit::mul(d[i], Y[i]);
        accum(n.a, ga);
        break;
      }
      case Op::kNatLog: {
        const Tensor& A = vals_[size_t(n.a)];
        Tensor ga(A.shape());
        for (int64_t i = 0; i < A.size(); ++i) ga[i] = audit::div(d[i], A[i]);
        accum(n.a, ga);
        break;
      }
      case Op::kMatmul:
      case Op::kBatchedMatmul: {
        const Tensor& A = vals_[size_t(n.a)];
        const Tensor& B = vals_[size_t(n.b)];
        bool batched = n.op == Op::kBatchedMatmul;
        bool pa_mode = n.mm.mode != MatmulMode::Standard;
        if (!pa_mode || mode == DerivativeMode::Approximate) {
          // Gradients are matmuls of the same mode against the transposed
          // partner (the quantized mode re-rounds its operands).
          if (!batched) {
            Tensor bt = transpose2d_val(B);
            Tensor at = transpose2d_val(A);
            accum(n.a, pal::matmul(d, bt, n.mm));
            accum(n.b, pal::matmul(at, d, n.mm));
          } else {
            int64_t nb = A.dim(0), m = A.dim(1), k = A.dim(2), nn = B.dim(2);
            Tensor ga(A.shape()), gb(B.shape());
            Tensor bt({nb, nn, k}), at({nb, k, m});
            for (int64_t bb = 0; bb < nb; ++bb) {
              for (int64_t x = 0; x < k; ++x)
                for (int64_t y = 0; y < nn; ++y)
                  bt[(bb * nn + y) * k + x] = B[(bb * k + x) * nn + y];
              for (int64_t x = 0; x < m; ++x)
                for (int64_t y = 0; y < k; ++y)
                  at[(bb * k + y) * m + x] = A[(bb * m + x) * k + y];
            }
            accum(n.a, pal::batched_matmul(d, bt, n.mm));
            accum(n.b, pal::batched_matmul(at, d, n.mm));
          }
        } else {
          bool quantized = n.mm.mode == MatmulMode::PAMQuantized;
          Tensor qa = quantized ? map_unary(A, UnaryOp::Quantize, n.mm.fmt) : A;
          Tensor qb = quantized ? map_unary(B, UnaryOp::Quantize, n.mm.fmt) : B;
          Tensor ga(A.shape()), gb(B.shape());
          int64_t nb = batched ? A.dim(0) : 1;
          int64_t m = A.dim(batched ? 1 : 0), k = A.dim(batched ? 2 : 1);
          int64_t nn = B.dim(batched ? 2 : 1);
          for (int64_t bb = 0; bb < nb; ++bb)
            matmul_exact_backward(qa.data() + bb * m * k, qb.data() + bb * k * nn,
                                  d.data() + bb * m * nn, ga.data() + bb * m * k,
                                  gb.data() + bb * k * nn, m, k, nn);
          accum(n.a, ga);
          accum(n.b, gb);
        }
        break;
      }
      case Op::kTranspose2D:
        accum(n.a, transpose2d_val(d));
        break;
      case Op::kBatchTranspose:
        accum(n.a, batch_transpose_val(d));
        break;
      case Op::kReshape: {
        const Tensor& A = vals_[size_t(n.a)];
        Tensor ga(A.shape(), std::vector<float>(d.data(), d.data() + d.size()));
        accum(n.a, ga);
        break;
      }
      case Op::kGatherRows: {
        const Tensor& T = vals_[size_t(n.a)];
        int64_t e = T.dim(1);
        Tensor gt(T.shape());
        for (size_t i = 0; i < n.aux.size(); ++i)
          for (int64_t j = 0; j < e; ++j)
            gt[n.aux[i] * e + j] += d[int64_t(i) * e + j];
        accum(n.a, gt);
        break;
      }
      case Op::kSplitHeads: {
        const Tensor& A = vals_[size_t(n.a)];
        int64_t heads = n.aux[0];
        int64_t bsz = A.dim(0), seq = A.dim(1), hd = A.dim(2) / heads;
        Tensor ga(A.shape());
        for (int64_t b = 0; b < bsz; ++b)
          for (int64_t s = 0; s < seq; ++s)
            for (int64_t h = 0; h < heads; ++h)
              std::memcpy(ga.data() + ((b * seq + s) * heads * hd + h * hd),
                          d.data() + (((b * heads + h) * seq + s) * hd),
                          size_t(hd) * 4);
        accum(n.a, ga);
        break;
      }
      case Op::kMergeHeads: {
        const Tensor& A = vals_[size_t(n.a)];
        int64_t heads = n.aux[0];
        int64_t bsz = d.dim(0), seq = d.dim(1), hd = A.dim(2);
        Tensor ga(A.shape());
        for (int64_t b = 0; b < bsz; ++b)
          for (int64_t s = 0; s < seq; ++s)
            for (int64_t h = 0; h < heads; ++h)
              std::memcpy(ga.data() + (((b * heads + h) * seq + s) * hd),
                          d.data() + ((b * seq + s) * heads * hd + h * hd),
                          size_t(hd) * 4);
        accum(n.a, ga);
        break;
      }
    }
  }

  // Inputs that received no gradient report zeros rather than absence.
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].op == Op::kInput && !has[i]) grads[i] = Tensor(vals_[i].shape());

  return Gradients(std::move(grads));
}

GradCheckReport grad_check(const std::function<Var(Tape&, Var)>& f, float x, float h,
                           const DerivativeModes& modes) {
  auto eval = [&](float xv, std::vector<uint64_t>* ids) {
    Tape t;
    t.collect_segments(ids != nullptr);
    Var in = t.input(Tensor::scalar(xv));
    Var out = f(t, in);
    if (t.val(out).size() != 1)
      throw std::invalid_argument("grad_check: function must be scalar");
    if (ids) *ids = t.segment_ids();
    return double(t.val(out)[0]);
  };
  std::vector<uint64_t> lo_ids, hi_ids;
  double f_lo = eval(x - h, &lo_ids);
  double f_hi = eval(x + h, &hi_ids);

  GradCheckReport r;
  r.breakpoint_flag = lo_ids != hi_ids;
  r.finite_diff = (f_hi - f_lo) / (2.0 * double(h));

  Tape t;
  Var in = t.input(Tensor::scalar(x));
  Var out = f(t, in);
  Gradients g = t.backward(out, Tensor::full(t.val(out).shape(), 1.0f), modes);
  r.analytic = double(g.wrt(in)[0]);
  r.rel_err =
      std::abs(r.finite_diff - r.analytic) / std::max(std::abs(r.analytic), 1e-12);
  return r;
}

}  // namespace pal::ad
