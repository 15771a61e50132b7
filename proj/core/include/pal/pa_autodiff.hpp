#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pal/pa_tensor.hpp"

namespace pal::ad {

// Reverse-mode differentiation over the piecewise affine primitive set.
//
// A Tape records tensor-valued nodes as the forward computation runs (values
// are evaluated eagerly). backward() replays the recorded graph in reverse,
// applying per-primitive derivative rules:
//
//             | exact                             | approximate
//   pam(A,B)  | d_A = 2^(E_B + carry) * d_Y       | d_A = pam(B, d_Y)
//   pad(A,B)  | d_A = 2^(-E_B - borrow) * d_Y     | d_A = pad(d_Y, B)
//   pad(A,B)  | d_B = -pad(pam(A, d_Y), pam(B,B))   (same in both modes)
//   paexp2(A) | d_A = 2^floor(A) * d_Y            | d_A = pam(pam(Y, ln2), d_Y)
//   palog2(A) | d_A = 2^(-E_A) * d_Y              | d_A = pad(d_Y, pam(A, ln2))
//
// d_B of pam mirrors d_A with the operand roles swapped (pam commutes). The
// power-of-two factors are exact under pam, and every arithmetic step of the
// backward pass uses only PA operations and additions, so the backward pass
// is multiplication-free in both modes. Operand signs are carried through
// the exact rules ((-1)^S_B for the pam/pad A-slots). Exact rules yield zero
// where an operand is zero (the flushed region is locally constant).
//
// Each node is tagged with the network component it belongs to; the
// derivative mode is selectable per component at backward time.

enum class Op : uint8_t {
  kInput,
  kConstant,
  kAdd,
  kSub,
  kNeg,
  kSumLast,   // [..., d] -> [..., 1]
  kSumAll,    // any -> scalar
  kRowMax,    // [..., d] -> [..., 1], saves argmax
  kRelu,
  kPam,
  kPad,
  kPaExp2,
  kPaLog2,
  kNatMul,  // instrumented native elementwise ops (baseline stack)
  kNatDiv,
  kNatSqrt,
  kNatExp,
  kNatLog,
  kMatmul,
  kBatchedMatmul,
  kTranspose2D,
  kBatchTranspose,  // [b,m,n] -> [b,n,m]
  kReshape,
  kGatherRows,  // (table[V,E], host indices) -> [n,E]
  kSplitHeads,  // [B,S,H*D] -> [B*H,S,D]
  kMergeHeads,  // [B*H,S,D] -> [B,S,H*D]
};

enum class DerivativeMode : uint8_t { Exact, Approximate };

enum class ModeClass : uint8_t { kMatmul, kSoftmax, kLayerNorm, kLoss, kOther };

struct DerivativeModes {
  DerivativeMode matmul = DerivativeMode::Approximate;
  DerivativeMode softmax = DerivativeMode::Approximate;
  DerivativeMode layernorm = DerivativeMode::Approximate;
  DerivativeMode loss = DerivativeMode::Exact;
  DerivativeMode other = DerivativeMode::Approximate;

  DerivativeMode for_class(ModeClass c) const noexcept {
    switch (c) {
      case ModeClass::kMatmul: return matmul;
      case ModeClass::kSoftmax: return softmax;
      case ModeClass::kLayerNorm: return layernorm;
      case ModeClass::kLoss: return loss;
      case ModeClass::kOther: return other;
    }
    return other;
  }
  static DerivativeModes all(DerivativeMode m) noexcept {
    return DerivativeModes{m, m, m, m, m};
  }
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const noexcept { return tape != nullptr && id >= 0; }
};

// Gradients of one backward pass, addressable by forward Var.
class Gradients {
 public:
  explicit Gradients(std::vector<Tensor> g) : grads_(std::move(g)) {}
  // Gradient w.r.t. the node; zero tensor of the node's shape if no path.
  const Tensor& wrt(Var v) const;

 private:
  friend class Tape;
  std::vector<Tensor> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // --- recording -------------------------------------------------------
  Var input(Tensor v);
  Var constant(Tensor v);
  Var constant_scalar(float v) { return constant(Tensor::scalar(v)); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var neg(Var a);
  Var sum_last(Var a);
  Var sum_all(Var a);
  Var row_max(Var a);
  Var relu(Var a);

  Var pam(Var a, Var b);
  Var pad(Var a, Var b);
  Var paexp2(Var a);
  Var palog2(Var a);
  // Compositions recorded through their defining graphs:
  Var paexp(Var a);
  Var palog(Var a);
  Var pasqrt(Var a);

  Var nat_mul(Var a, Var b);
  Var nat_div(Var a, Var b);
  Var nat_sqrt(Var a);
  Var nat_exp(Var a);
  Var nat_log(Var a);

  Var matmul(Var a, Var b, const MatmulOptions& opt);
  Var batched_matmul(Var a, Var b, const MatmulOptions& opt);
  Var transpose2d(Var a);
  Var batch_transpose(Var a);
  Var reshape(Var a, std::vector<int64_t> shape);
  Var gather_rows(Var table, std::vector<int64_t> indices);
  Var split_heads(Var a, int64_t heads);
  Var merge_heads(Var a, int64_t heads);

  const Tensor& val(Var v) const;
  int size() const noexcept { return int(nodes_.size()); }

  // Component tag applied to nodes recorded while the scope is alive.
  ModeClass current_class() const noexcept { return class_; }
  void set_class(ModeClass c) noexcept { class_ = c; }
  class ClassScope {
   public:
    ClassScope(Tape& t, ModeClass c) noexcept : t_(t), prev_(t.current_class()) {
      t_.set_class(c);
    }
    ~ClassScope() { t_.set_class(prev_); }

   private:
    Tape& t_;
    ModeClass prev_;
  };

  // --- backward --------------------------------------------------------
  Gradients backward(Var out, const Tensor& seed, const DerivativeModes& modes);

  // --- segment identifiers ----------------------------------------------
  // When enabled before recording, every node captures a fingerprint of its
  // discrete segment indicators (carry/borrow bits, operand exponents,
  // floors, relu signs, argmax indices, clamp/flush flags). Two forward
  // passes of the same program lie on the same affine segment iff their
  // fingerprint vectors are equal.
  void collect_segments(bool on) noexcept { collect_segments_ = on; }
  const std::vector<uint64_t>& segment_ids() const noexcept { return segment_ids_; }

 private:
  struct Node {
    Op op;
    ModeClass mclass;
    int a = -1, b = -1;
    MatmulOptions mm{};
    std::vector<int64_t> aux;  // argmax / gather indices / head dims
  };

  Var emit(Op op, int a, int b, Tensor value);
  void fingerprint(int id);
  void fingerprint_matmul(int id);
  void check_same_tape(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> vals_;
  std::vector<uint64_t> segment_ids_;
  ModeClass class_ = ModeClass::kOther;
  bool collect_segments_ = false;
};

// Sums `src` into `dst` (same shape), binary32 adds in index order.
void add_into(Tensor& dst, const Tensor& src);

// Reduces `g` to `shape` by summing over broadcast dimensions.
Tensor reduce_to_shape(const Tensor& g, const std::vector<int64_t>& shape);

// Central finite-difference check of a scalar piecewise affine function
// against the Exact-mode analytic gradient. The comparison is skipped
// (breakpoint_flag) when any node's segment indicators differ between the
// evaluations at x-h and x+h.
struct GradCheckReport {
  double analytic = 0.0;
  double finite_diff = 0.0;
  bool breakpoint_flag = false;
  double rel_err = 0.0;
};

GradCheckReport grad_check(const std::function<Var(Tape&, Var)>& f, float x, float h,
                           const DerivativeModes& modes =
                               DerivativeModes::all(DerivativeMode::Exact));

}  // namespace pal::ad
