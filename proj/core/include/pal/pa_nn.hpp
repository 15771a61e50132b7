#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pal/pa_autodiff.hpp"

namespace pal::nn {

// Per-layer switches for the piecewise affine network stack. Each component
// can run either its PA composition or the standard (instrumented native)
// composition; the backward derivative mode is selectable per component.
struct LayerConfig {
  bool pa_matmul = true;
  bool pa_softmax = true;
  bool pa_layernorm = true;
  bool pa_loss = true;
  float ln_eps = 1e-5f;
  float label_smoothing = 0.1f;
  float dropout_p = 0.0f;
  int matmul_mantissa_bits = 23;  // < 23 simulates narrow PAM operands
  ad::DerivativeModes bwd{};

  MatmulOptions matmul_options() const {
    if (!pa_matmul) return MatmulOptions::standard();
    if (matmul_mantissa_bits >= 23) return MatmulOptions::pam();
    PaFormat f;
    f.mantissa_bits = matmul_mantissa_bits;
    return MatmulOptions::pam_quantized(f);
  }
};

struct TransformerSpec {
  int layers = 2;
  int heads = 2;
  int embed_dim = 32;
  int ff_dim = 64;
  int vocab = 16;
  int max_seq = 16;
  bool valid() const noexcept {
    return layers >= 0 && heads > 0 && embed_dim > 0 && ff_dim > 0 && vocab > 0 &&
           max_seq > 0 && embed_dim % heads == 0;
  }
};

struct MlpSpec {
  int in_dim = 2;
  std::vector<int> hidden = {32, 32};
  int classes = 2;
};

// Named parameter table. Order is the registration order and is stable, so
// optimizer state and gradients align by index.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  size_t count() const noexcept { return entries_.size(); }
  std::pair<std::string, Tensor>& entry(size_t i) { return entries_[i]; }
  const std::pair<std::string, Tensor>& entry(size_t i) const { return entries_[i]; }

  // Checkpoint format: u32 entry count, then per entry a u32 byte length,
  // the UTF-8 name, and the tensor wire format.
  void save(std::ostream& os) const;
  static ParamStore load(std::istream& is);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Uniform in [-s, s), mapped from the top 24 bits of the engine draw so the
// stream is implementation-independent.
float uniform_sym(std::mt19937& rng, float s);

// --- layers (tape-recorded) -------------------------------------------------

// x[n,in] * w[out,in]^T + bias.
ad::Var linear(ad::Tape& t, ad::Var x, ad::Var w, ad::Var bias, const LayerConfig& cfg);

// Normalization over the last axis; every multiply/divide/sqrt is PA when
// cfg.pa_layernorm is set:
//   mean = pad(sum(x), d); var = pad(sum(pam(x-mean, x-mean)), d)
//   out  = pam(gain, pad(x-mean, pasqrt(var + eps))) + bias
ad::Var layer_norm(ad::Tape& t, ad::Var x, ad::Var gain, ad::Var bias,
                   const LayerConfig& cfg);

// Row softmax, shifted by the row max (comparison and subtraction only):
//   e_i = paexp(x_i - max), out_i = pad(e_i, sum(e)).
// `pa` selects the PA or native composition; `cls` tags the nodes
// (attention softmax vs loss softmax carry different classes).
ad::Var softmax_last(ad::Tape& t, ad::Var x, bool pa, ad::ModeClass cls);

// Scaled dot-product attention over split heads; q,k,v are [B*H, S, D].
ad::Var attention(ad::Tape& t, ad::Var q, ad::Var k, ad::Var v, float inv_sqrt_d,
                  const LayerConfig& cfg);

// Softmax cross-entropy with label smoothing; logits [n, C], one target class
// per row. The smoothed target weighting uses pam, the batch reduction is
// addition plus pad by the row count.
ad::Var cross_entropy_ls(ad::Tape& t, ad::Var logits,
                         const std::vector<int64_t>& targets, const LayerConfig& cfg);

// Zeroes each element with probability p and scales survivors by the nearest
// binary32 to 1/(1-p) (with pam in PA mode). The drop decision compares the
// top 24 bits of the engine draw against thr24 = round(p * 2^24); both thr24
// and scale are precomputed at setup time. Identity when thr24 == 0 or not
// training.
ad::Var dropout(ad::Tape& t, ad::Var x, uint32_t thr24, float scale,
                std::mt19937& rng, bool training, bool pa);

// --- models ----------------------------------------------------------------

// Vars of the parameters bound into one forward tape, aligned with the
// ParamStore registration order.
struct BoundParams {
  std::vector<ad::Var> vars;
};

struct ForwardOut {
  ad::Var logits;  // [rows, classes]
  ad::Var loss;    // scalar; valid only when targets were supplied
  BoundParams bound;
};

// Pre-norm transformer encoder over token sequences with a per-position
// classifier head. Each block applies a learned scalar gain to both residual
// branches (via pam in PA mode).
class TransformerModel {
 public:
  TransformerModel(const TransformerSpec& spec, const LayerConfig& cfg, uint64_t seed);

  ParamStore& params() noexcept { return params_; }
  const TransformerSpec& spec() const noexcept { return spec_; }
  LayerConfig& config() noexcept { return cfg_; }

  // tokens is [batch*seq] row-major; targets empty means forward only.
  ForwardOut forward(ad::Tape& t, const std::vector<int64_t>& tokens, int64_t batch,
                     int64_t seq, const std::vector<int64_t>& targets,
                     bool training = false, std::mt19937* dropout_rng = nullptr);

  // Continuous entry point: x [B,S,E] replaces the embedding lookup, so the
  // map from x (and from any weight) to the loss can be probed directly.
  ForwardOut forward_embedded(ad::Tape& t, ad::Var x,
                              const std::vector<int64_t>& targets);

 private:
  ad::Var encode(ad::Tape& t, ad::Var x, int64_t batch, int64_t seq,
                 BoundParams& bound, bool training, std::mt19937* rng);

  TransformerSpec spec_;
  LayerConfig cfg_;
  ParamStore params_;
  float inv_sqrt_hd_ = 0.0f;
  float dropout_scale_ = 1.0f;
  uint32_t dropout_thr24_ = 0;
};

// Plain MLP classifier with ReLU activations.
class MlpModel {
 public:
  MlpModel(const MlpSpec& spec, const LayerConfig& cfg, uint64_t seed);

  ParamStore& params() noexcept { return params_; }
  const MlpSpec& spec() const noexcept { return spec_; }
  LayerConfig& config() noexcept { return cfg_; }

  ForwardOut forward(ad::Tape& t, const Tensor& features,
                     const std::vector<int64_t>& targets);
  ForwardOut forward_var(ad::Tape& t, ad::Var x, const std::vector<int64_t>& targets);

 private:
  MlpSpec spec_;
  LayerConfig cfg_;
  ParamStore params_;
};

}  // namespace pal::nn
