#include "pal/pa_nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "pal/ops_audit.hpp"

namespace pal::nn {

using ad::ModeClass;
using ad::Tape;
using ad::Var;

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  for (auto& e : entries_)
    if (e.first == name) throw std::invalid_argument("duplicate parameter " + name);
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

Tensor& ParamStore::at(const std::string& name) {
  for (auto& e : entries_)
    if (e.first == name) return e.second;
  throw std::out_of_range("no parameter " + name);
}

const Tensor& ParamStore::at(const std::string& name) const {
  return const_cast<ParamStore*>(this)->at(name);
}

namespace {
void write_u32(std::ostream& os, uint32_t v) {
  char b[4] = {char(v & 0xFF), char((v >> 8) & 0xFF), char((v >> 16) & 0xFF),
               char((v >> 24) & 0xFF)};
  os.write(b, 4);
}
uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint truncated");
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
         (uint32_t(b[3]) << 24);
}
}  // namespace

void ParamStore::save(std::ostream& os) const {
  write_u32(os, uint32_t(entries_.size()));
  for (const auto& [name, tensor] : entries_) {
    write_u32(os, uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    tensor.save(os);
  }
}

ParamStore ParamStore::load(std::istream& is) {
  ParamStore store;
  uint32_t n = read_u32(is);
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t len = read_u32(is);
    std::string name(len, '\0');
    is.read(name.data(), std::streamsize(len));
    if (!is) throw std::runtime_error("checkpoint truncated");
    store.add(name, Tensor::load(is));
  }
  return store;
}

float uniform_sym(std::mt19937& rng, float s) {
  float u = audit::mul(float(rng() >> 8), 0x1.0p-24f);  // [0, 1)
  return audit::mul(audit::mul(2.0f, u) - 1.0f, s);
}

Var linear(Tape& t, Var x, Var w, Var bias, const LayerConfig& cfg) {
  Tape::ClassScope scope(t, ModeClass::kMatmul);
  Var wt = t.transpose2d(w);
  return t.add(t.matmul(x, wt, cfg.matmul_options()), bias);
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, const LayerConfig& cfg) {
  Tape::ClassScope scope(t, ModeClass::kLayerNorm);
  int64_t d = t.val(x).shape().back();
  Var dim = t.constant_scalar(float(d));
  Var eps = t.constant_scalar(cfg.ln_eps);
  if (cfg.pa_layernorm) {
    Var mean = t.pad(t.sum_last(x), dim);
    Var xm = t.sub(x, mean);
    Var var = t.pad(t.sum_last(t.pam(xm, xm)), dim);
    Var dev = t.pasqrt(t.add(var, eps));
    return t.add(t.pam(gain, t.pad(xm, dev)), bias);
  }
  Var mean = t.nat_div(t.sum_last(x), dim);
  Var xm = t.sub(x, mean);
  Var var = t.nat_div(t.sum_last(t.nat_mul(xm, xm)), dim);
  Var dev = t.nat_sqrt(t.add(var, eps));
  return t.add(t.nat_mul(gain, t.nat_div(xm, dev)), bias);
}

Var softmax_last(Tape& t, Var x, bool pa, ModeClass cls) {
  Tape::ClassScope scope(t, cls);
  Var shifted = t.sub(x, t.row_max(x));
  if (pa) {
    Var e = t.paexp(shifted);
    return t.pad(e, t.sum_last(e));
  }
  Var e = t.nat_exp(shifted);
  return t.nat_div(e, t.sum_last(e));
}

Var attention(Tape& t, Var q, Var k, Var v, float inv_sqrt_d, const LayerConfig& cfg) {
  Var scores;
  {
    Tape::ClassScope scope(t, ModeClass::kMatmul);
    scores = t.batched_matmul(q, t.batch_transpose(k), cfg.matmul_options());
    Var scale = t.constant_scalar(inv_sqrt_d);
    scores = cfg.pa_matmul ? t.pam(scores, scale) : t.nat_mul(scores, scale);
  }
  Var weights = softmax_last(t, scores, cfg.pa_softmax, ModeClass::kSoftmax);
  Tape::ClassScope scope(t, ModeClass::kMatmul);
  return t.batched_matmul(weights, v, cfg.matmul_options());
}

Var cross_entropy_ls(Tape& t, Var logits, const std::vector<int64_t>& targets,
                     const LayerConfig& cfg) {
  const Tensor& lv = t.val(logits);
  if (lv.rank() != 2 || int64_t(targets.size()) != lv.dim(0))
    throw std::invalid_argument("cross_entropy_ls: logits/targets mismatch");
  int64_t n = lv.dim(0), classes = lv.dim(1);
  for (int64_t c : targets)
    if (c < 0 || c >= classes)
      throw std::invalid_argument("cross_entropy_ls: target class out of range");

  Tensor q({n, classes});
  {
    audit::PhaseScope setup(audit::Phase::kSetup);  // target table construction
    float off = cfg.label_smoothing / float(classes);
    float on = (1.0f - cfg.label_smoothing) + off;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < classes; ++c)
        q[i * classes + c] = (c == targets[size_t(i)]) ? on : off;
  }

  Tape::ClassScope scope(t, ModeClass::kLoss);
  Var qc = t.constant(std::move(q));
  Var count = t.constant_scalar(float(n));
  if (cfg.pa_loss) {
    Var probs = softmax_last(t, logits, true, ModeClass::kLoss);
    Var terms = t.pam(qc, t.palog(probs));
    return t.pad(t.neg(t.sum_all(terms)), count);
  }
  Var shifted = t.sub(logits, t.row_max(logits));
  Var lse = t.nat_log(t.sum_last(t.nat_exp(shifted)));
  Var terms = t.nat_mul(qc, t.sub(shifted, lse));
  return t.nat_div(t.neg(t.sum_all(terms)), count);
}

Var dropout(Tape& t, Var x, uint32_t thr24, float scale, std::mt19937& rng,
            bool training, bool pa) {
  if (!training || thr24 == 0) return x;
  // Integer threshold comparison keeps mask generation free of float ops.
  Tensor mask(t.val(x).shape());
  for (int64_t i = 0; i < mask.size(); ++i)
    mask[i] = ((rng() >> 8) < thr24) ? 0.0f : scale;
  Var m = t.constant(std::move(mask));
  return pa ? t.pam(x, m) : t.nat_mul(x, m);
}

// --- TransformerModel --------------------------------------------------------

TransformerModel::TransformerModel(const TransformerSpec& spec, const LayerConfig& cfg,
                                   uint64_t seed)
    : spec_(spec), cfg_(cfg) {
  if (!spec.valid()) throw std::invalid_argument("invalid transformer spec");
  audit::PhaseScope phase(audit::Phase::kSetup);
  std::mt19937 rng(uint32_t(seed ^ 0x9E3779B9u));

  auto init_matrix = [&](const std::string& name, int64_t rows, int64_t cols,
                         float s) {
    Tensor w({rows, cols});
    for (int64_t i = 0; i < w.size(); ++i) w[i] = uniform_sym(rng, s);
    params_.add(name, std::move(w));
  };
  auto init_linear = [&](const std::string& name, int64_t out, int64_t in) {
    float s = audit::div(1.0f, audit::sqrt(float(in)));
    init_matrix(name + ".w", out, in, s);
    params_.add(name + ".b", Tensor({out}));
  };

  int64_t e = spec_.embed_dim;
  init_matrix("tok_emb", spec_.vocab, e, 0.1f);
  init_matrix("pos_emb", spec_.max_seq, e, 0.1f);
  for (int l = 0; l < spec_.layers; ++l) {
    std::string p = "block" + std::to_string(l) + ".";
    params_.add(p + "ln1.g", Tensor::full({e}, 1.0f));
    params_.add(p + "ln1.b", Tensor({e}));
    init_linear(p + "q", e, e);
    init_linear(p + "k", e, e);
    init_linear(p + "v", e, e);
    init_linear(p + "o", e, e);
    params_.add(p + "gain_attn", Tensor::scalar(1.0f));
    params_.add(p + "ln2.g", Tensor::full({e}, 1.0f));
    params_.add(p + "ln2.b", Tensor({e}));
    init_linear(p + "ff1", spec_.ff_dim, e);
    init_linear(p + "ff2", e, spec_.ff_dim);
    params_.add(p + "gain_ff", Tensor::scalar(1.0f));
  }
  if (spec_.layers > 0) {
    params_.add("ln_f.g", Tensor::full({e}, 1.0f));
    params_.add("ln_f.b", Tensor({e}));
  }
  init_linear("head", spec_.vocab, e);

  inv_sqrt_hd_ = audit::div(1.0f, audit::sqrt(float(e / spec_.heads)));
  if (cfg_.dropout_p > 0.0f) {
    dropout_scale_ = audit::div(1.0f, 1.0f - cfg_.dropout_p);
    dropout_thr24_ = uint32_t(audit::mul(cfg_.dropout_p, 16777216.0f));
  }
}

Var TransformerModel::encode(Tape& t, Var x, int64_t batch, int64_t seq,
                             BoundParams& bound, bool training, std::mt19937* rng) {
  auto var_of = [&](const std::string& name) -> Var {
    for (size_t i = 0; i < params_.count(); ++i)
      if (params_.entry(i).first == name) return bound.vars[i];
    throw std::out_of_range("unbound parameter " + name);
  };
  std::mt19937 fallback_rng(0);
  std::mt19937& drop_rng = rng ? *rng : fallback_rng;
  int64_t e = spec_.embed_dim;

  for (int l = 0; l < spec_.layers; ++l) {
    std::string p = "block" + std::to_string(l) + ".";
    // attention branch
    Var n1 = layer_norm(t, x, var_of(p + "ln1.g"), var_of(p + "ln1.b"), cfg_);
    Var flat = t.reshape(n1, {batch * seq, e});
    Var q = linear(t, flat, var_of(p + "q.w"), var_of(p + "q.b"), cfg_);
    Var k = linear(t, flat, var_of(p + "k.w"), var_of(p + "k.b"), cfg_);
    Var v = linear(t, flat, var_of(p + "v.w"), var_of(p + "v.b"), cfg_);
    Var qh = t.split_heads(t.reshape(q, {batch, seq, e}), spec_.heads);
    Var kh = t.split_heads(t.reshape(k, {batch, seq, e}), spec_.heads);
    Var vh = t.split_heads(t.reshape(v, {batch, seq, e}), spec_.heads);
    Var ctx = attention(t, qh, kh, vh, inv_sqrt_hd_, cfg_);
    Var merged = t.merge_heads(ctx, spec_.heads);
    Var proj = linear(t, t.reshape(merged, {batch * seq, e}), var_of(p + "o.w"),
                      var_of(p + "o.b"), cfg_);
    Var branch = t.reshape(proj, {batch, seq, e});
    branch = dropout(t, branch, dropout_thr24_, dropout_scale_, drop_rng, training,
                     cfg_.pa_softmax);
    Var gain = var_of(p + "gain_attn");
    branch = cfg_.pa_softmax ? t.pam(gain, branch) : t.nat_mul(gain, branch);
    x = t.add(x, branch);

    // feed-forward branch
    Var n2 = layer_norm(t, x, var_of(p + "ln2.g"), var_of(p + "ln2.b"), cfg_);
    Var f = t.reshape(n2, {batch * seq, e});
    Var h = t.relu(linear(t, f, var_of(p + "ff1.w"), var_of(p + "ff1.b"), cfg_));
    Var o = linear(t, h, var_of(p + "ff2.w"), var_of(p + "ff2.b"), cfg_);
    Var fb = t.reshape(o, {batch, seq, e});
    fb = dropout(t, fb, dropout_thr24_, dropout_scale_, drop_rng, training,
                 cfg_.pa_softmax);
    Var gain2 = var_of(p + "gain_ff");
    fb = cfg_.pa_softmax ? t.pam(gain2, fb) : t.nat_mul(gain2, fb);
    x = t.add(x, fb);
  }
  if (spec_.layers > 0)
    x = layer_norm(t, x, var_of("ln_f.g"), var_of("ln_f.b"), cfg_);
  return x;
}

ForwardOut TransformerModel::forward(Tape& t, const std::vector<int64_t>& tokens,
                                     int64_t batch, int64_t seq,
                                     const std::vector<int64_t>& targets,
                                     bool training, std::mt19937* dropout_rng) {
  if (int64_t(tokens.size()) != batch * seq)
    throw std::invalid_argument("forward: token count != batch*seq");
  if (seq > spec_.max_seq) throw std::invalid_argument("forward: seq > max_seq");

  ForwardOut out;
  out.bound.vars.reserve(params_.count());
  for (size_t i = 0; i < params_.count(); ++i)
    out.bound.vars.push_back(t.input(params_.entry(i).second));

  auto var_of = [&](const std::string& name) -> Var {
    for (size_t i = 0; i < params_.count(); ++i)
      if (params_.entry(i).first == name) return out.bound.vars[i];
    throw std::out_of_range("unbound parameter " + name);
  };

  int64_t e = spec_.embed_dim;
  Var tok = t.gather_rows(var_of("tok_emb"), tokens);
  std::vector<int64_t> pos_idx(size_t(batch * seq));
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t s = 0; s < seq; ++s) pos_idx[size_t(b * seq + s)] = s;
  Var pos = t.gather_rows(var_of("pos_emb"), pos_idx);
  Var x = t.reshape(t.add(tok, pos), {batch, seq, e});

  x = encode(t, x, batch, seq, out.bound, training, dropout_rng);
  Var flat = t.reshape(x, {batch * seq, e});
  out.logits = linear(t, flat, var_of("head.w"), var_of("head.b"), cfg_);
  if (!targets.empty()) out.loss = cross_entropy_ls(t, out.logits, targets, cfg_);
  return out;
}

ForwardOut TransformerModel::forward_embedded(Tape& t, Var x,
                                              const std::vector<int64_t>& targets) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 3 || xv.dim(2) != spec_.embed_dim)
    throw std::invalid_argument("forward_embedded: expected [B,S,E]");
  int64_t batch = xv.dim(0), seq = xv.dim(1), e = xv.dim(2);

  ForwardOut out;
  out.bound.vars.reserve(params_.count());
  for (size_t i = 0; i < params_.count(); ++i)
    out.bound.vars.push_back(t.input(params_.entry(i).second));
  auto var_of = [&](const std::string& name) -> Var {
    for (size_t i = 0; i < params_.count(); ++i)
      if (params_.entry(i).first == name) return out.bound.vars[i];
    throw std::out_of_range("unbound parameter " + name);
  };

  Var enc = encode(t, x, batch, seq, out.bound, false, nullptr);
  out.logits = linear(t, t.reshape(enc, {batch * seq, e}), var_of("head.w"),
                      var_of("head.b"), cfg_);
  if (!targets.empty()) out.loss = cross_entropy_ls(t, out.logits, targets, cfg_);
  return out;
}

// --- MlpModel ----------------------------------------------------------------

MlpModel::MlpModel(const MlpSpec& spec, const LayerConfig& cfg, uint64_t seed)
    : spec_(spec), cfg_(cfg) {
  if (spec.in_dim <= 0 || spec.classes <= 0)
    throw std::invalid_argument("invalid mlp spec");
  audit::PhaseScope phase(audit::Phase::kSetup);
  std::mt19937 rng(uint32_t(seed ^ 0x6A09E667u));
  int64_t in = spec_.in_dim;
  int layer = 0;
  auto init_linear = [&](int64_t out_dim, int64_t in_dim) {
    std::string name = "fc" + std::to_string(layer++);
    float s = audit::div(1.0f, audit::sqrt(float(in_dim)));
    Tensor w({out_dim, in_dim});
    for (int64_t i = 0; i < w.size(); ++i) w[i] = uniform_sym(rng, s);
    params_.add(name + ".w", std::move(w));
    params_.add(name + ".b", Tensor({out_dim}));
  };
  for (int h : spec_.hidden) {
    init_linear(h, in);
    in = h;
  }
  init_linear(spec_.classes, in);
}

ForwardOut MlpModel::forward(Tape& t, const Tensor& features,
                             const std::vector<int64_t>& targets) {
  return forward_var(t, t.constant(features), targets);
}

ForwardOut MlpModel::forward_var(Tape& t, Var x, const std::vector<int64_t>& targets) {
  ForwardOut out;
  out.bound.vars.reserve(params_.count());
  for (size_t i = 0; i < params_.count(); ++i)
    out.bound.vars.push_back(t.input(params_.entry(i).second));

  size_t n_layers = spec_.hidden.size() + 1;
  for (size_t l = 0; l < n_layers; ++l) {
    Var w = out.bound.vars[2 * l];
    Var b = out.bound.vars[2 * l + 1];
    x = linear(t, x, w, b, cfg_);
    if (l + 1 < n_layers) x = t.relu(x);
  }
  out.logits = x;
  if (!targets.empty()) out.loss = cross_entropy_ls(t, out.logits, targets, cfg_);
  return out;
}

}  // namespace pal::nn
