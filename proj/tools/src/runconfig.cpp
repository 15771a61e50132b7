#include "palh/runconfig.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace palh {

namespace {

enum class Kind { kBool, kInt, kI64, kU64, kFloat, kString };

struct Binding {
  const char* name;
  Kind kind;
  void* ptr;
};

std::vector<Binding> bindings(RunConfig& c) {
  return {
      {"seed", Kind::kU64, &c.seed},
      {"out_dir", Kind::kString, &c.out_dir},
      {"model", Kind::kString, &c.model},
      {"layers", Kind::kInt, &c.layers},
      {"heads", Kind::kInt, &c.heads},
      {"embed_dim", Kind::kInt, &c.embed_dim},
      {"ff_dim", Kind::kInt, &c.ff_dim},
      {"vocab", Kind::kInt, &c.vocab},
      {"seq_len", Kind::kInt, &c.seq_len},
      {"mlp_hidden", Kind::kString, &c.mlp_hidden},
      {"mlp_classes", Kind::kInt, &c.mlp_classes},
      {"pa_matmul", Kind::kBool, &c.pa_matmul},
      {"pa_softmax", Kind::kBool, &c.pa_softmax},
      {"pa_layernorm", Kind::kBool, &c.pa_layernorm},
      {"pa_loss", Kind::kBool, &c.pa_loss},
      {"pa_optimizer", Kind::kBool, &c.pa_optimizer},
      {"bwd_matmul", Kind::kString, &c.bwd_matmul},
      {"bwd_softmax", Kind::kString, &c.bwd_softmax},
      {"bwd_layernorm", Kind::kString, &c.bwd_layernorm},
      {"bwd_loss", Kind::kString, &c.bwd_loss},
      {"bwd_other", Kind::kString, &c.bwd_other},
      {"mantissa_bits", Kind::kInt, &c.mantissa_bits},
      {"epochs", Kind::kInt, &c.epochs},
      {"batch_size", Kind::kInt, &c.batch_size},
      {"train_samples", Kind::kInt, &c.train_samples},
      {"test_samples", Kind::kInt, &c.test_samples},
      {"lr", Kind::kFloat, &c.lr},
      {"beta1", Kind::kFloat, &c.beta1},
      {"beta2", Kind::kFloat, &c.beta2},
      {"adam_eps", Kind::kFloat, &c.adam_eps},
      {"weight_decay", Kind::kFloat, &c.weight_decay},
      {"label_smoothing", Kind::kFloat, &c.label_smoothing},
      {"dropout", Kind::kFloat, &c.dropout},
      {"ln_eps", Kind::kFloat, &c.ln_eps},
      {"lr_schedule", Kind::kString, &c.lr_schedule},
      {"warmup_steps", Kind::kInt, &c.warmup_steps},
      {"spiral_noise", Kind::kFloat, &c.spiral_noise},
      {"resolution", Kind::kInt, &c.resolution},
      {"samples", Kind::kInt, &c.samples},
      {"grid_min", Kind::kFloat, &c.grid_min},
      {"grid_max", Kind::kFloat, &c.grid_max},
      {"deriv_const", Kind::kFloat, &c.deriv_const},
      {"sweep_bits", Kind::kString, &c.sweep_bits},
      {"verify_exhaustive_bf16", Kind::kBool, &c.verify_exhaustive_bf16},
      {"verify_random_pairs", Kind::kI64, &c.verify_random_pairs},
      {"verify_inverse_cases", Kind::kI64, &c.verify_inverse_cases},
      {"verify_roundtrip_cases", Kind::kI64, &c.verify_roundtrip_cases},
      {"verify_grad_points", Kind::kInt, &c.verify_grad_points},
      {"cost_int32_add_energy", Kind::kFloat, &c.cost.int32_add_energy},
      {"cost_int32_add_area", Kind::kFloat, &c.cost.int32_add_area},
      {"cost_int32_mul_energy", Kind::kFloat, &c.cost.int32_mul_energy},
      {"cost_int32_mul_area", Kind::kFloat, &c.cost.int32_mul_area},
      {"cost_int8_add_energy", Kind::kFloat, &c.cost.int8_add_energy},
      {"cost_int8_add_area", Kind::kFloat, &c.cost.int8_add_area},
      {"cost_int8_mul_energy", Kind::kFloat, &c.cost.int8_mul_energy},
      {"cost_int8_mul_area", Kind::kFloat, &c.cost.int8_mul_area},
      {"cost_fp32_add_energy", Kind::kFloat, &c.cost.fp32_add_energy},
      {"cost_fp32_add_area", Kind::kFloat, &c.cost.fp32_add_area},
      {"cost_fp32_mul_energy", Kind::kFloat, &c.cost.fp32_mul_energy},
      {"cost_fp32_mul_area", Kind::kFloat, &c.cost.fp32_mul_area},
      {"cost_fp16_add_energy", Kind::kFloat, &c.cost.fp16_add_energy},
      {"cost_fp16_add_area", Kind::kFloat, &c.cost.fp16_add_area},
      {"cost_fp16_mul_energy", Kind::kFloat, &c.cost.fp16_mul_energy},
      {"cost_fp16_mul_area", Kind::kFloat, &c.cost.fp16_mul_area},
  };
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("not a boolean: '" + v + "'");
}

template <typename T>
T parse_number(const std::string& v) {
  T out{};
  std::string t = trim(v);
  auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
    throw ConfigError("not a number: '" + v + "'");
  return out;
}

float parse_float(const std::string& v) {
  std::string t = trim(v);
  size_t pos = 0;
  float out;
  try {
    out = std::stof(t, &pos);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + v + "'");
  }
  if (pos != t.size()) throw ConfigError("not a number: '" + v + "'");
  return out;
}

std::string format_value(const Binding& b) {
  char buf[64];
  switch (b.kind) {
    case Kind::kBool:
      return *static_cast<bool*>(b.ptr) ? "true" : "false";
    case Kind::kInt:
      std::snprintf(buf, sizeof buf, "%d", *static_cast<int*>(b.ptr));
      return buf;
    case Kind::kI64:
      std::snprintf(buf, sizeof buf, "%lld",
                    (long long)*static_cast<int64_t*>(b.ptr));
      return buf;
    case Kind::kU64:
      std::snprintf(buf, sizeof buf, "%llu",
                    (unsigned long long)*static_cast<uint64_t*>(b.ptr));
      return buf;
    case Kind::kFloat:
      std::snprintf(buf, sizeof buf, "%.9g", double(*static_cast<float*>(b.ptr)));
      return buf;
    case Kind::kString:
      return *static_cast<std::string*>(b.ptr);
  }
  return "";
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::string item;
  std::istringstream iss(s);
  while (std::getline(iss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<int>(item));
  }
  return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const Binding& b : bindings(*this)) {
    if (key != b.name) continue;
    switch (b.kind) {
      case Kind::kBool: *static_cast<bool*>(b.ptr) = parse_bool(trim(value)); return;
      case Kind::kInt: *static_cast<int*>(b.ptr) = parse_number<int>(value); return;
      case Kind::kI64: *static_cast<int64_t*>(b.ptr) = parse_number<int64_t>(value); return;
      case Kind::kU64: *static_cast<uint64_t*>(b.ptr) = parse_number<uint64_t>(value); return;
      case Kind::kFloat: *static_cast<float*>(b.ptr) = parse_float(value); return;
      case Kind::kString: *static_cast<std::string*>(b.ptr) = trim(value); return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::save(std::ostream& os) const {
  auto& self = const_cast<RunConfig&>(*this);
  for (const Binding& b : bindings(self)) os << b.name << " = " << format_value(b) << "\n";
}

RunConfig RunConfig::load(std::istream& is) {
  RunConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  return load(f);
}

std::vector<int> RunConfig::mlp_hidden_dims() const { return parse_int_list(mlp_hidden); }
std::vector<int> RunConfig::sweep_bits_list() const { return parse_int_list(sweep_bits); }

pal::ad::DerivativeMode parse_mode(const std::string& s) {
  if (s == "exact") return pal::ad::DerivativeMode::Exact;
  if (s == "approx" || s == "approximate") return pal::ad::DerivativeMode::Approximate;
  throw ConfigError("derivative mode must be exact|approx, got '" + s + "'");
}

pal::nn::LayerConfig RunConfig::layer_config() const {
  pal::nn::LayerConfig lc;
  lc.pa_matmul = pa_matmul;
  lc.pa_softmax = pa_softmax;
  lc.pa_layernorm = pa_layernorm;
  lc.pa_loss = pa_loss;
  lc.ln_eps = ln_eps;
  lc.label_smoothing = label_smoothing;
  lc.dropout_p = dropout;
  lc.matmul_mantissa_bits = mantissa_bits;
  lc.bwd.matmul = parse_mode(bwd_matmul);
  lc.bwd.softmax = parse_mode(bwd_softmax);
  lc.bwd.layernorm = parse_mode(bwd_layernorm);
  lc.bwd.loss = parse_mode(bwd_loss);
  lc.bwd.other = parse_mode(bwd_other);
  return lc;
}

pal::nn::TransformerSpec RunConfig::transformer_spec() const {
  pal::nn::TransformerSpec s;
  s.layers = layers;
  s.heads = heads;
  s.embed_dim = embed_dim;
  s.ff_dim = ff_dim;
  s.vocab = vocab;
  s.max_seq = seq_len;
  return s;
}

pal::nn::MlpSpec RunConfig::mlp_spec() const {
  pal::nn::MlpSpec s;
  s.in_dim = 2;
  s.hidden = mlp_hidden_dims();
  s.classes = mlp_classes;
  return s;
}

pal::optim::AdamConfig RunConfig::adam_config() const {
  pal::optim::AdamConfig a;
  a.lr = lr;
  a.beta1 = beta1;
  a.beta2 = beta2;
  a.eps = adam_eps;
  a.weight_decay = weight_decay;
  return a;
}

RunConfig RunConfig::resolved() const {
  RunConfig c = *this;
  bool tf = c.model == "transformer";
  if (c.epochs == 0) c.epochs = tf ? 16 : 200;
  if (c.lr == 0.0f) c.lr = tf ? 3e-3f : 1e-2f;
  if (c.train_samples == 0) c.train_samples = tf ? 192 : 256;
  if (c.test_samples == 0) c.test_samples = 512;
  return c;
}

void RunConfig::validate() const {
  if (model != "transformer" && model != "mlp")
    throw ConfigError("model must be transformer|mlp");
  if (mantissa_bits < 0 || mantissa_bits > 23)
    throw ConfigError("mantissa_bits must be in [0,23]");
  if (label_smoothing < 0.0f || label_smoothing >= 1.0f)
    throw ConfigError("label_smoothing must be in [0,1)");
  if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("dropout must be in [0,1)");
  if (batch_size <= 0 || epochs < 0 || train_samples < 0 || test_samples < 0)
    throw ConfigError("training sizes must be positive");
  if (lr < 0.0f) throw ConfigError("lr must be >= 0");
  if (model == "transformer" && !transformer_spec().valid())
    throw ConfigError("invalid transformer dimensions");
  if (lr_schedule != "cosine" && lr_schedule != "constant")
    throw ConfigError("lr_schedule must be cosine|constant");
  if (resolution < 2) throw ConfigError("resolution must be >= 2");
  if (samples < 2) throw ConfigError("samples must be >= 2");
  parse_mode(bwd_matmul);
  parse_mode(bwd_softmax);
  parse_mode(bwd_layernorm);
  parse_mode(bwd_loss);
  parse_mode(bwd_other);
}

}  // namespace palh
