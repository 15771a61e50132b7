#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "pal/pa_autodiff.hpp"
#include "pal/pa_nn.hpp"
#include "pal/pa_optim.hpp"
#include "palh/costmodel.hpp"

namespace palh {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every tunable of the harness, one flat key per field. Files are UTF-8
// `key = value` lines with `#` comments; every key can also be set on the
// command line as `--key value`. Unspecified keys keep the defaults below;
// save() emits all keys, so a config round-trips losslessly.
struct RunConfig {
  // run
  uint64_t seed = 1;
  std::string out_dir = "out";

  // model
  std::string model = "transformer";  // transformer | mlp
  int layers = 2;
  int heads = 2;
  int embed_dim = 32;
  int ff_dim = 64;
  int vocab = 24;
  int seq_len = 12;
  std::string mlp_hidden = "32,32";
  int mlp_classes = 2;

  // mode matrix
  bool pa_matmul = true;
  bool pa_softmax = true;
  bool pa_layernorm = true;
  bool pa_loss = true;
  bool pa_optimizer = true;
  std::string bwd_matmul = "approx";  // approx | exact, per network component
  std::string bwd_softmax = "approx";
  std::string bwd_layernorm = "approx";
  std::string bwd_loss = "exact";
  std::string bwd_other = "approx";
  int mantissa_bits = 23;  // < 23 narrows the PAM matmul operands

  // training; 0 for epochs/lr/samples means "task default", resolved per
  // model: transformer 16 epochs, lr 3e-3, 192/512 train/test sequences;
  // mlp 200 epochs, lr 1e-2, 256/512 train/test points
  int epochs = 0;
  int batch_size = 32;
  int train_samples = 0;
  int test_samples = 0;
  float lr = 0.0f;
  float beta1 = 0.9f;
  float beta2 = 0.98f;
  float adam_eps = 1e-8f;
  float weight_decay = 1e-4f;
  float label_smoothing = 0.1f;
  float dropout = 0.0f;
  float ln_eps = 1e-5f;
  std::string lr_schedule = "cosine";  // cosine | constant
  int warmup_steps = 16;
  float spiral_noise = 0.06f;

  // errmap
  int resolution = 256;

  // derivgrid
  int samples = 512;
  float grid_min = 0.25f;
  float grid_max = 8.0f;
  float deriv_const = 1.5f;

  // sweep
  std::string sweep_bits = "23,7,4,3";

  // verify scale knobs
  bool verify_exhaustive_bf16 = true;
  int64_t verify_random_pairs = 100000000;
  int64_t verify_inverse_cases = 10000000;
  int64_t verify_roundtrip_cases = 10000000;
  int verify_grad_points = 10000;

  // cost table overrides
  CostTable cost{};

  void set(const std::string& key, const std::string& value);
  void save(std::ostream& os) const;
  static RunConfig load(std::istream& is);
  static RunConfig load_file(const std::string& path);

  // Copy with the epochs/lr task defaults filled in.
  RunConfig resolved() const;

  std::vector<int> mlp_hidden_dims() const;
  std::vector<int> sweep_bits_list() const;

  pal::nn::LayerConfig layer_config() const;
  pal::nn::TransformerSpec transformer_spec() const;
  pal::nn::MlpSpec mlp_spec() const;
  pal::optim::AdamConfig adam_config() const;

  void validate() const;  // throws ConfigError
};

pal::ad::DerivativeMode parse_mode(const std::string& s);

}  // namespace palh
