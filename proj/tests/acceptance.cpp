// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. `--quick` runs reduced scales while developing; ctest
// registers the full-scale run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "pal/ops_audit.hpp"
#include "pal/pa_optim.hpp"
#include "palh/affinity.hpp"
#include "palh/costmodel.hpp"
#include "palh/runconfig.hpp"
#include "palh/trainer.hpp"
#include "palh/verify.hpp"

using namespace palh;

namespace {

bool g_quick = false;
int g_failures = 0;

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %2d (%s): %s — %s\n", id, name, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

const SuiteResult& suite(const std::vector<SuiteResult>& rs, const char* name) {
  for (const auto& r : rs)
    if (r.name == name) return r;
  throw std::logic_error("missing suite");
}

// Parity runs (criterion 6/7): the toy tasks at their converged defaults.
RunConfig parity_config(const char* model, bool pa, uint64_t seed) {
  RunConfig cfg;
  cfg.model = model;
  cfg.out_dir = "";
  cfg.seed = seed;
  if (!pa)
    cfg.pa_matmul = cfg.pa_softmax = cfg.pa_layernorm = cfg.pa_loss =
        cfg.pa_optimizer = false;
  if (g_quick) cfg.test_samples = 256;
  return cfg;
}

// Narrow-mantissa sweep (criterion 8): the transformer task defaults with
// only the operand width varied, so the 23-bit row is exactly the fully-PA
// run of criterion 7. The epoch budget sits at the convergence knee, where
// the extra operand noise of narrow mantissas still shows as a deficit.
RunConfig sweep_config(int bits, uint64_t seed) {
  RunConfig cfg = parity_config("transformer", true, seed);
  cfg.mantissa_bits = bits;
  return cfg;
}

void criterion_1(const VerifyOptions& base) {
  VerifyOptions opt = base;
  double t0 = now_s();
  // Only the equivalence sweep matters here; run it via the suite list and
  // pick the result out.
  auto results = run_verify_suites(opt);
  double dt = now_s() - t0;
  const SuiteResult& r = suite(results, "int_add_equivalence");
  bool pass = r.pass && dt <= 900.0;
  report(1, "int-add equivalence", pass, fmt("%s elapsed=%.1fs (budget 900s)",
                                             r.detail.c_str(), dt));
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--quick") == 0) g_quick = true;

  // ---- criteria 1-4: scalar arithmetic and gradient suites --------------
  VerifyOptions vo;
  vo.exhaustive_bf16 = !g_quick;
  vo.random_pairs = g_quick ? 2000000 : 100000000;
  vo.inverse_cases = g_quick ? 500000 : 10000000;
  vo.roundtrip_cases = g_quick ? 500000 : 10000000;
  vo.grad_points = g_quick ? 1000 : 10000;
  criterion_1(vo);

  auto suites = run_verify_suites([&] {
    VerifyOptions small = vo;
    small.exhaustive_bf16 = false;
    small.random_pairs = 0;  // criterion 1 already ran the sweep
    return small;
  }());
  {
    const SuiteResult& r = suite(suites, "error_bound");
    report(2, "error bound -1/9..0, min at (1.5,1.5)", r.pass, r.detail);
  }
  {
    const SuiteResult& r = suite(suites, "inverse_roundtrip");
    report(3, "pad/pam inverse and paexp2/palog2 round trip", r.pass, r.detail);
  }
  {
    const SuiteResult& r = suite(suites, "gradient_checks");
    report(4, "finite-difference gradient checks", r.pass, r.detail);
  }

  // ---- criterion 5: piecewise affinity ----------------------------------
  {
    pal::nn::TransformerSpec spec;
    spec.layers = 2;
    spec.heads = 2;
    spec.embed_dim = 8;
    spec.ff_dim = 8;
    spec.vocab = 8;
    spec.max_seq = 4;
    pal::nn::LayerConfig pa_cfg;
    pal::nn::LayerConfig std_cfg = pa_cfg;
    std_cfg.pa_matmul = std_cfg.pa_softmax = std_cfg.pa_layernorm =
        std_cfg.pa_loss = false;
    AffinityOptions opt;
    opt.segments = g_quick ? 8 : 32;
    pal::nn::TransformerModel pa_model(spec, pa_cfg, 7);
    pal::nn::TransformerModel std_model(spec, std_cfg, 7);
    AffinityResult pa_in = probe_affinity(pa_model, false, opt);
    AffinityResult pa_w = probe_affinity(pa_model, true, opt);
    AffinityResult st_in = probe_affinity(std_model, false, opt);
    AffinityResult st_w = probe_affinity(std_model, true, opt);
    bool pa_pass = pa_in.pass() && pa_w.pass();
    bool std_fails = (st_in.violations + st_w.violations) > 0;
    report(5, "global piecewise affinity (PA passes, standard fails)",
           pa_pass && std_fails,
           fmt("PA: input runs=%d viol=%d worst=%.2e, weight runs=%d viol=%d "
               "worst=%.2e; STD: viol=%d worst=%.2e",
               pa_in.subsegments, pa_in.violations, pa_in.worst_ratio,
               pa_w.subsegments, pa_w.violations, pa_w.worst_ratio,
               st_in.violations + st_w.violations,
               std::max(st_in.worst_ratio, st_w.worst_ratio)));
  }

  // ---- criteria 6+7: multiplication-free training and parity ------------
  int seeds = g_quick ? 1 : 3;
  double pa_tf_acc[3] = {};  // shared with criterion 8 as the 23-bit row
  {
    struct Run {
      double acc = 0;
      pal::audit::Totals ops;
      double seconds = 0;
      bool aborted = false;
    };
    auto train_one = [&](const RunConfig& cfg) {
      Run run;
      double t0 = now_s();
      TrainResult r = run_training(cfg);
      run.seconds = now_s() - t0;
      run.acc = r.final_test_acc;
      run.ops = r.ops;
      run.aborted = r.nan_abort;
      return run;
    };
    double max_seconds = 0;
    bool aborted = false;
    uint64_t pa_steady = 0;
    double mean[2][2] = {{0, 0}, {0, 0}};  // [task][pa]
    const char* tasks[2] = {"transformer", "mlp"};
    for (int task = 0; task < 2; ++task)
      for (int pa = 0; pa < 2; ++pa)
        for (int s = 1; s <= seeds; ++s) {
          Run r = train_one(parity_config(tasks[task], pa == 1, uint64_t(s)));
          mean[task][pa] += r.acc / double(seeds);
          max_seconds = std::max(max_seconds, r.seconds);
          aborted = aborted || r.aborted;
          if (pa == 1) pa_steady += r.ops.steady.total();
          if (task == 0 && pa == 1) pa_tf_acc[s - 1] = r.acc;
        }
    report(6, "multiplication-free training", !aborted && pa_steady == 0,
           fmt("fully-PA runs executed %llu steady-phase native mul/div/sqrt "
               "(setup phase excluded by design)",
               (unsigned long long)pa_steady));
    double tf_gap = std::abs(mean[0][1] - mean[0][0]);
    double mlp_gap = std::abs(mean[1][1] - mean[1][0]);
    bool pass = !aborted && tf_gap <= 0.02 && mlp_gap <= 0.02 &&
                max_seconds <= 1200.0;
    report(7, "desk-scale training parity",
           pass,
           fmt("transformer std=%.4f pa=%.4f gap=%.4f; mlp std=%.4f pa=%.4f "
               "gap=%.4f; slowest run %.0fs (budget 1200s)",
               mean[0][0], mean[0][1], tf_gap, mean[1][0], mean[1][1], mlp_gap,
               max_seconds));
  }

  // ---- criterion 8: narrow-mantissa trend --------------------------------
  {
    double acc[4][3] = {};  // [bits-index][seed]
    const int bit_list[4] = {23, 7, 4, 3};
    bool aborted = false;
    for (int s = 0; s < seeds; ++s) acc[0][s] = pa_tf_acc[s];  // 23-bit row
    for (int bi = 1; bi < 4; ++bi)
      for (int s = 0; s < seeds; ++s) {
        TrainResult r = run_training(sweep_config(bit_list[bi], uint64_t(s + 1)));
        acc[bi][s] = r.final_test_acc;
        aborted = aborted || r.nan_abort;
      }
    auto mean_of = [&](int bi) {
      double m = 0;
      for (int s = 0; s < seeds; ++s) m += acc[bi][s] / double(seeds);
      return m;
    };
    double m23 = mean_of(0), m7 = mean_of(1), m4 = mean_of(2), m3 = mean_of(3);
    int strictly_worse = 0;
    for (int s = 0; s < seeds; ++s)
      if (acc[3][s] < acc[0][s]) ++strictly_worse;
    bool pass = !aborted && std::abs(m7 - m23) <= 0.01 &&
                std::abs(m4 - m23) <= 0.01 &&
                strictly_worse >= (g_quick ? 1 : 2);
    report(8, "narrow-mantissa trend (7/4 match, 3 worse)", pass,
           fmt("mean acc: 23b=%.4f 7b=%.4f 4b=%.4f 3b=%.4f; 3b strictly worse "
               "in %d/%d seeds (per-seed 23b vs 3b)",
               m23, m7, m4, m3, strictly_worse, seeds));
  }

  // ---- criterion 9: hardware cost model ----------------------------------
  {
    std::string csv = costmodel_csv(CostTable{});
    const char* expected[8] = {"pam_vs_fp32_mul_energy,5.4",
                               "pam_vs_fp32_mul_area,3.6",
                               "pam_vs_fp16_mul_energy,18",
                               "pam_vs_fp16_mul_area,17",
                               "pam_mac_vs_fp32_mac_energy,24",
                               "pam_mac_vs_fp32_mac_area,38",
                               "pam_mac_vs_fp16_mac_energy,55",
                               "pam_mac_vs_fp16_mac_area,77"};
    bool pass = true;
    for (const char* row : expected)
      pass = pass && csv.find(std::string(row) + "\n") != std::string::npos;
    report(9, "hardware cost ratios to two significant figures", pass,
           pass ? "5.4 3.6 18 17 24 38 55 77 (percent)" : "mismatch: " + csv);
  }

  // ---- criterion 10: optimizer sanity ------------------------------------
  {
    using namespace pal;
    using namespace pal::optim;
    nn::ParamStore p;
    p.add("w", Tensor::scalar(0.0f));
    OptState st = OptState::init_like(p);
    AdamConfig cfg;
    cfg.lr = 0.05f;
    cfg.weight_decay = 0.0f;
    auto loss = [](float w) { return 0.5 * double(w - 3.0f) * double(w - 3.0f); };
    double initial = loss(p.at("w")[0]);
    for (int i = 0; i < 200; ++i) {
      float grad = p.at("w")[0] - 3.0f;
      adamw_pa_step(p, {Tensor::scalar(grad)}, st, cfg);
    }
    double final_loss = loss(p.at("w")[0]);
    bool quadratic_ok = final_loss < 0.01 * initial;

    AdamConfig c2;
    c2.lr = 0.0625f;
    c2.beta1 = 0.5f;
    c2.beta2 = 0.5f;
    c2.eps = 0.0f;
    c2.weight_decay = 0.25f;
    nn::ParamStore pa, sd;
    pa.add("w", Tensor::scalar(2.0f));
    sd.add("w", Tensor::scalar(2.0f));
    OptState sa = OptState::init_like(pa), ss = OptState::init_like(sd);
    bool bitwise = true;
    for (int step = 0; step < 8; ++step) {
      adamw_pa_step(pa, {Tensor::scalar(1.0f)}, sa, c2);
      adamw_standard_step(sd, {Tensor::scalar(1.0f)}, ss, c2);
      bitwise = bitwise && float_bits(pa.at("w")[0]) == float_bits(sd.at("w")[0]) &&
                float_bits(sa.m[0][0]) == float_bits(ss.m[0][0]) &&
                float_bits(sa.v[0][0]) == float_bits(ss.v[0][0]);
    }
    report(10, "optimizer sanity", quadratic_ok && bitwise,
           fmt("PA-AdamW quadratic loss %.3g of initial after 200 steps "
               "(< 0.01); power-of-two PA/standard bitwise agreement: %s",
               final_loss / initial, bitwise ? "yes" : "no"));
  }

  std::printf("acceptance: %d/10 criteria passed\n", 10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
