#include "palh/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pal/ops_audit.hpp"

namespace palh {

using pal::Tensor;
using pal::ad::Tape;
using pal::ad::Var;

namespace {

// Steps are quantized to 17 mantissa bits so j*step is exact for j < 64 and
// the sampled points are as close to exactly collinear as binary32 allows.
float quantized_step(std::mt19937& rng, float scale) {
  pal::audit::PhaseScope setup(pal::audit::Phase::kSetup);
  float mag = 0.5f + 0.5f * float(rng() >> 8) * 0x1.0p-24f;
  float s = ((rng() & 1) ? mag : -mag) * scale;
  pal::PaFormat f;
  f.mantissa_bits = 17;
  return pal::quantize_mantissa(s, f);
}

struct Probe {
  std::vector<double> loss;
  std::vector<std::vector<uint64_t>> ids;
};

void scan_runs(const Probe& p, double tol, AffinityResult& out) {
  int n = int(p.loss.size());
  std::vector<char> bp(size_t(std::max(0, n - 1)), 0);
  for (int j = 0; j + 1 < n; ++j) bp[size_t(j)] = p.ids[size_t(j)] != p.ids[size_t(j + 1)];
  int a = 0;
  while (a < n) {
    int b = a;
    while (b + 1 < n && !bp[size_t(b)]) ++b;
    if (b - a + 1 >= 3) {
      ++out.subsegments;
      double scale = 0.0;
      for (int j = a; j <= b; ++j) scale = std::max(scale, std::abs(p.loss[size_t(j)]));
      scale = std::max(scale, 1e-12);
      bool violated = false;
      // All symmetric triples at every stride: wide strides expose curvature
      // that consecutive samples cannot resolve.
      for (int s = 1; a + 2 * s <= b; ++s)
        for (int i = a; i + 2 * s <= b; ++i) {
          double d2 = p.loss[size_t(i)] - 2.0 * p.loss[size_t(i + s)] +
                      p.loss[size_t(i + 2 * s)];
          double ratio = std::abs(d2) / scale;
          out.worst_ratio = std::max(out.worst_ratio, ratio);
          if (ratio > tol) violated = true;
        }
      if (violated) ++out.violations;
    }
    a = b + 1;
  }
}

}  // namespace

AffinityResult probe_affinity(pal::nn::TransformerModel& model, bool weight_space,
                              const AffinityOptions& opt) {
  AffinityResult out;
  out.segments = opt.segments;
  std::mt19937 rng(uint32_t(opt.seed * 0x51ED2701ull + (weight_space ? 77 : 11)));
  const auto& spec = model.spec();
  int64_t bsz = opt.batch, seq = spec.max_seq, e = spec.embed_dim;

  // Collect sizeable parameters for weight-space lines, later layers first:
  // a head-side parameter touches few downstream indicators, so probes
  // through it find breakpoint-free runs even with few segments.
  std::vector<size_t> big_params;
  for (size_t i = model.params().count(); i-- > 0;)
    if (model.params().entry(i).second.size() >= 4) big_params.push_back(i);

  for (int seg = 0; seg < opt.segments; ++seg) {
    std::vector<int64_t> targets(size_t(bsz * seq));
    for (auto& t : targets) t = int64_t(rng() % uint32_t(spec.vocab));

    Probe probe;
    probe.loss.resize(size_t(opt.samples_per_segment));
    probe.ids.resize(size_t(opt.samples_per_segment));

    if (!weight_space) {
      Tensor x0({bsz, seq, e});
      for (int64_t i = 0; i < x0.size(); ++i) {
        uint32_t field = 125 + rng() % 3;  // magnitudes in [0.25, 2)
        x0[i] = pal::bits_to_float(((rng() & 1u) << 31) | (field << 23) |
                                   (rng() & pal::kMantMask));
      }
      Tensor step({bsz, seq, e});
      for (int64_t i = 0; i < step.size(); ++i)
        step[i] = quantized_step(rng, float(opt.step_scale_input));
      for (int j = 0; j < opt.samples_per_segment; ++j) {
        Tensor xj(x0.shape());
        {
          pal::audit::PhaseScope setup(pal::audit::Phase::kSetup);
          for (int64_t i = 0; i < xj.size(); ++i)
            xj[i] = x0[i] + float(j) * step[i];  // j*step exact by construction
        }
        Tape t;
        t.collect_segments(true);
        Var vx = t.input(xj);
        auto fwd = model.forward_embedded(t, vx, targets);
        probe.loss[size_t(j)] = double(t.val(fwd.loss)[0]);
        probe.ids[size_t(j)] = t.segment_ids();
      }
    } else {
      std::vector<int64_t> tokens(size_t(bsz * seq));
      for (auto& tok : tokens) tok = int64_t(rng() % uint32_t(spec.vocab));
      size_t pidx = big_params[size_t(seg) % big_params.size()];
      Tensor& w = model.params().entry(pidx).second;
      Tensor w0 = w;
      Tensor step(w.shape());
      for (int64_t i = 0; i < step.size(); ++i)
        step[i] = quantized_step(rng, float(opt.step_scale_weight));
      for (int j = 0; j < opt.samples_per_segment; ++j) {
        {
          pal::audit::PhaseScope setup(pal::audit::Phase::kSetup);
          for (int64_t i = 0; i < w.size(); ++i) w[i] = w0[i] + float(j) * step[i];
        }
        Tape t;
        t.collect_segments(true);
        auto fwd = model.forward(t, tokens, bsz, seq, targets, false, nullptr);
        probe.loss[size_t(j)] = double(t.val(fwd.loss)[0]);
        probe.ids[size_t(j)] = t.segment_ids();
      }
      w = w0;  // restore
    }
    scan_runs(probe, opt.tolerance, out);
  }
  return out;
}

}  // namespace palh
