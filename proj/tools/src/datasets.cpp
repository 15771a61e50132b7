#include "palh/datasets.hpp"

#include <cmath>

#include "pal/ops_audit.hpp"

namespace palh {

SeqDataset make_reversal_dataset(int vocab, int seq, int count, std::mt19937& rng) {
  SeqDataset d;
  d.vocab = vocab;
  d.seq = seq;
  d.count = count;
  d.tokens.resize(size_t(count) * seq);
  d.targets.resize(size_t(count) * seq);
  for (int i = 0; i < count; ++i) {
    for (int s = 0; s < seq; ++s)
      d.tokens[size_t(i) * seq + s] = int64_t(rng() % uint32_t(vocab));
    for (int s = 0; s < seq; ++s)
      d.targets[size_t(i) * seq + s] = d.tokens[size_t(i) * seq + (seq - 1 - s)];
  }
  return d;
}

SpiralDataset make_spirals(int count, float noise, std::mt19937& rng) {
  pal::audit::PhaseScope setup(pal::audit::Phase::kSetup);
  SpiralDataset d;
  d.features = pal::Tensor({count, 2});
  d.labels.resize(size_t(count));
  for (int i = 0; i < count; ++i) {
    int cls = i & 1;
    double u = double(rng() >> 8) * 0x1.0p-24;
    double r = 0.15 + 0.85 * u;
    double theta = 3.0 * M_PI * r + (cls ? M_PI : 0.0);
    double nx = (double(rng() >> 8) * 0x1.0p-24 - 0.5) * 2.0 * noise;
    double ny = (double(rng() >> 8) * 0x1.0p-24 - 0.5) * 2.0 * noise;
    d.features[i * 2] = float(r * std::cos(theta) + nx);
    d.features[i * 2 + 1] = float(r * std::sin(theta) + ny);
    d.labels[size_t(i)] = cls;
  }
  return d;
}

}  // namespace palh
