#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "pal/pa_tensor.hpp"

namespace palh {

// Token task for the toy transformer: the target sequence is the input
// sequence reversed, predicted per position.
struct SeqDataset {
  int64_t vocab = 0;
  int64_t seq = 0;
  int64_t count = 0;
  std::vector<int64_t> tokens;   // [count * seq]
  std::vector<int64_t> targets;  // [count * seq]
};

SeqDataset make_reversal_dataset(int vocab, int seq, int count, std::mt19937& rng);

// Two interleaved spirals, the classic 2-class toy for the MLP.
struct SpiralDataset {
  pal::Tensor features;          // [count, 2]
  std::vector<int64_t> labels;   // [count]
};

SpiralDataset make_spirals(int count, float noise, std::mt19937& rng);

}  // namespace palh
