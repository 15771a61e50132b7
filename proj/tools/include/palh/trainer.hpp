#pragma once

#include <string>
#include <vector>

#include "pal/ops_audit.hpp"
#include "palh/runconfig.hpp"

namespace palh {

struct EpochRow {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  uint64_t steady_mul = 0, steady_div = 0, steady_sqrt = 0;  // cumulative
  uint64_t setup_mul = 0, setup_div = 0, setup_sqrt = 0;
};

struct TrainResult {
  std::vector<EpochRow> rows;
  double final_test_acc = 0.0;
  double final_test_loss = 0.0;
  bool nan_abort = false;
  std::string abort_reason;
  pal::audit::Totals ops;       // native op counts over the whole run
  std::string metrics_csv;      // exact bytes written to metrics.csv
  pal::nn::ParamStore params;   // final parameters (checkpoint content)
};

// Runs one seeded training job per the config; deterministic end to end.
// Counters are reset at run start, so TrainResult::ops is this run's count.
// When out_dir is non-empty, writes metrics.csv, checkpoint.bin and
// config.txt under it.
TrainResult run_training(const RunConfig& cfg, std::ostream* progress = nullptr);

}  // namespace palh
