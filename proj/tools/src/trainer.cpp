#include "palh/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include "palh/datasets.hpp"

namespace palh {

using pal::Tensor;
using pal::ad::Tape;
using pal::ad::Var;

namespace {

struct Batch {
  std::vector<int64_t> tokens;   // transformer
  Tensor features;               // mlp
  std::vector<int64_t> targets;
  int64_t rows = 0;   // logits rows (batch*seq or batch)
  int64_t batch = 0;
};

struct TaskData {
  SeqDataset seq_train, seq_test;
  SpiralDataset sp_train, sp_test;
  bool transformer = false;
  int64_t train_count() const {
    return transformer ? seq_train.count : sp_train.features.dim(0);
  }
  int64_t test_count() const {
    return transformer ? seq_test.count : sp_test.features.dim(0);
  }
};

Batch gather_batch(const TaskData& d, bool test, const std::vector<int64_t>& order,
                   int64_t begin, int64_t end, int seq) {
  Batch b;
  b.batch = end - begin;
  if (d.transformer) {
    const SeqDataset& ds = test ? d.seq_test : d.seq_train;
    b.tokens.reserve(size_t(b.batch * seq));
    b.targets.reserve(size_t(b.batch * seq));
    for (int64_t i = begin; i < end; ++i) {
      int64_t row = order.empty() ? i : order[size_t(i)];
      for (int s = 0; s < seq; ++s) {
        b.tokens.push_back(ds.tokens[size_t(row * seq + s)]);
        b.targets.push_back(ds.targets[size_t(row * seq + s)]);
      }
    }
    b.rows = b.batch * seq;
  } else {
    const SpiralDataset& ds = test ? d.sp_test : d.sp_train;
    b.features = Tensor({b.batch, 2});
    for (int64_t i = begin; i < end; ++i) {
      int64_t row = order.empty() ? i : order[size_t(i)];
      b.features[(i - begin) * 2] = ds.features[row * 2];
      b.features[(i - begin) * 2 + 1] = ds.features[row * 2 + 1];
      b.targets.push_back(ds.labels[size_t(row)]);
    }
    b.rows = b.batch;
  }
  return b;
}

// Correct argmax predictions; comparisons only.
int64_t count_correct(const Tensor& logits, const std::vector<int64_t>& targets) {
  int64_t classes = logits.shape().back();
  int64_t rows = logits.size() / classes;
  int64_t correct = 0;
  for (int64_t r = 0; r < rows; ++r) {
    int64_t best = 0;
    for (int64_t c = 1; c < classes; ++c)
      if (logits[r * classes + c] > logits[r * classes + best]) best = c;
    if (best == targets[size_t(r)]) ++correct;
  }
  return correct;
}

float schedule_lr(const RunConfig& cfg, int step, int total_steps) {
  pal::audit::PhaseScope setup(pal::audit::Phase::kSetup);
  double warm = cfg.warmup_steps > 0
                    ? std::min(1.0, double(step + 1) / double(cfg.warmup_steps))
                    : 1.0;
  double factor = 1.0;
  if (cfg.lr_schedule == "cosine") {
    int tail = std::max(1, total_steps - cfg.warmup_steps);
    double prog =
        std::clamp(double(step - cfg.warmup_steps) / double(tail), 0.0, 1.0);
    factor = 0.5 * (1.0 + std::cos(M_PI * prog));
  }
  return float(double(cfg.lr) * warm * factor);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

TrainResult run_training(const RunConfig& cfg_in, std::ostream* progress) {
  RunConfig cfg = cfg_in.resolved();
  cfg.validate();
  pal::audit::set_enabled(true);
  pal::audit::reset();

  pal::nn::LayerConfig lc = cfg.layer_config();
  pal::optim::AdamConfig adam = cfg.adam_config();

  std::mt19937 data_rng(uint32_t(cfg.seed * 0x9E3779B1ull + 17));
  std::mt19937 shuffle_rng(uint32_t(cfg.seed * 0x85EBCA77ull + 5));
  std::mt19937 dropout_rng(uint32_t(cfg.seed * 0xC2B2AE3Dull + 3));

  TaskData data;
  data.transformer = cfg.model == "transformer";
  std::unique_ptr<pal::nn::TransformerModel> tf;
  std::unique_ptr<pal::nn::MlpModel> mlp;
  if (data.transformer) {
    data.seq_train =
        make_reversal_dataset(cfg.vocab, cfg.seq_len, cfg.train_samples, data_rng);
    data.seq_test =
        make_reversal_dataset(cfg.vocab, cfg.seq_len, cfg.test_samples, data_rng);
    tf = std::make_unique<pal::nn::TransformerModel>(cfg.transformer_spec(), lc,
                                                     cfg.seed);
  } else {
    data.sp_train = make_spirals(cfg.train_samples, cfg.spiral_noise, data_rng);
    data.sp_test = make_spirals(cfg.test_samples, cfg.spiral_noise, data_rng);
    mlp = std::make_unique<pal::nn::MlpModel>(cfg.mlp_spec(), lc, cfg.seed);
  }
  pal::nn::ParamStore& params = data.transformer ? tf->params() : mlp->params();

  pal::optim::OptState state = pal::optim::OptState::init_like(params);

  auto forward_batch = [&](Tape& t, const Batch& b, bool training) {
    if (data.transformer)
      return tf->forward(t, b.tokens, b.batch, cfg.seq_len, b.targets, training,
                         &dropout_rng);
    return mlp->forward(t, b.features, b.targets);
  };

  auto evaluate = [&](bool test, double& loss_out, double& acc_out) {
    int64_t n = test ? data.test_count() : data.train_count();
    double loss_sum = 0.0;
    int64_t correct = 0, rows_total = 0;
    for (int64_t at = 0; at < n; at += cfg.batch_size) {
      int64_t end = std::min(n, at + cfg.batch_size);
      Batch b = gather_batch(data, test, {}, at, end, cfg.seq_len);
      Tape t;
      auto out = forward_batch(t, b, false);
      pal::audit::PhaseScope setup(pal::audit::Phase::kSetup);
      loss_sum += double(t.val(out.loss)[0]) * double(b.rows);
      correct += count_correct(t.val(out.logits), b.targets);
      rows_total += b.rows;
    }
    pal::audit::PhaseScope setup(pal::audit::Phase::kSetup);
    loss_out = loss_sum / double(rows_total);
    acc_out = double(correct) / double(rows_total);
  };

  TrainResult result;
  std::ostringstream csv;
  csv << "epoch,train_loss,train_acc,test_loss,test_acc,steady_mul,steady_div,"
         "steady_sqrt,setup_mul,setup_div,setup_sqrt\n";

  int64_t n_train = data.train_count();
  int steps_per_epoch = int((n_train + cfg.batch_size - 1) / cfg.batch_size);
  int total_steps = cfg.epochs * steps_per_epoch;
  int step = 0;

  std::vector<int64_t> order(static_cast<size_t>(n_train), 0);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs && !result.nan_abort; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    int64_t epoch_correct = 0, epoch_rows = 0;

    for (int64_t at = 0; at < n_train; at += cfg.batch_size) {
      int64_t end = std::min(n_train, at + cfg.batch_size);
      Batch b = gather_batch(data, false, order, at, end, cfg.seq_len);
      Tape t;
      auto out = forward_batch(t, b, true);
      float loss = t.val(out.loss)[0];
      if (!std::isfinite(loss)) {
        result.nan_abort = true;
        result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch) +
                              " step " + std::to_string(step);
        break;
      }
      pal::ad::Gradients grads =
          t.backward(out.loss, Tensor::full(t.val(out.loss).shape(), 1.0f), lc.bwd);
      std::vector<Tensor> grad_table;
      grad_table.reserve(params.count());
      for (size_t i = 0; i < params.count(); ++i)
        grad_table.push_back(grads.wrt(out.bound.vars[i]));

      adam.lr = schedule_lr(cfg, step, total_steps);
      if (cfg.pa_optimizer)
        pal::optim::adamw_pa_step(params, grad_table, state, adam);
      else
        pal::optim::adamw_standard_step(params, grad_table, state, adam);
      ++step;

      pal::audit::PhaseScope setup(pal::audit::Phase::kSetup);
      epoch_loss += double(loss) * double(b.rows);
      epoch_correct += count_correct(t.val(out.logits), b.targets);
      epoch_rows += b.rows;
    }
    if (result.nan_abort) break;

    EpochRow row;
    row.epoch = epoch;
    {
      pal::audit::PhaseScope setup(pal::audit::Phase::kSetup);
      row.train_loss = epoch_loss / double(epoch_rows);
      row.train_acc = double(epoch_correct) / double(epoch_rows);
    }
    evaluate(true, row.test_loss, row.test_acc);
    pal::audit::Totals ops = pal::audit::snapshot();
    row.steady_mul = ops.steady.mul;
    row.steady_div = ops.steady.div;
    row.steady_sqrt = ops.steady.sqrt;
    row.setup_mul = ops.setup.mul;
    row.setup_div = ops.setup.div;
    row.setup_sqrt = ops.setup.sqrt;
    result.rows.push_back(row);

    csv << row.epoch << "," << fmt_double(row.train_loss) << ","
        << fmt_double(row.train_acc) << "," << fmt_double(row.test_loss) << ","
        << fmt_double(row.test_acc) << "," << row.steady_mul << "," << row.steady_div
        << "," << row.steady_sqrt << "," << row.setup_mul << "," << row.setup_div
        << "," << row.setup_sqrt << "\n";
    if (progress)
      (*progress) << "epoch " << epoch << " train_loss " << fmt_double(row.train_loss)
                  << " test_acc " << fmt_double(row.test_acc) << "\n";
  }

  if (!result.rows.empty()) {
    result.final_test_acc = result.rows.back().test_acc;
    result.final_test_loss = result.rows.back().test_loss;
  }
  result.ops = pal::audit::snapshot();
  result.metrics_csv = csv.str();

  // Final parameter snapshot plus optimizer state, one named table.
  for (size_t i = 0; i < params.count(); ++i)
    result.params.add(params.entry(i).first, params.entry(i).second);
  for (size_t i = 0; i < params.count(); ++i) {
    result.params.add("opt.m." + params.entry(i).first, state.m[i]);
    result.params.add("opt.v." + params.entry(i).first, state.v[i]);
  }
  result.params.add("opt.t", Tensor::scalar(float(state.t)));
  result.params.add("opt.beta1_pow", Tensor::scalar(state.beta1_pow));
  result.params.add("opt.beta2_pow", Tensor::scalar(state.beta2_pow));

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream metrics(cfg.out_dir + "/metrics.csv", std::ios::binary);
    metrics << result.metrics_csv;
    std::ofstream ckpt(cfg.out_dir + "/checkpoint.bin", std::ios::binary);
    result.params.save(ckpt);
    std::ofstream cfgout(cfg.out_dir + "/config.txt", std::ios::binary);
    cfg.save(cfgout);
  }
  return result;
}

}  // namespace palh
