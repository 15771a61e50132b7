// pal: piecewise affine numerics lab command line.
//
//   pal verify|errmap|derivgrid|costmodel|train|sweep
//       [--config <path>] [--out <dir>] [--seed N] [--<key> <value> ...]
//
// Any configuration key can be overridden on the command line. Exit codes:
// 0 success, 1 suite failure, 2 configuration error.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "palh/costmodel.hpp"
#include "palh/grids.hpp"
#include "palh/runconfig.hpp"
#include "palh/trainer.hpp"
#include "palh/verify.hpp"

namespace {

using namespace palh;

void usage() {
  std::cout
      << "usage: pal <verify|errmap|derivgrid|costmodel|train|sweep>\n"
         "           [--config <path>] [--out <dir>] [--seed N] [--key value ...]\n"
         "\n"
         "Any config key can be overridden with --key value. The config.txt\n"
         "written next to each run's outputs lists every key with its\n"
         "resolved value and doubles as the default documentation.\n";
}

void write_file(const std::string& dir, const std::string& name,
                const std::string& content) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  std::ofstream f(dir + "/" + name, std::ios::binary);
  f << content;
}

int cmd_verify(const RunConfig& cfg) {
  VerifyOptions opt;
  opt.exhaustive_bf16 = cfg.verify_exhaustive_bf16;
  opt.random_pairs = cfg.verify_random_pairs;
  opt.inverse_cases = cfg.verify_inverse_cases;
  opt.roundtrip_cases = cfg.verify_roundtrip_cases;
  opt.grad_points = cfg.verify_grad_points;
  opt.seed = cfg.seed;
  auto results = run_verify_suites(opt);
  std::string report = format_verify_report(results);
  std::cout << report;
  write_file(cfg.out_dir, "report.txt", report);
  return all_passed(results) ? 0 : 1;
}

int cmd_errmap(const RunConfig& cfg) {
  std::string csv = errmap_csv(cfg.resolution);
  write_file(cfg.out_dir, "errmap.csv", csv);
  if (cfg.out_dir.empty()) std::cout << csv;
  std::cout << "errmap: " << cfg.resolution << "x" << cfg.resolution
            << " grid written to " << cfg.out_dir << "/errmap.csv\n";
  return 0;
}

int cmd_derivgrid(const RunConfig& cfg) {
  std::string csv = derivgrid_csv(cfg);
  write_file(cfg.out_dir, "derivgrid.csv", csv);
  if (cfg.out_dir.empty()) std::cout << csv;
  std::cout << "derivgrid: " << cfg.samples << " samples per function written to "
            << cfg.out_dir << "/derivgrid.csv\n";
  return 0;
}

int cmd_costmodel(const RunConfig& cfg) {
  std::cout << costmodel_text(cfg.cost);
  write_file(cfg.out_dir, "costmodel.csv", costmodel_csv(cfg.cost));
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  TrainResult r = run_training(cfg, &std::cout);
  if (r.nan_abort) {
    std::cout << "ABORT: " << r.abort_reason << "\n";
    return 1;
  }
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "final test_acc %.9g test_loss %.9g steady_ops mul=%llu div=%llu "
                "sqrt=%llu setup_ops mul=%llu div=%llu sqrt=%llu\n",
                r.final_test_acc, r.final_test_loss,
                (unsigned long long)r.ops.steady.mul,
                (unsigned long long)r.ops.steady.div,
                (unsigned long long)r.ops.steady.sqrt,
                (unsigned long long)r.ops.setup.mul,
                (unsigned long long)r.ops.setup.div,
                (unsigned long long)r.ops.setup.sqrt);
  std::cout << buf;
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  std::ostringstream csv;
  csv << "mantissa_bits,final_test_acc,final_test_loss,steady_mul,steady_div,"
         "steady_sqrt\n";
  for (int bits : cfg.sweep_bits_list()) {
    RunConfig run = cfg;
    run.mantissa_bits = bits;
    run.out_dir = cfg.out_dir.empty()
                      ? ""
                      : cfg.out_dir + "/bits" + std::to_string(bits);
    std::cout << "sweep: mantissa_bits=" << bits << "\n";
    TrainResult r = run_training(run, nullptr);
    if (r.nan_abort) {
      std::cout << "ABORT: " << r.abort_reason << "\n";
      return 1;
    }
    char buf[192];
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%llu,%llu,%llu\n", bits,
                  r.final_test_acc, r.final_test_loss,
                  (unsigned long long)r.ops.steady.mul,
                  (unsigned long long)r.ops.steady.div,
                  (unsigned long long)r.ops.steady.sqrt);
    csv << buf;
  }
  std::cout << csv.str();
  write_file(cfg.out_dir, "sweep.csv", csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    usage();
    return 2;
  }
  std::string command = argv[1];
  if (command == "--help" || command == "-h" || command == "help") {
    usage();
    return 0;
  }

  RunConfig cfg;
  try {
    // --config loads first so later flags override file values.
    for (int i = 2; i + 1 < argc; i += 2) {
      if (std::strcmp(argv[i], "--config") == 0) cfg = RunConfig::load_file(argv[i + 1]);
    }
    for (int i = 2; i < argc; i += 2) {
      std::string key = argv[i];
      if (key.rfind("--", 0) != 0)
        throw ConfigError("expected --key, got '" + key + "'");
      if (i + 1 >= argc) throw ConfigError("missing value for " + key);
      key = key.substr(2);
      if (key == "config") continue;
      if (key == "out")
        cfg.out_dir = argv[i + 1];
      else
        cfg.set(key, argv[i + 1]);
    }
    cfg.validate();

    if (command == "verify") return cmd_verify(cfg);
    if (command == "errmap") return cmd_errmap(cfg);
    if (command == "derivgrid") return cmd_derivgrid(cfg);
    if (command == "costmodel") return cmd_costmodel(cfg);
    if (command == "train") return cmd_train(cfg);
    if (command == "sweep") return cmd_sweep(cfg);
    std::cerr << "unknown command '" << command << "'\n";
    usage();
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
