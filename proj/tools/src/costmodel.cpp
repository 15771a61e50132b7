#include "palh/costmodel.hpp"

#include <cstdio>
#include <functional>
#include <sstream>

namespace palh {

CostRatios compute_cost_ratios(const CostTable& t) {
  double pam_e = 2.0 * double(t.int32_add_energy);
  double pam_a = 2.0 * double(t.int32_add_area);
  CostRatios r;
  r.pam_vs_fp32_mul_energy = pam_e / double(t.fp32_mul_energy);
  r.pam_vs_fp32_mul_area = pam_a / double(t.fp32_mul_area);
  r.pam_vs_fp16_mul_energy = pam_e / double(t.fp16_mul_energy);
  r.pam_vs_fp16_mul_area = pam_a / double(t.fp16_mul_area);
  r.pam_mac_vs_fp32_mac_energy =
      (pam_e + t.fp32_add_energy) / (double(t.fp32_mul_energy) + t.fp32_add_energy);
  r.pam_mac_vs_fp32_mac_area =
      (pam_a + t.fp32_add_area) / (double(t.fp32_mul_area) + t.fp32_add_area);
  r.pam_mac_vs_fp16_mac_energy =
      (pam_e + t.fp32_add_energy) / (double(t.fp16_mul_energy) + t.fp32_add_energy);
  r.pam_mac_vs_fp16_mac_area =
      (pam_a + t.fp32_add_area) / (double(t.fp16_mul_area) + t.fp32_add_area);
  return r;
}

namespace {

struct Row {
  const char* name;
  double value;
};

std::string percent2(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2g", fraction * 100.0);
  return buf;
}

void each_row(const CostTable& t, const std::function<void(const Row&)>& f) {
  CostRatios r = compute_cost_ratios(t);
  const Row rows[] = {
      {"pam_vs_fp32_mul_energy", r.pam_vs_fp32_mul_energy},
      {"pam_vs_fp32_mul_area", r.pam_vs_fp32_mul_area},
      {"pam_vs_fp16_mul_energy", r.pam_vs_fp16_mul_energy},
      {"pam_vs_fp16_mul_area", r.pam_vs_fp16_mul_area},
      {"pam_mac_vs_fp32_mac_energy", r.pam_mac_vs_fp32_mac_energy},
      {"pam_mac_vs_fp32_mac_area", r.pam_mac_vs_fp32_mac_area},
      {"pam_mac_vs_fp16_mac_energy", r.pam_mac_vs_fp16_mac_energy},
      {"pam_mac_vs_fp16_mac_area", r.pam_mac_vs_fp16_mac_area},
  };
  for (const Row& row : rows) f(row);
}

}  // namespace

std::string costmodel_csv(const CostTable& t) {
  std::ostringstream os;
  os << "ratio,percent\n";
  each_row(t, [&](const Row& r) { os << r.name << "," << percent2(r.value) << "\n"; });
  return os.str();
}

std::string costmodel_text(const CostTable& t) {
  std::ostringstream os;
  os << "cost model (PAM ~ two int32 additions):\n";
  each_row(t, [&](const Row& r) {
    os << "  " << r.name << " = " << percent2(r.value) << "%\n";
  });
  return os.str();
}

}  // namespace palh
