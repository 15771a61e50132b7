#pragma once

#include <string>

namespace palh {

// Hardware cost constants: energy in picojoules, area in square micrometers,
// per add/multiply in each format. Defaults are immutable reference values;
// every field is overridable through the run configuration.
struct CostTable {
  float int32_add_energy = 0.1f;
  float int32_add_area = 137.0f;
  float int32_mul_energy = 3.1f;
  float int32_mul_area = 3495.0f;
  float int8_add_energy = 0.03f;
  float int8_add_area = 36.0f;
  float int8_mul_energy = 0.2f;
  float int8_mul_area = 282.0f;
  float fp32_add_energy = 0.9f;
  float fp32_add_area = 4184.0f;
  float fp32_mul_energy = 3.7f;
  float fp32_mul_area = 7700.0f;
  float fp16_add_energy = 0.4f;
  float fp16_add_area = 1360.0f;
  float fp16_mul_energy = 1.1f;
  float fp16_mul_area = 1640.0f;
};

// Ratios under the model "one PAM costs about two int32 additions".
// MAC rows pair the multiplier with an fp32 accumulate.
struct CostRatios {
  double pam_vs_fp32_mul_energy;
  double pam_vs_fp32_mul_area;
  double pam_vs_fp16_mul_energy;
  double pam_vs_fp16_mul_area;
  double pam_mac_vs_fp32_mac_energy;
  double pam_mac_vs_fp32_mac_area;
  double pam_mac_vs_fp16_mac_energy;
  double pam_mac_vs_fp16_mac_area;
};

CostRatios compute_cost_ratios(const CostTable& t);

// Two-significant-figure percent table, one "name,percent" row per ratio.
std::string costmodel_csv(const CostTable& t);
std::string costmodel_text(const CostTable& t);

}  // namespace palh
