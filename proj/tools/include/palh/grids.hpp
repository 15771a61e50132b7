#pragma once

#include <string>

#include "palh/runconfig.hpp"

namespace palh {

// R x R grid over [1,2)^2 of the pam relative error, CSV columns
// x1,x2,rel_err_percent.
std::string errmap_csv(int resolution);

// Sampled forward values and derivative estimates (seeded with delta_Y =
// 1.25) for the PA approximations of x*c, x/c, x^2, sqrt, exp2, log2, exp
// and log. Domain violations are emitted with flag=1 and empty values.
std::string derivgrid_csv(const RunConfig& cfg);

}  // namespace palh
