#include "palh/grids.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "pal/pa_autodiff.hpp"

namespace palh {

using pal::ad::DerivativeMode;
using pal::ad::DerivativeModes;
using pal::ad::Tape;
using pal::ad::Var;

std::string errmap_csv(int resolution) {
  std::ostringstream os;
  os << "x1,x2,rel_err_percent\n";
  char buf[128];
  for (int i = 0; i < resolution; ++i) {
    float x1 = 1.0f + float(i) / float(resolution);
    for (int j = 0; j < resolution; ++j) {
      float x2 = 1.0f + float(j) / float(resolution);
      double exact = double(x1) * double(x2);
      double rel = (double(pal::pam(x1, x2)) - exact) / exact;
      std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", double(x1), double(x2),
                    rel * 100.0);
      os << buf;
    }
  }
  return os.str();
}

namespace {

struct GridFn {
  const char* name;
  bool positive_domain;
  std::function<Var(Tape&, Var, float)> build;          // PA graph
  std::function<double(double, float)> std_value;       // f(x)
  std::function<double(double, float)> std_derivative;  // f'(x)
};

}  // namespace

std::string derivgrid_csv(const RunConfig& cfg) {
  const float c = cfg.deriv_const;
  const float seed_delta = 1.25f;  // the derivative plots' convention
  const GridFn fns[] = {
      {"mul_const", false,
       [](Tape& t, Var x, float k) { return t.pam(x, t.constant_scalar(k)); },
       [](double x, double k) { return x * k; },
       [](double, double k) { return k; }},
      {"div_const", false,
       [](Tape& t, Var x, float k) { return t.pad(x, t.constant_scalar(k)); },
       [](double x, double k) { return x / k; },
       [](double, double k) { return 1.0 / k; }},
      {"square", false, [](Tape& t, Var x, float) { return t.pam(x, x); },
       [](double x, double) { return x * x; }, [](double x, double) { return 2.0 * x; }},
      {"sqrt", true, [](Tape& t, Var x, float) { return t.pasqrt(x); },
       [](double x, double) { return std::sqrt(x); },
       [](double x, double) { return 0.5 / std::sqrt(x); }},
      {"exp2", false, [](Tape& t, Var x, float) { return t.paexp2(x); },
       [](double x, double) { return std::exp2(x); },
       [](double x, double) { return std::log(2.0) * std::exp2(x); }},
      {"log2", true, [](Tape& t, Var x, float) { return t.palog2(x); },
       [](double x, double) { return std::log2(x); },
       [](double x, double) { return 1.0 / (x * std::log(2.0)); }},
      {"exp", false, [](Tape& t, Var x, float) { return t.paexp(x); },
       [](double x, double) { return std::exp(x); },
       [](double x, double) { return std::exp(x); }},
      {"log", true, [](Tape& t, Var x, float) { return t.palog(x); },
       [](double x, double) { return std::log(x); },
       [](double x, double) { return 1.0 / x; }},
  };

  std::ostringstream os;
  os << "function,x,f_std,f_pa,fwd_rel_err,d_std,d_exact,d_approx,exact_rel_err,"
        "approx_rel_err,flag\n";
  char buf[320];
  for (const GridFn& fn : fns) {
    for (int i = 0; i < cfg.samples; ++i) {
      float x = cfg.grid_min + (cfg.grid_max - cfg.grid_min) * float(i) /
                                   float(cfg.samples - 1);
      if (fn.positive_domain && !(x > 0.0f && pal::is_normal(x))) {
        std::snprintf(buf, sizeof buf, "%s,%.9g,,,,,,,,,1\n", fn.name, double(x));
        os << buf;
        continue;
      }
      Tape t;
      Var in = t.input(pal::Tensor::scalar(x));
      Var out = fn.build(t, in, c);
      float f_pa = t.val(out)[0];
      auto grad = [&](DerivativeMode m) {
        Tape t2;
        Var in2 = t2.input(pal::Tensor::scalar(x));
        Var out2 = fn.build(t2, in2, c);
        auto g = t2.backward(out2, pal::Tensor::scalar(seed_delta),
                             DerivativeModes::all(m));
        return double(g.wrt(in2)[0]);
      };
      double d_exact = grad(DerivativeMode::Exact);
      double d_approx = grad(DerivativeMode::Approximate);
      double f_std = fn.std_value(double(x), c);
      // delta_Y scales the reference derivative too.
      double d_std = fn.std_derivative(double(x), c) * double(seed_delta);
      double fwd_rel = f_std != 0.0 ? (double(f_pa) - f_std) / f_std : 0.0;
      double ex_rel = d_std != 0.0 ? (d_exact - d_std) / d_std : 0.0;
      double ap_rel = d_std != 0.0 ? (d_approx - d_std) / d_std : 0.0;
      std::snprintf(buf, sizeof buf,
                    "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,0\n", fn.name,
                    double(x), f_std, double(f_pa), fwd_rel, d_std, d_exact, d_approx,
                    ex_rel, ap_rel);
      os << buf;
    }
  }
  return os.str();
}

}  // namespace palh
