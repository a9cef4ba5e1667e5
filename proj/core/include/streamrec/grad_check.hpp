#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "streamrec/param_store.hpp"

namespace streamrec {

// Scalar objective over a ParamStore. When `grads` is non-null the function
// must also return analytic gradients for every parameter it consumed. The
// function must be deterministic: any internal randomness has to come from a
// fixed seed captured by the closure.
using ObjectiveFn = std::function<double(const ParamStore&, GradStore*)>;

struct GradCheckEntry {
  std::string param;
  std::size_t worst_coord = 0;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;  // sorted worst-first
  double worst_rel_err = 0.0;
  std::string worst_param;

  bool passed(double tol) const { return worst_rel_err < tol; }
};

// Compares analytic gradients against central finite differences
// (f(p+h) - f(p-h)) / 2h for every coordinate of every parameter in `params`
// (or of `subset` when non-empty). The relative error denominator is
// max(|analytic|, |numeric|, 1e-3); the floor keeps finite-difference
// round-off on near-zero gradients from registering as spurious failures.
// Throws NumericError naming the parameter if the objective returns a
// non-finite value.
GradCheckReport grad_check(const ObjectiveFn& fn, ParamStore& params,
                           double step, double tol,
                           const std::vector<std::string>& subset = {});

void print_report(const GradCheckReport& report, std::ostream& os);

}  // namespace streamrec
