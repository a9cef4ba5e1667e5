#include "streamrec/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "streamrec/errors.hpp"

namespace streamrec {

GradCheckReport grad_check(const ObjectiveFn& fn, ParamStore& params,
                           double step, double tol,
                           const std::vector<std::string>& subset) {
  GradStore analytic;
  const double f0 = fn(params, &analytic);
  if (!std::isfinite(f0))
    throw NumericError("grad_check: objective is non-finite at the base point");

  GradCheckReport report;
  for (auto& [name, p] : params) {
    if (!subset.empty() &&
        std::find(subset.begin(), subset.end(), name) == subset.end())
      continue;
    GradCheckEntry entry;
    entry.param = name;
    auto git = analytic.grads.find(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.data[i];
      p.data[i] = saved + step;
      const double fp = fn(params, nullptr);
      p.data[i] = saved - step;
      const double fm = fn(params, nullptr);
      p.data[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad_check: non-finite objective while perturbing " +
                           name + "[" + std::to_string(i) + "]");
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = git != analytic.grads.end() ? git->second.data[i] : 0.0;
      const double abs_err = std::abs(a - numeric);
      const double rel_err =
          abs_err / std::max({std::abs(a), std::abs(numeric), 1e-3});
      if (rel_err >= entry.max_rel_err) {
        entry.max_rel_err = rel_err;
        entry.max_abs_err = abs_err;
        entry.worst_coord = i;
        entry.analytic_at_worst = a;
        entry.numeric_at_worst = numeric;
      }
    }
    report.entries.push_back(std::move(entry));
  }

  std::sort(report.entries.begin(), report.entries.end(),
            [](const GradCheckEntry& a, const GradCheckEntry& b) {
              return a.max_rel_err > b.max_rel_err;
            });
  if (!report.entries.empty()) {
    report.worst_rel_err = report.entries.front().max_rel_err;
    report.worst_param = report.entries.front().param;
  }
  (void)tol;
  return report;
}

void print_report(const GradCheckReport& report, std::ostream& os) {
  os << std::left << std::setw(28) << "parameter" << std::right
     << std::setw(14) << "max_rel_err" << std::setw(14) << "max_abs_err"
     << std::setw(14) << "analytic" << std::setw(14) << "numeric" << "\n";
  for (const auto& e : report.entries) {
    os << std::left << std::setw(28) << e.param << std::right
       << std::setw(14) << std::scientific << std::setprecision(3)
       << e.max_rel_err << std::setw(14) << e.max_abs_err << std::setw(14)
       << e.analytic_at_worst << std::setw(14) << e.numeric_at_worst << "\n";
  }
  os.unsetf(std::ios::scientific);
}

}  // namespace streamrec
