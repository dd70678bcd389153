#include "copl/gradcheck.hpp"

#include <cmath>

namespace copl {

const GradCheckReport::Group& GradCheckReport::worst() const {
  if (groups.empty()) throw std::logic_error("empty gradient report");
  const Group* w = &groups.front();
  for (const Group& g : groups) {
    if (g.max_rel_error > w->max_rel_error) w = &g;
  }
  return *w;
}

GradCheckReport grad_check(const std::function<Scalar()>& objective,
                           const std::vector<ParamRef>& params,
                           const std::vector<Vector>& analytic_grads,
                           Scalar h, Scalar tolerance) {
  if (h <= 0.0) throw std::invalid_argument("step must be positive");
  if (params.size() != analytic_grads.size()) {
    throw std::invalid_argument("params/gradients count mismatch");
  }

  GradCheckReport report;
  report.tolerance = tolerance;

  for (std::size_t g = 0; g < params.size(); ++g) {
    const ParamRef& p = params[g];
    const Vector& analytic = analytic_grads[g];
    if (analytic.size() != p.size) {
      throw std::invalid_argument("gradient size mismatch for " + p.name);
    }

    GradCheckReport::Group group;
    group.name = p.name;
    for (Index i = 0; i < p.size; ++i) {
      const Scalar saved = p.data[i];
      p.data[i] = saved + h;
      const Scalar f_plus = objective();
      p.data[i] = saved - h;
      const Scalar f_minus = objective();
      p.data[i] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        throw std::runtime_error("non-finite objective");
      }
      const Scalar numeric = (f_plus - f_minus) / (2.0 * h);
      const Scalar a = analytic[i];
      const Scalar denom = std::max({std::abs(a), std::abs(numeric), Scalar(1e-8)});
      const Scalar rel = std::abs(a - numeric) / denom;
      if (rel > group.max_rel_error) group.max_rel_error = rel;
    }
    report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
    report.groups.push_back(std::move(group));
  }

  report.pass = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace copl
