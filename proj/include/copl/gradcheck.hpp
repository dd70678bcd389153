#pragma once

#include <functional>
#include <string>
#include <vector>

#include "copl/numerics.hpp"

namespace copl {

/// Mutable view of one named parameter group (a flat span of doubles).
/// The checker perturbs entries in place and re-evaluates the objective,
/// so the view must alias the storage the objective actually reads.
struct ParamRef {
  std::string name;
  Scalar* data;
  Index size;
};

inline ParamRef param_ref(std::string name, Matrix& m) {
  return ParamRef{std::move(name), m.data(), m.size()};
}
inline ParamRef param_ref(std::string name, Vector& v) {
  return ParamRef{std::move(name), v.data(), v.size()};
}

/// Flattens a matrix (row-major) or vector into a plain coefficient vector,
/// matching the entry order grad_check walks.
inline Vector flatten(const Matrix& m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}
inline Vector flatten(const Vector& v) { return v; }

struct GradCheckReport {
  struct Group {
    std::string name;
    double max_rel_error = 0.0;
  };
  std::vector<Group> groups;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;

  const Group& worst() const;
};

/// Central-difference gradient check: compares analytic gradients against
/// (f(w+h) - f(w-h)) / 2h entrywise, with relative error
/// |a - n| / max(|a|, |n|, 1e-8). Throws "non-finite objective" if any
/// probe evaluates non-finite.
GradCheckReport grad_check(const std::function<Scalar()>& objective,
                           const std::vector<ParamRef>& params,
                           const std::vector<Vector>& analytic_grads,
                           Scalar h, Scalar tolerance);

}  // namespace copl
