#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "copl/gradcheck.hpp"

namespace copl {

struct GradSuiteOptions {
  int instances = 20;
  Scalar h = 1e-5;
  Scalar tolerance = 1e-5;
  std::uint64_t seed = 2024;
  // Test fixture: negates the reported alignment-weight gradient so the
  // detector itself can be exercised.
  bool inject_alignment_sign_flip = false;
};

struct GradSuiteResult {
  bool pass = false;
  double worst_rel_error = 0.0;
  std::string worst_param;  // e.g. "end_to_end[3]/U1"
  int instances_run = 0;
  std::vector<std::string> parameter_groups;  // distinct group names seen
  std::vector<std::pair<std::string, GradCheckReport>> reports;
};

/// Finite-difference verification of every hand-derived backward pass:
/// the text encoder input gradient, the meta net, both conditioners, and
/// the end-to-end loss gradient for all six learnable groups, each on
/// seeded random small instances (K <= 3, M <= 4, P <= 6, d <= 8).
GradSuiteResult run_gradcheck_suite(const GradSuiteOptions& options);

}  // namespace copl
