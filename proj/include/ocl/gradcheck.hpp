#pragma once

#include <string>
#include <vector>

#include "ocl/common.hpp"

namespace ocl {

struct GradCheckOptions {
  uint64_t seed = 20240601;
  int instances = 20;
  double h = 1e-5;
  double tol = 1e-4;
  // Test hook: adds a constant to this op's analytic gradient so the
  // negative-control path (nonzero exit naming the op) can be exercised.
  std::string corrupt_op;
};

struct GradCheckCase {
  std::string op;
  double max_rel_err = 0.0;
  int instances = 0;
  uint64_t worst_seed = 0;
  bool pass = false;
};

// Central finite differences against the analytic gradients of every loss
// op and the pooling head. Instances are drawn small (d <= 16, B <= 8,
// M <= 8) and redrawn when they sit too close to a mining tie or hinge
// boundary for the step size h.
std::vector<GradCheckCase> run_gradcheck(const GradCheckOptions& opts);

bool gradcheck_all_pass(const std::vector<GradCheckCase>& cases);
std::string gradcheck_report(const std::vector<GradCheckCase>& cases);

}  // namespace ocl
