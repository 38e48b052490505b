// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Finite-difference verification of every differentiable component, run at
// double precision (central differences, h = 1e-5). Relative error uses a
// 1e-3 floor in the denominator so near-zero gradients are compared
// absolutely at the fd noise scale.

#pragma once

#include <string>
#include <vector>

namespace cse {

struct GradcheckOptions {
  uint64_t seed = 1;
  int probes = 100;      // per component
  double h = 1e-5;
  double tolerance = 1e-4;
  // Fault-injection hook: scales the analytic gradient of the named
  // component by 1.01, which must make exactly that component fail.
  std::string corrupt_component;
};

struct GradcheckResult {
  std::string component;
  double max_rel_err = 0.0;
  int probes = 0;
  bool pass = false;
};

std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& options);

}  // namespace cse
