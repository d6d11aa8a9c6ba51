#pragma once

// Finite-difference checks of every differentiable component, run by the
// `gradcheck` command and the test suite.

#include <cstdint>
#include <string>
#include <vector>

#include "ent/numerics.hpp"

namespace ent {

struct GradcheckOptions {
  Index hidden_dim = 4;
  Index feature_dim = 3;
  Index vocab_size = 3;
  Index emotion_count = 3;
  Index frames = 3;
  Index targets = 2;
  double eps = 1e-5;
  double tolerance = 1e-4;
};

struct GradcheckRow {
  std::string name;
  GradCheckResult result;
  bool passed = false;
};

// With `inject_bug` the analytic bias gradient of the linear layer is halved,
// which the suite must report as a failure.
std::vector<GradcheckRow> run_gradcheck_suite(const GradcheckOptions& options, std::uint64_t seed,
                                              bool inject_bug = false);

bool all_passed(const std::vector<GradcheckRow>& rows);
std::string format_gradcheck_table(const std::vector<GradcheckRow>& rows);

}  // namespace ent
