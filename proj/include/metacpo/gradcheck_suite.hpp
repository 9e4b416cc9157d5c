// Copyright 2026 The MetaCPO Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace metacpo {

struct GradcheckRow {
  std::string name;
  /// Largest relative error over every checked entry.
  double rel_error = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string note;
};

/// Finite-difference checks on built-in problems:
///   qp/*      qp_backward on planted strictly convex QPs (n ≤ 10, m ≤ 5, p ≤ 3)
///   trust/*   trust_region_backward in each step case
///   meta/*    full-mode meta gradients on the synthetic family, K = 1 and 2
/// Each row compares against central differences with ε = `eps`.
std::vector<GradcheckRow> run_gradcheck_suite(std::uint64_t seed = 0, double threshold = 1e-4,
                                              double eps = 1e-6);

std::string format_gradcheck_table(const std::vector<GradcheckRow>& rows);

}  // namespace metacpo
