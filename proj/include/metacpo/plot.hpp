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

#include <string>
#include <vector>

#include "metacpo/metrics.hpp"

namespace metacpo {

struct Series {
  std::string label;
  std::vector<MetricsRow> rows;
};

enum class Panel { kReturn, kCost };

/// Standalone SVG learning curve over meta iterations. The return panel
/// draws adapted (solid) and zero-shot (faint) returns; the cost panel draws
/// adapted costs and the cost limit as a dashed line.
std::string render_panel(const std::vector<Series>& series, Panel panel);

/// Writes return.svg and cost.svg into `out_dir` (created if needed) and
/// returns their paths.
std::vector<std::string> write_plots(const std::vector<Series>& series, const std::string& out_dir);

}  // namespace metacpo
