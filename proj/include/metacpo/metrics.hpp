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

#include <fstream>
#include <string>
#include <vector>

#include "metacpo/meta_cpo.hpp"

namespace metacpo {

struct MetricsRow {
  int iteration = 0;
  double mean_return_adapted = 0.0;
  double mean_cost_adapted = 0.0;
  double cost_limit = 0.0;
  double mean_return_zero_shot = 0.0;
  double mean_cost_zero_shot = 0.0;
  /// feasible, recovery, unconstrained or degenerate.
  std::string meta_step_case;
  int backtracks = 0;
  double dF_norm = 0.0;
  double dG_norm = 0.0;
  double wall_time_s = 0.0;
};

const std::vector<std::string>& metrics_columns();

MetricsRow metrics_row(int iteration, const MetaIteration& it, double wall_time_s = 0.0);

/// Appends rows to a metrics CSV, one flushed line per row. Opening keeps the
/// rows of an existing file whose iteration is below `keep_before` (so a
/// resumed run continues where its checkpoint left off) and always leaves a
/// header in place. Throws std::runtime_error on IO failure or on an existing
/// file with a different header.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path, int keep_before = 0);
  void write(const MetricsRow& row);

 private:
  std::string path_;
  std::ofstream out_;
};

/// Throws std::runtime_error on a missing file, a wrong header or a
/// malformed row.
std::vector<MetricsRow> read_metrics(const std::string& path);

std::string format_metrics_row(const MetricsRow& row);

}  // namespace metacpo
