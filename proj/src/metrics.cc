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

#include "metacpo/metrics.hpp"

#include <filesystem>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace metacpo {

namespace {

std::string header_line() { return fmt::format("{}", fmt::join(metrics_columns(), ",")); }

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

MetricsRow parse_row(const std::string& line, int lineno) {
  const auto f = split(line);
  if (f.size() != metrics_columns().size()) {
    throw std::runtime_error(fmt::format("metrics: line {} has {} fields, expected {}", lineno,
                                         f.size(), metrics_columns().size()));
  }
  try {
    MetricsRow r;
    std::size_t i = 0;
    r.iteration = std::stoi(f[i++]);
    r.mean_return_adapted = std::stod(f[i++]);
    r.mean_cost_adapted = std::stod(f[i++]);
    r.cost_limit = std::stod(f[i++]);
    r.mean_return_zero_shot = std::stod(f[i++]);
    r.mean_cost_zero_shot = std::stod(f[i++]);
    r.meta_step_case = f[i++];
    r.backtracks = std::stoi(f[i++]);
    r.dF_norm = std::stod(f[i++]);
    r.dG_norm = std::stod(f[i++]);
    r.wall_time_s = std::stod(f[i++]);
    return r;
  } catch (const std::logic_error&) {
    throw std::runtime_error(fmt::format("metrics: malformed value on line {}", lineno));
  }
}

}  // namespace

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> kColumns = {
      "iteration",      "mean_return_adapted",   "mean_cost_adapted",
      "cost_limit",     "mean_return_zero_shot", "mean_cost_zero_shot",
      "meta_step_case", "backtracks",            "dF_norm",
      "dG_norm",        "wall_time_s"};
  return kColumns;
}

MetricsRow metrics_row(int iteration, const MetaIteration& it, double wall_time_s) {
  MetricsRow r;
  r.iteration = iteration;
  r.mean_return_adapted = it.mean_return_adapted;
  r.mean_cost_adapted = it.mean_cost_adapted;
  r.cost_limit = it.cost_limit;
  r.mean_return_zero_shot = it.mean_return_zero_shot;
  r.mean_cost_zero_shot = it.mean_cost_zero_shot;
  r.meta_step_case = it.step.info.degenerate ? "degenerate" : to_string(it.step.info.step_case);
  r.backtracks = it.step.info.backtracks;
  r.dF_norm = it.grad.dF.size() ? it.grad.dF.norm() : 0.0;
  r.dG_norm = it.grad.dG.size() ? it.grad.dG.norm() : 0.0;
  r.wall_time_s = wall_time_s;
  return r;
}

std::string format_metrics_row(const MetricsRow& r) {
  return fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{},{:.17g},{:.17g},{:.17g}",
                     r.iteration, r.mean_return_adapted, r.mean_cost_adapted, r.cost_limit,
                     r.mean_return_zero_shot, r.mean_cost_zero_shot, r.meta_step_case,
                     r.backtracks, r.dF_norm, r.dG_norm, r.wall_time_s);
}

MetricsWriter::MetricsWriter(const std::string& path, int keep_before) : path_(path) {
  std::vector<MetricsRow> kept;
  if (keep_before > 0 && std::filesystem::exists(path)) {
    for (const auto& r : read_metrics(path)) {
      if (r.iteration < keep_before) kept.push_back(r);
    }
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("metrics: cannot write '" + tmp + "'");
    out << header_line() << '\n';
    for (const auto& r : kept) out << format_metrics_row(r) << '\n';
    if (!out.flush()) throw std::runtime_error("metrics: write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("metrics: cannot move into place '" + path + "'");
  out_.open(path, std::ios::app);
  if (!out_) throw std::runtime_error("metrics: cannot append to '" + path + "'");
}

void MetricsWriter::write(const MetricsRow& row) {
  out_ << format_metrics_row(row) << '\n';
  out_.flush();
  if (!out_) throw std::runtime_error("metrics: write failed for '" + path_ + "'");
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("metrics: cannot read '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != header_line()) {
    throw std::runtime_error("metrics: '" + path + "' does not start with the metrics header");
  }
  std::vector<MetricsRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    rows.push_back(parse_row(line, lineno));
  }
  return rows;
}

}  // namespace metacpo
