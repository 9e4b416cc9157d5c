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

#include "metacpo/plot.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace metacpo {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finalize() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

class Canvas {
 public:
  Canvas(Range x, Range y) : x_(x), y_(y) {}
  double px(double v) const { return kLeft + (v - x_.lo) / (x_.hi - x_.lo) * (kWidth - kLeft - kRight); }
  double py(double v) const {
    return kHeight - kBottom - (v - y_.lo) / (y_.hi - y_.lo) * (kHeight - kTop - kBottom);
  }
  std::string polyline(const std::vector<std::pair<double, double>>& pts, const std::string& style) const {
    std::string d;
    for (const auto& [x, y] : pts) {
      if (!std::isfinite(y)) continue;
      d += fmt::format("{:.2f},{:.2f} ", px(x), py(y));
    }
    return fmt::format("<polyline fill=\"none\" {} points=\"{}\"/>\n", style, d);
  }

 private:
  Range x_, y_;
};

std::string axes(const Canvas& c, const Range& x, const Range& y, const std::string& title,
                 const std::string& ylabel) {
  std::string s;
  s += fmt::format("<text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
                   kWidth / 2, escape(title));
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
                   kLeft, kTop, kWidth - kLeft - kRight, kHeight - kTop - kBottom);
  for (int i = 0; i <= 4; ++i) {
    const double xv = x.lo + (x.hi - x.lo) * i / 4.0;
    const double yv = y.lo + (y.hi - y.lo) * i / 4.0;
    s += fmt::format("<text x=\"{:.2f}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{:.4g}</text>\n",
                     c.px(xv), kHeight - kBottom + 16, xv);
    s += fmt::format("<text x=\"{}\" y=\"{:.2f}\" font-size=\"11\" text-anchor=\"end\">{:.4g}</text>\n",
                     kLeft - 6, c.py(yv) + 4, yv);
    s += fmt::format("<line x1=\"{}\" x2=\"{}\" y1=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#ddd\"/>\n", kLeft,
                     kWidth - kRight, c.py(yv), c.py(yv));
  }
  s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">meta iteration</text>\n",
                   kWidth / 2, kHeight - 12);
  s += fmt::format(
      "<text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
      kHeight / 2, kHeight / 2, escape(ylabel));
  return s;
}

}  // namespace

std::string render_panel(const std::vector<Series>& series, Panel panel) {
  const bool cost = panel == Panel::kCost;
  Range x, y;
  for (const auto& s : series) {
    for (const auto& r : s.rows) {
      x.add(r.iteration);
      if (cost) {
        y.add(r.mean_cost_adapted);
        y.add(r.cost_limit);
      } else {
        y.add(r.mean_return_adapted);
        y.add(r.mean_return_zero_shot);
      }
    }
  }
  x.finalize();
  y.finalize();
  const Canvas c(x, y);
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      kWidth, kHeight);
  svg += axes(c, x, y, cost ? "Average cost" : "Average return", cost ? "cost" : "return");
  double legend_y = kTop + 16;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const std::string color = kColors[i % std::size(kColors)];
    std::vector<std::pair<double, double>> main, aux, limit;
    for (const auto& r : s.rows) {
      main.emplace_back(r.iteration, cost ? r.mean_cost_adapted : r.mean_return_adapted);
      aux.emplace_back(r.iteration, r.mean_return_zero_shot);
      limit.emplace_back(r.iteration, r.cost_limit);
    }
    if (cost) {
      svg += c.polyline(limit, fmt::format("stroke=\"{}\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\" "
                                           "class=\"cost-limit\"", color));
    } else {
      svg += c.polyline(aux, fmt::format("stroke=\"{}\" stroke-width=\"1\" stroke-opacity=\"0.35\"", color));
    }
    svg += c.polyline(main, fmt::format("stroke=\"{}\" stroke-width=\"2\"", color));
    svg += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{}\">{}</text>\n", kLeft + 8,
                       legend_y, color, escape(s.label));
    legend_y += 16;
  }
  if (cost) {
    svg += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"#444\">dashed: cost limit</text>\n",
                       kLeft + 8, legend_y);
  } else {
    svg += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"#444\">faint: zero-shot</text>\n",
                       kLeft + 8, legend_y);
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<std::string> write_plots(const std::vector<Series>& series, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> paths;
  for (const auto& [panel, name] : {std::pair{Panel::kReturn, "return.svg"}, std::pair{Panel::kCost, "cost.svg"}}) {
    const std::string path = (std::filesystem::path(out_dir) / name).string();
    std::ofstream out(path, std::ios::trunc);
    out << render_panel(series, panel);
    if (!out.flush()) throw std::runtime_error("plot: cannot write '" + path + "'");
    paths.push_back(path);
  }
  return paths;
}

}  // namespace metacpo
