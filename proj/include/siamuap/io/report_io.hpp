#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "siamuap/eval.hpp"
#include "siamuap/io/artifact_io.hpp"

namespace siamuap::io {

namespace detail {

template <typename V>
void put_optional(json& j, const char* key, const std::optional<V>& v) {
  if (v) j[key] = *v;
}

template <typename V>
void get_optional(const json& j, const char* key, std::optional<V>& v) {
  if (j.contains(key) && !j.at(key).is_null()) v = j.at(key).get<V>();
}

}  // namespace detail

inline json to_json(const SequenceMetrics& m) {
  json j{{"name", m.name},
         {"ao_real", m.ao_real},
         {"sr_real", m.sr_real},
         {"precision_real", m.precision_real},
         {"norm_precision_real", m.norm_precision_real}};
  detail::put_optional(j, "ao_fake", m.ao_fake);
  detail::put_optional(j, "sr_fake", m.sr_fake);
  detail::put_optional(j, "precision_fake", m.precision_fake);
  detail::put_optional(j, "norm_precision_fake", m.norm_precision_fake);
  detail::put_optional(j, "robustness_failures", m.robustness_failures);
  detail::put_optional(j, "robustness_frames", m.robustness_frames);
  detail::put_optional(j, "accuracy", m.accuracy);
  detail::put_optional(j, "ssim_template", m.ssim_template);
  detail::put_optional(j, "ssim_patch_region", m.ssim_patch_region);
  return j;
}

inline SequenceMetrics sequence_metrics_from_json(const json& j) {
  SequenceMetrics m;
  m.name = j.at("name").get<std::string>();
  m.ao_real = j.at("ao_real").get<double>();
  m.sr_real = j.at("sr_real").get<double>();
  m.precision_real = j.at("precision_real").get<double>();
  m.norm_precision_real = j.at("norm_precision_real").get<double>();
  detail::get_optional(j, "ao_fake", m.ao_fake);
  detail::get_optional(j, "sr_fake", m.sr_fake);
  detail::get_optional(j, "precision_fake", m.precision_fake);
  detail::get_optional(j, "norm_precision_fake", m.norm_precision_fake);
  detail::get_optional(j, "robustness_failures", m.robustness_failures);
  detail::get_optional(j, "robustness_frames", m.robustness_frames);
  detail::get_optional(j, "accuracy", m.accuracy);
  detail::get_optional(j, "ssim_template", m.ssim_template);
  detail::get_optional(j, "ssim_patch_region", m.ssim_patch_region);
  return m;
}

inline json to_json(const RunRecord& r) {
  json j{{"label", r.label}, {"metadata", r.metadata}, {"sequences", json::array()}};
  detail::put_optional(j, "iteration", r.iteration);
  detail::put_optional(j, "patch_size", r.patch_size);
  for (const auto& s : r.sequences) j["sequences"].push_back(to_json(s));
  return j;
}

inline RunRecord run_record_from_json(const json& j) {
  RunRecord r;
  r.label = j.at("label").get<std::string>();
  if (j.contains("metadata")) r.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
  detail::get_optional(j, "iteration", r.iteration);
  detail::get_optional(j, "patch_size", r.patch_size);
  for (const auto& s : j.at("sequences")) r.sequences.push_back(sequence_metrics_from_json(s));
  return r;
}

inline RunRecord load_run_record(const fs::path& path) {
  const json j = read_json(path);
  try {
    return run_record_from_json(j.contains("run") ? j.at("run") : j);
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

inline json to_json(const Aggregate& a) {
  json j{{"ao_real", a.ao_real},
         {"sr_real", a.sr_real},
         {"precision_real", a.precision_real},
         {"norm_precision_real", a.norm_precision_real}};
  detail::put_optional(j, "ao_fake", a.ao_fake);
  detail::put_optional(j, "sr_fake", a.sr_fake);
  detail::put_optional(j, "precision_fake", a.precision_fake);
  detail::put_optional(j, "norm_precision_fake", a.norm_precision_fake);
  detail::put_optional(j, "robustness_failures", a.robustness_failures);
  detail::put_optional(j, "robustness_per_sequence", a.robustness_per_sequence);
  detail::put_optional(j, "robustness_per_100_frames", a.robustness_per_100_frames);
  detail::put_optional(j, "accuracy", a.accuracy);
  detail::put_optional(j, "ssim_template", a.ssim_template);
  detail::put_optional(j, "ssim_patch_region", a.ssim_patch_region);
  return j;
}

inline json to_json(const EvalReport& r) { return {{"run", to_json(r.run)}, {"aggregate", to_json(r.aggregate)}}; }

namespace detail {

inline std::string cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", *v);
  return buf;
}

inline std::string cell(double v) { return cell(std::optional<double>{v}); }

}  // namespace detail

// Key/value header per run followed by per-sequence rows.
inline std::string render_text(const std::vector<EvalReport>& reports) {
  std::string out;
  for (const auto& r : reports) {
    const auto& a = r.aggregate;
    out += "run: " + r.run.label + "\n";
    for (const auto& [k, v] : r.run.metadata) out += "  " + k + ": " + v + "\n";
    if (r.run.iteration) out += "  iteration: " + std::to_string(*r.run.iteration) + "\n";
    if (r.run.patch_size) out += "  patch_size: " + std::to_string(*r.run.patch_size) + "\n";
    out += "  sequences: " + std::to_string(r.run.sequences.size()) + "\n";
    out += "  ao_real: " + detail::cell(a.ao_real) + "\n";
    out += "  sr_real: " + detail::cell(a.sr_real) + "\n";
    out += "  precision_real: " + detail::cell(a.precision_real) + "\n";
    out += "  norm_precision_real: " + detail::cell(a.norm_precision_real) + "\n";
    if (a.ao_fake) {
      out += "  ao_fake: " + detail::cell(a.ao_fake) + "\n";
      out += "  sr_fake: " + detail::cell(a.sr_fake) + "\n";
      out += "  precision_fake: " + detail::cell(a.precision_fake) + "\n";
      out += "  norm_precision_fake: " + detail::cell(a.norm_precision_fake) + "\n";
    }
    if (a.robustness_failures) {
      out += "  robustness_failures: " + std::to_string(*a.robustness_failures) + "\n";
      out += "  robustness_per_100_frames: " + detail::cell(a.robustness_per_100_frames) + "\n";
      out += "  accuracy: " + detail::cell(a.accuracy) + "\n";
    }
    if (a.ssim_template) out += "  ssim_template: " + detail::cell(a.ssim_template) + "\n";
    if (a.ssim_patch_region) out += "  ssim_patch_region: " + detail::cell(a.ssim_patch_region) + "\n";
    char head[160];
    std::snprintf(head, sizeof(head), "  %-16s %7s %7s %7s %7s %7s %7s %5s\n", "sequence", "ao", "sr", "prec",
                  "nprec", "ao_fk", "sr_fk", "fail");
    out += head;
    for (const auto& s : r.run.sequences) {
      char row[200];
      std::snprintf(row, sizeof(row), "  %-16s %7s %7s %7s %7s %7s %7s %5s\n", s.name.c_str(),
                    detail::cell(s.ao_real).c_str(), detail::cell(s.sr_real).c_str(),
                    detail::cell(s.precision_real).c_str(), detail::cell(s.norm_precision_real).c_str(),
                    detail::cell(s.ao_fake).c_str(), detail::cell(s.sr_fake).c_str(),
                    s.robustness_failures ? std::to_string(*s.robustness_failures).c_str() : "-");
      out += row;
    }
    out += "\n";
  }
  return out;
}

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
  cv::Scalar color;
};

// Minimal line chart on a white canvas; y spans [0, 1].
inline void render_plot(const std::vector<PlotSeries>& series, const std::string& title, const std::string& x_label,
                        const fs::path& path, bool log2_x = false) {
  const int w = 640, h = 420, left = 60, right = 150, top = 40, bottom = 50;
  cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  auto tx = [&](double v) { return log2_x ? std::log2(std::max(v, 1.0)) : v; };
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, tx(x));
      xmax = std::max(xmax, tx(x));
    }
  }
  if (!std::isfinite(xmin)) return;
  if (xmax == xmin) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  const int pw = w - left - right, ph = h - top - bottom;
  auto px = [&](double x) { return left + static_cast<int>(std::lround((tx(x) - xmin) / (xmax - xmin) * pw)); };
  auto py = [&](double y) { return top + static_cast<int>(std::lround((1.0 - std::clamp(y, 0.0, 1.0)) * ph)); };
  const cv::Scalar ink(40, 40, 40), grid(220, 220, 220);
  for (int k = 0; k <= 4; ++k) {
    const int y = py(k / 4.0);
    cv::line(img, {left, y}, {left + pw, y}, grid, 1);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", k / 4.0);
    cv::putText(img, buf, {8, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, ink, 1, cv::LINE_AA);
  }
  cv::rectangle(img, {left, top}, {left + pw, top + ph}, ink, 1);
  cv::putText(img, title, {left, 24}, cv::FONT_HERSHEY_SIMPLEX, 0.55, ink, 1, cv::LINE_AA);
  cv::putText(img, x_label, {left + pw / 2 - 40, h - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45, ink, 1, cv::LINE_AA);
  int legend_y = top + 12;
  for (const auto& s : series) {
    auto pts = s.points;
    std::sort(pts.begin(), pts.end());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const cv::Point p{px(pts[i].first), py(pts[i].second)};
      cv::circle(img, p, 3, s.color, cv::FILLED, cv::LINE_AA);
      if (i > 0) cv::line(img, {px(pts[i - 1].first), py(pts[i - 1].second)}, p, s.color, 2, cv::LINE_AA);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%g", pts[i].first);
      cv::putText(img, buf, {p.x - 10, top + ph + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.35, ink, 1, cv::LINE_AA);
    }
    cv::line(img, {left + pw + 10, legend_y - 4}, {left + pw + 30, legend_y - 4}, s.color, 2, cv::LINE_AA);
    cv::putText(img, s.name, {left + pw + 36, legend_y}, cv::FONT_HERSHEY_SIMPLEX, 0.4, ink, 1, cv::LINE_AA);
    legend_y += 18;
  }
  if (!cv::imwrite(path.string(), img)) throw std::runtime_error("cannot write " + path.string());
}

struct ReportFiles {
  fs::path json_path;
  fs::path text_path;
  std::vector<fs::path> plots;
};

// Aggregates the runs and writes report.json, report.txt and the AO plots
// for whichever of iteration / patch size the runs carry.
inline ReportFiles write_report(const std::vector<RunRecord>& runs, const fs::path& dir) {
  const std::vector<EvalReport> reports = make_report(runs);
  fs::create_directories(dir);
  ReportFiles files;
  json j = json::array();
  for (const auto& r : reports) j.push_back(to_json(r));
  files.json_path = dir / "report.json";
  write_json(j, files.json_path);
  files.text_path = dir / "report.txt";
  std::ofstream(files.text_path) << render_text(reports);

  auto series_by = [&](auto key) {
    PlotSeries real{"AO real", {}, cv::Scalar(180, 100, 30)};
    PlotSeries fake{"AO fake", {}, cv::Scalar(40, 40, 200)};
    for (const auto& r : reports) {
      const std::optional<int> x = key(r.run);
      if (!x) continue;
      real.points.emplace_back(*x, r.aggregate.ao_real);
      if (r.aggregate.ao_fake) fake.points.emplace_back(*x, *r.aggregate.ao_fake);
    }
    std::vector<PlotSeries> out;
    if (!real.points.empty()) out.push_back(real);
    if (!fake.points.empty()) out.push_back(fake);
    return out;
  };
  const auto by_iter = series_by([](const RunRecord& r) { return r.iteration; });
  if (!by_iter.empty()) {
    files.plots.push_back(dir / "ao_vs_iterations.png");
    render_plot(by_iter, "AO vs training iterations", "iterations (log2)", files.plots.back(), true);
  }
  const auto by_patch = series_by([](const RunRecord& r) { return r.patch_size; });
  if (!by_patch.empty()) {
    files.plots.push_back(dir / "ao_vs_patch_size.png");
    render_plot(by_patch, "AO vs patch size", "patch side (px)", files.plots.back());
  }
  return files;
}

}  // namespace siamuap::io
