#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "siamuap/dataset.hpp"
#include "siamuap/errors.hpp"
#include "siamuap/geometry.hpp"
#include "siamuap/image.hpp"
#include "siamuap/synthetic.hpp"

namespace siamuap::io {

namespace fs = std::filesystem;

inline constexpr const char* kGroundTruthFile = "groundtruth.txt";

inline Frame read_frame(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw LoadError("cannot read image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Frame f(rgb.rows, rgb.cols, 3);
  for (int y = 0; y < rgb.rows; ++y) {
    std::copy_n(rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3, &f(y, 0, 0));
  }
  return f;
}

inline void write_frame(const Frame& f, const fs::path& path) {
  if (f.channels() != 3 && f.channels() != 1) throw std::invalid_argument("write_frame: need 1 or 3 channels");
  cv::Mat m(f.height(), f.width(), f.channels() == 3 ? CV_8UC3 : CV_8UC1,
            const_cast<std::uint8_t*>(f.data().data()));
  cv::Mat out;
  if (f.channels() == 3) {
    cv::cvtColor(m, out, cv::COLOR_RGB2BGR);
  } else {
    out = m;
  }
  if (!cv::imwrite(path.string(), out)) throw std::runtime_error("cannot write image " + path.string());
}

// Shortest decimal text that parses back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_box_line(const Box& b) {
  return format_number(b.x0) + "," + format_number(b.y0) + "," + format_number(b.width()) + "," +
         format_number(b.height());
}

// Parses "x,y,w,h" into (x, y, x+w, y+h).
inline Box parse_box_line(const std::string& line) {
  double v[4];
  const char* p = line.data();
  const char* end = line.data() + line.size();
  for (int i = 0; i < 4; ++i) {
    while (p < end && (*p == ' ' || *p == '\t')) ++p;
    const auto res = std::from_chars(p, end, v[i]);
    if (res.ec != std::errc{}) throw LoadError("malformed box line '" + line + "'");
    p = res.ptr;
    while (p < end && (*p == ' ' || *p == '\t')) ++p;
    if (i < 3) {
      if (p == end || *p != ',') throw LoadError("malformed box line '" + line + "'");
      ++p;
    }
  }
  while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
  if (p != end) throw LoadError("malformed box line '" + line + "'");
  return Box::from_xywh(v[0], v[1], v[2], v[3]);
}

inline std::vector<Box> read_trajectory(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<Box> boxes;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    try {
      boxes.push_back(parse_box_line(line));
    } catch (const LoadError& e) {
      throw LoadError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  if (boxes.empty()) throw LoadError(path.string() + " holds no boxes");
  return boxes;
}

inline void write_trajectory(const std::vector<Box>& boxes, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const Box& b : boxes) out << format_box_line(b) << '\n';
}

inline bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

// Frame file paths of a sequence directory in lexicographic order.
inline std::vector<fs::path> list_frames(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct SequenceRecord {
  std::string name;
  std::vector<fs::path> frame_paths;
  std::vector<Box> boxes;
  Size frame_size;
};

using Warning = std::function<void(const std::string&)>;

// Reads the file list and annotations without decoding every frame.
inline SequenceRecord read_sequence_record(const fs::path& dir, const Warning& warn = {}) {
  if (!fs::is_directory(dir)) throw LoadError(dir.string() + " is not a directory");
  SequenceRecord r;
  r.name = dir.filename().string();
  const fs::path gt = dir / kGroundTruthFile;
  if (!fs::exists(gt)) throw LoadError(dir.string() + " has no " + kGroundTruthFile);
  r.boxes = read_trajectory(gt);
  r.frame_paths = list_frames(dir);
  if (r.frame_paths.size() != r.boxes.size()) {
    throw LoadError(dir.string() + ": " + std::to_string(r.frame_paths.size()) + " frames but " +
                    std::to_string(r.boxes.size()) + " ground-truth lines");
  }
  const Frame first = read_frame(r.frame_paths.front());
  r.frame_size = {first.width(), first.height()};
  for (std::size_t i = 0; i < r.boxes.size(); ++i) {
    const Box& b = r.boxes[i];
    if (!b.valid()) throw LoadError(dir.string() + ": box " + std::to_string(i + 1) + " has no area");
    if (warn && (b.x0 < 0.0 || b.y0 < 0.0 || b.x1 > r.frame_size.width || b.y1 > r.frame_size.height)) {
      warn(dir.string() + ": box " + std::to_string(i + 1) + " extends past the frame");
    }
  }
  return r;
}

inline Sequence load_sequence(const fs::path& dir, const Warning& warn = {}) {
  const SequenceRecord r = read_sequence_record(dir, warn);
  Sequence s;
  s.name = r.name;
  s.boxes = r.boxes;
  s.frames.reserve(r.frame_paths.size());
  for (const auto& p : r.frame_paths) {
    s.frames.push_back(read_frame(p));
    if (s.frames.back().width() != r.frame_size.width || s.frames.back().height() != r.frame_size.height) {
      throw LoadError(p.string() + " differs in size from the first frame");
    }
  }
  return s;
}

inline bool is_sequence_dir(const fs::path& dir) { return fs::exists(dir / kGroundTruthFile); }

// A single sequence directory or a root whose subdirectories are sequences,
// loaded in name order.
inline Dataset load_dataset(const fs::path& root, const Warning& warn = {}) {
  if (is_sequence_dir(root)) return {load_sequence(root, warn)};
  if (!fs::is_directory(root)) throw LoadError(root.string() + " is not a directory");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && is_sequence_dir(e.path())) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw LoadError(root.string() + " contains no sequences");
  Dataset out;
  for (const auto& d : dirs) out.push_back(load_sequence(d, warn));
  return out;
}

inline std::string frame_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%08zu.png", index + 1);
  return buf;
}

inline void write_sequence(const Sequence& s, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < s.frames.size(); ++i) write_frame(s.frames[i], dir / frame_file_name(i));
  write_trajectory(s.boxes, dir / kGroundTruthFile);
}

inline void write_dataset(const Dataset& data, const fs::path& root) {
  for (const auto& s : data) write_sequence(s, root / s.name);
}

// Writes n_sequences synthetic videos under root, one directory each.
inline void write_synthetic_dataset(const fs::path& root, std::uint64_t seed, int n_sequences,
                                    const SyntheticConfig& cfg = {}) {
  write_dataset(make_synthetic_dataset(seed, n_sequences, cfg), root);
}

}  // namespace siamuap::io
