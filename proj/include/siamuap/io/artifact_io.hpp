#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "siamuap/errors.hpp"
#include "siamuap/image.hpp"
#include "siamuap/perturb.hpp"
#include "siamuap/tracker.hpp"

namespace siamuap::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kPerturbationFormat = 1;
inline constexpr int kModelFormat = 1;

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

inline void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline std::uint32_t swap_bytes(std::uint32_t w) {
  return (w >> 24) | ((w >> 8) & 0xff00u) | ((w << 8) & 0xff0000u) | (w << 24);
}

// Raw little-endian float32 stream.
template <typename T>
void write_f32(const std::vector<T>& values, const fs::path& path) {
  std::vector<std::uint32_t> words(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::uint32_t w;
    std::memcpy(&w, &f, sizeof(w));
    if constexpr (std::endian::native == std::endian::big) w = swap_bytes(w);
    words[i] = w;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
}

template <typename T>
std::vector<T> read_f32(const fs::path& path, std::size_t expected) {
  std::error_code ec;
  const auto bytes = fs::file_size(path, ec);
  if (ec) throw LoadError("cannot open " + path.string());
  if (bytes != expected * 4) {
    throw LoadError(path.string() + " holds " + std::to_string(bytes) + " bytes, expected " +
                    std::to_string(expected * 4));
  }
  std::vector<std::uint32_t> words(expected);
  std::ifstream in(path, std::ios::binary);
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(expected * 4));
  if (!in) throw LoadError("short read from " + path.string());
  std::vector<T> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint32_t w = words[i];
    if constexpr (std::endian::native == std::endian::big) w = swap_bytes(w);
    float f;
    std::memcpy(&f, &w, sizeof(f));
    out[i] = static_cast<T>(f);
  }
  return out;
}

struct PerturbationMeta {
  std::string tracker_fingerprint;
  std::uint64_t seed = 0;
};

namespace detail {

template <typename T>
json shape_json(const Image<T>& img) {
  return json::array({img.height(), img.width(), img.channels()});
}

template <typename T>
Image<T> read_tensor(const fs::path& dir, const json& manifest, const char* name) {
  const json& shapes = manifest.at("shapes");
  if (!shapes.contains(name)) return {};
  const auto s = shapes.at(name).get<std::vector<int>>();
  if (s.size() != 3 || s[0] < 0 || s[1] < 0 || s[2] < 0) {
    throw LoadError(std::string("manifest shape of ") + name + " is not (H, W, C)");
  }
  Image<T> img(s[0], s[1], s[2]);
  img.data() = read_f32<T>(dir / (std::string(name) + ".f32"), img.size());
  return img;
}

}  // namespace detail

// Directory with manifest.json plus delta.f32, patch.f32 and (when present)
// search.f32, each row-major (H, W, C). Round trips are bit-exact for float.
template <typename T>
void save_perturbation(const PerturbationPair<T>& p, const fs::path& dir, const PerturbationMeta& meta = {}) {
  fs::create_directories(dir);
  json m;
  m["format_version"] = kPerturbationFormat;
  m["color_mode"] = to_string(p.color_mode);
  m["kind"] = to_string(p.kind);
  m["eps_template"] = p.eps_template;
  m["eps_search"] = p.eps_search;
  m["iteration"] = p.iteration;
  m["use_template"] = p.use_template;
  m["use_search"] = p.use_search;
  m["tracker_fingerprint"] = meta.tracker_fingerprint;
  m["seed"] = meta.seed;
  m["shapes"] = json::object();
  const std::pair<const char*, const Image<T>*> tensors[] = {{"delta", &p.delta}, {"patch", &p.patch},
                                                             {"search", &p.search}};
  for (const auto& [name, img] : tensors) {
    const fs::path file = dir / (std::string(name) + ".f32");
    if (img->empty()) {
      fs::remove(file);
      continue;
    }
    m["shapes"][name] = detail::shape_json(*img);
    write_f32(img->data(), file);
  }
  write_json(m, dir / "manifest.json");
}

template <typename T>
PerturbationPair<T> load_perturbation(const fs::path& dir, PerturbationMeta* meta = nullptr) {
  const json m = read_json(dir / "manifest.json");
  try {
    const int version = m.at("format_version").get<int>();
    if (version != kPerturbationFormat) {
      throw LoadError(dir.string() + ": unknown perturbation format version " + std::to_string(version));
    }
    PerturbationPair<T> p;
    p.color_mode = parse_color_mode(m.at("color_mode").get<std::string>());
    p.kind = parse_attack_kind(m.at("kind").get<std::string>());
    p.eps_template = m.at("eps_template").get<double>();
    p.eps_search = m.at("eps_search").get<double>();
    p.iteration = m.at("iteration").get<long>();
    p.use_template = m.value("use_template", true);
    p.use_search = m.value("use_search", true);
    p.delta = detail::read_tensor<T>(dir, m, "delta");
    p.patch = detail::read_tensor<T>(dir, m, "patch");
    p.search = detail::read_tensor<T>(dir, m, "search");
    if (meta != nullptr) {
      meta->tracker_fingerprint = m.value("tracker_fingerprint", std::string{});
      meta->seed = m.value("seed", std::uint64_t{0});
    }
    return p;
  } catch (const json::exception& e) {
    throw LoadError(dir.string() + "/manifest.json: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw LoadError(dir.string() + "/manifest.json: " + e.what());
  }
}

inline json to_json(const TinyTrackerConfig& c) {
  return {{"template_size", c.template_size},       {"search_size", c.search_size},
          {"backbone_channels", c.backbone_channels}, {"backbone_strides", c.backbone_strides},
          {"adapter_channels", c.adapter_channels}, {"head_channels", c.head_channels}};
}

inline TinyTrackerConfig tracker_config_from_json(const json& j) {
  TinyTrackerConfig c;
  c.template_size = j.at("template_size").get<int>();
  c.search_size = j.at("search_size").get<int>();
  c.backbone_channels = j.at("backbone_channels").get<std::vector<int>>();
  c.backbone_strides = j.at("backbone_strides").get<std::vector<int>>();
  c.adapter_channels = j.at("adapter_channels").get<int>();
  c.head_channels = j.at("head_channels").get<int>();
  validate(c);
  return c;
}

// Fingerprint of the stored float32 weights, independent of the in-memory type.
template <typename T>
std::string tracker_fingerprint(const TinyTracker<T>& t) {
  return hex64(t.template cast<float>().checksum());
}

// Directory with model.json (architecture + fingerprint) and params.f32.
template <typename T>
void save_model(const TinyTracker<T>& t, const fs::path& dir, const json& extra = json::object()) {
  fs::create_directories(dir);
  json m;
  m["format_version"] = kModelFormat;
  m["architecture"] = to_json(t.config());
  m["parameter_count"] = t.parameter_count();
  m["fingerprint"] = tracker_fingerprint(t);
  m["info"] = extra;
  write_f32(std::vector<T>(t.params().begin(), t.params().end()), dir / "params.f32");
  write_json(m, dir / "model.json");
}

template <typename T>
TinyTracker<T> load_model(const fs::path& dir) {
  const json m = read_json(dir / "model.json");
  try {
    if (m.at("format_version").get<int>() != kModelFormat) {
      throw LoadError(dir.string() + ": unknown model format version");
    }
    TinyTracker<T> t(tracker_config_from_json(m.at("architecture")));
    const auto values = read_f32<T>(dir / "params.f32", t.parameter_count());
    std::copy(values.begin(), values.end(), t.mutable_params().begin());
    const std::string expected = m.value("fingerprint", std::string{});
    if (!expected.empty() && expected != tracker_fingerprint(t)) {
      throw LoadError(dir.string() + ": parameter fingerprint mismatch");
    }
    return t;
  } catch (const json::exception& e) {
    throw LoadError(dir.string() + "/model.json: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw LoadError(dir.string() + "/model.json: " + e.what());
  }
}

}  // namespace siamuap::io
