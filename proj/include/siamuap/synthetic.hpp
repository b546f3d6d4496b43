#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "siamuap/dataset.hpp"

namespace siamuap {

struct SyntheticConfig {
  Size frame_size{192, 192};
  int frames_per_sequence = 60;
  double min_target_side = 20.0;
  double max_target_side = 32.0;
  double min_speed = 0.8;
  double max_speed = 2.8;
  double scale_amplitude = 0.1;
  int distractors = 3;
  int clutter_shapes = 14;
  double frame_noise = 4.0;
};

namespace detail {

using Rgb = std::array<double, 3>;

inline Rgb hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 360.0) / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  Rgb rgb{0, 0, 0};
  if (hp < 1) rgb = {c, x, 0};
  else if (hp < 2) rgb = {x, c, 0};
  else if (hp < 3) rgb = {0, c, x};
  else if (hp < 4) rgb = {0, x, c};
  else if (hp < 5) rgb = {x, 0, c};
  else rgb = {c, 0, x};
  const double m = v - c;
  for (auto& ch : rgb) ch = (ch + m) * 255.0;
  return rgb;
}

// Fraction of pixel [i - 0.5, i + 0.5] covered by [lo, hi].
inline double coverage(int i, double lo, double hi) {
  return std::clamp(std::min(hi, i + 0.5) - std::max(lo, i - 0.5), 0.0, 1.0);
}

struct Mover {
  Point center;
  Point velocity;
  double width = 0;
  double height = 0;
  double phase = 0;
  double period = 30;
  Rgb color{};
  Rgb accent{};
  int pattern = 0;  // 0 checker, 1 stripes, 2 ring
  bool ellipse = false;
};

inline void step_mover(Mover& m, Size frame, double half_w, double half_h) {
  m.center.x += m.velocity.x;
  m.center.y += m.velocity.y;
  const double margin = 2.0;
  if (m.center.x - half_w < margin) {
    m.center.x = margin + half_w;
    m.velocity.x = std::fabs(m.velocity.x);
  }
  if (m.center.x + half_w > frame.width - margin) {
    m.center.x = frame.width - margin - half_w;
    m.velocity.x = -std::fabs(m.velocity.x);
  }
  if (m.center.y - half_h < margin) {
    m.center.y = margin + half_h;
    m.velocity.y = std::fabs(m.velocity.y);
  }
  if (m.center.y + half_h > frame.height - margin) {
    m.center.y = frame.height - margin - half_h;
    m.velocity.y = -std::fabs(m.velocity.y);
  }
}

inline double scale_at(const Mover& m, int t, double amplitude) {
  return 1.0 + amplitude * std::sin(2.0 * std::numbers::pi * t / m.period + m.phase);
}

// Blends a textured shape into the canvas with anti-aliased edges.
inline void draw_mover(std::vector<double>& canvas, Size frame, const Mover& m, const Box& b) {
  const int xa = std::max(0, static_cast<int>(std::floor(b.x0)));
  const int xb = std::min(frame.width - 1, static_cast<int>(std::ceil(b.x1)));
  const int ya = std::max(0, static_cast<int>(std::floor(b.y0)));
  const int yb = std::min(frame.height - 1, static_cast<int>(std::ceil(b.y1)));
  const Point c = b.center();
  for (int y = ya; y <= yb; ++y) {
    const double cy = coverage(y, b.y0, b.y1);
    if (cy <= 0.0) continue;
    for (int x = xa; x <= xb; ++x) {
      double a = cy * coverage(x, b.x0, b.x1);
      if (a <= 0.0) continue;
      const double u = (x - b.x0) / b.width();
      const double v = (y - b.y0) / b.height();
      if (m.ellipse) {
        const double dx = (x - c.x) / (b.width() / 2.0);
        const double dy = (y - c.y) / (b.height() / 2.0);
        const double r = std::sqrt(dx * dx + dy * dy);
        a *= std::clamp((1.0 - r) * b.width() / 2.0 + 0.5, 0.0, 1.0);
        if (a <= 0.0) continue;
      }
      bool accent = false;
      switch (m.pattern) {
        case 0: accent = (static_cast<int>(u * 4.0) + static_cast<int>(v * 4.0)) % 2 == 0; break;
        case 1: accent = static_cast<int>(u * 5.0) % 2 == 0; break;
        default: {
          const double du = u - 0.5, dv = v - 0.5;
          accent = std::sqrt(du * du + dv * dv) < 0.25;
        }
      }
      const Rgb& col = accent ? m.accent : m.color;
      double* px = &canvas[(static_cast<std::size_t>(y) * frame.width + x) * 3];
      for (int ch = 0; ch < 3; ++ch) px[ch] = (1.0 - a) * px[ch] + a * col[ch];
    }
  }
}

inline Box mover_box(const Mover& m, double scale) {
  return Box::from_center(m.center, m.width * scale, m.height * scale);
}

inline double round_to(double v, double step) { return std::round(v / step) * step; }

}  // namespace detail

// Deterministic video of a textured target moving linearly with wall bounce
// and mild scale oscillation, over a cluttered static background with moving
// distractors of contrasting hue.
inline Sequence synthesize_sequence(std::uint64_t seed, const SyntheticConfig& cfg, std::string name = {}) {
  using namespace detail;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const Size fs = cfg.frame_size;
  const std::size_t npix = static_cast<std::size_t>(fs.width) * fs.height;

  // Background: muted two-color gradient, blurred blobs and rectangles.
  std::vector<double> background(npix * 3);
  const double bg_hue = uniform(0.0, 360.0);
  const Rgb bg_a = hsv_to_rgb(bg_hue, uniform(0.05, 0.25), uniform(0.35, 0.6));
  const Rgb bg_b = hsv_to_rgb(bg_hue + uniform(-40.0, 40.0), uniform(0.05, 0.25), uniform(0.35, 0.6));
  const double gx = uniform(-1.0, 1.0), gy = uniform(-1.0, 1.0);
  for (int y = 0; y < fs.height; ++y) {
    for (int x = 0; x < fs.width; ++x) {
      const double t = std::clamp(0.5 + 0.5 * (gx * (x - fs.width / 2.0) / fs.width + gy * (y - fs.height / 2.0) / fs.height), 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        background[(static_cast<std::size_t>(y) * fs.width + x) * 3 + c] = (1.0 - t) * bg_a[c] + t * bg_b[c];
      }
    }
  }
  for (int i = 0; i < cfg.clutter_shapes; ++i) {
    Mover clutter;
    clutter.center = {uniform(0.0, fs.width), uniform(0.0, fs.height)};
    clutter.width = uniform(8.0, 40.0);
    clutter.height = uniform(8.0, 40.0);
    clutter.color = hsv_to_rgb(bg_hue + uniform(-60.0, 60.0), uniform(0.1, 0.4), uniform(0.25, 0.75));
    clutter.accent = hsv_to_rgb(bg_hue + uniform(-60.0, 60.0), uniform(0.1, 0.4), uniform(0.25, 0.75));
    clutter.pattern = static_cast<int>(uniform(0.0, 3.0));
    clutter.ellipse = unit(rng) < 0.5;
    draw_mover(background, fs, clutter, mover_box(clutter, 1.0));
  }

  // Target: saturated hue with a contrasting texture.
  Mover target;
  const double target_hue = uniform(0.0, 360.0);
  target.width = uniform(cfg.min_target_side, cfg.max_target_side);
  target.height = std::clamp(target.width * uniform(0.8, 1.25), cfg.min_target_side, cfg.max_target_side);
  target.color = hsv_to_rgb(target_hue, uniform(0.75, 1.0), uniform(0.8, 1.0));
  target.accent = hsv_to_rgb(target_hue + 180.0, uniform(0.6, 1.0), uniform(0.2, 0.45));
  target.pattern = static_cast<int>(uniform(0.0, 3.0));
  target.period = uniform(20.0, 40.0);
  target.phase = uniform(0.0, 2.0 * std::numbers::pi);
  const double max_half = target.width * (1.0 + cfg.scale_amplitude) / 2.0 + 4.0;
  target.center = {uniform(max_half, fs.width - max_half), uniform(max_half, fs.height - max_half)};
  const double speed = uniform(cfg.min_speed, cfg.max_speed);
  const double heading = uniform(0.0, 2.0 * std::numbers::pi);
  target.velocity = {speed * std::cos(heading), speed * std::sin(heading)};

  std::vector<Mover> distractors(cfg.distractors);
  for (auto& d : distractors) {
    const double hue = target_hue + uniform(90.0, 270.0);
    d.width = uniform(cfg.min_target_side, cfg.max_target_side);
    d.height = uniform(cfg.min_target_side, cfg.max_target_side);
    d.color = hsv_to_rgb(hue, uniform(0.5, 0.9), uniform(0.5, 0.9));
    d.accent = hsv_to_rgb(hue + uniform(-30.0, 30.0), uniform(0.3, 0.6), uniform(0.2, 0.5));
    d.pattern = static_cast<int>(uniform(0.0, 3.0));
    d.ellipse = unit(rng) < 0.5;
    d.center = {uniform(d.width, fs.width - d.width), uniform(d.height, fs.height - d.height)};
    const double s = uniform(cfg.min_speed, cfg.max_speed);
    const double h = uniform(0.0, 2.0 * std::numbers::pi);
    d.velocity = {s * std::cos(h), s * std::sin(h)};
  }

  Sequence seq;
  seq.name = name;
  // Approximately Gaussian pixel noise: Irwin-Hall sum of four 16-bit uniforms
  // drawn from one 64-bit word.
  const double noise_scale = cfg.frame_noise * std::sqrt(3.0) / 65536.0;
  auto noise = [&]() {
    const std::uint64_t r = rng();
    const double sum = static_cast<double>((r & 0xffff) + ((r >> 16) & 0xffff) + ((r >> 32) & 0xffff) + (r >> 48));
    return (sum - 2.0 * 65535.0) * noise_scale;
  };
  for (int t = 0; t < cfg.frames_per_sequence; ++t) {
    std::vector<double> canvas = background;
    for (const auto& d : distractors) draw_mover(canvas, fs, d, mover_box(d, 1.0));
    const double s = scale_at(target, t, cfg.scale_amplitude);
    Box box = mover_box(target, s);
    box = {round_to(box.x0, 1e-3), round_to(box.y0, 1e-3), round_to(box.x1, 1e-3), round_to(box.y1, 1e-3)};
    draw_mover(canvas, fs, target, box);

    Frame frame(fs.height, fs.width, 3);
    for (std::size_t i = 0; i < canvas.size(); ++i) {
      const double v = std::clamp(canvas[i] + (cfg.frame_noise > 0.0 ? noise() : 0.0), 0.0, 255.0);
      frame.data()[i] = static_cast<std::uint8_t>(v + 0.5);
    }
    seq.frames.push_back(std::move(frame));
    seq.boxes.push_back(box);

    for (auto& d : distractors) step_mover(d, fs, d.width / 2.0, d.height / 2.0);
    const double next = scale_at(target, t + 1, cfg.scale_amplitude);
    step_mover(target, fs, target.width * next / 2.0, target.height * next / 2.0);
  }
  return seq;
}

inline Dataset make_synthetic_dataset(std::uint64_t seed, int n_sequences, const SyntheticConfig& cfg = {}) {
  Dataset data;
  data.reserve(static_cast<std::size_t>(n_sequences));
  std::mt19937_64 seeder(seed);
  for (int i = 0; i < n_sequences; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%04d", i);
    data.push_back(synthesize_sequence(seeder(), cfg, name));
  }
  return data;
}

}  // namespace siamuap
