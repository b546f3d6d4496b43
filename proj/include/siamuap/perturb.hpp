#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "siamuap/geometry.hpp"
#include "siamuap/image.hpp"

namespace siamuap {

enum class ColorMode { rgb, ycbcr };

// How the search-side perturbation is injected.
enum class AttackKind {
  patch_add,       // translucent patch added at the fake-box center
  baseline_uap,    // one perturbation added to the whole search image
  baseline_paste,  // opaque patch replacing pixels, clean template
};

inline std::string to_string(ColorMode m) { return m == ColorMode::rgb ? "rgb" : "ycbcr"; }
inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::patch_add: return "patch_add";
    case AttackKind::baseline_uap: return "baseline_uap";
    case AttackKind::baseline_paste: return "baseline_paste";
  }
  return "unknown";
}

inline ColorMode parse_color_mode(const std::string& s) {
  if (s == "rgb") return ColorMode::rgb;
  if (s == "ycbcr") return ColorMode::ycbcr;
  throw std::invalid_argument("unknown color mode '" + s + "'");
}

inline AttackKind parse_attack_kind(const std::string& s) {
  if (s == "patch_add") return AttackKind::patch_add;
  if (s == "baseline_uap") return AttackKind::baseline_uap;
  if (s == "baseline_paste") return AttackKind::baseline_paste;
  throw std::invalid_argument("unknown attack kind '" + s + "'");
}

// Universal perturbation artifacts.
//   delta:  template-sized, 3 channels (RGB offsets, or YCbCr offsets in ycbcr mode)
//   patch:  P x P x 3 (RGB), or P x P x 2 CbCr offsets in ycbcr mode
//   search: search-sized full-image perturbation; RGB for baseline_uap,
//           single Y channel in ycbcr mode, empty otherwise
template <typename T>
struct PerturbationPair {
  Image<T> delta;
  Image<T> patch;
  Image<T> search;
  ColorMode color_mode = ColorMode::rgb;
  AttackKind kind = AttackKind::patch_add;
  double eps_template = 0.1;
  double eps_search = 0.1;
  long iteration = 0;
  bool use_template = true;
  bool use_search = true;

  int patch_size() const { return patch.height(); }
};

template <typename T>
PerturbationPair<T> zero_perturbation(int template_size, int search_size, int patch_size,
                                      ColorMode mode = ColorMode::rgb, AttackKind kind = AttackKind::patch_add) {
  PerturbationPair<T> p;
  p.color_mode = mode;
  p.kind = kind;
  if (kind != AttackKind::baseline_paste) p.delta = Image<T>(template_size, template_size, 3);
  if (kind == AttackKind::baseline_uap) {
    p.search = Image<T>(search_size, search_size, 3);
  } else if (mode == ColorMode::ycbcr) {
    p.search = Image<T>(search_size, search_size, 1);
    p.patch = Image<T>(patch_size, patch_size, 2);
  } else {
    p.patch = Image<T>(patch_size, patch_size, 3);
  }
  return p;
}

// Axis-aligned P x P footprint centered on a box center, clipped to the image.
// Image rows/cols [y0, y1) x [x0, x1) receive patch rows/cols starting at
// (py, px).
struct PatchRegion {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int px = 0, py = 0;

  bool empty() const { return x1 <= x0 || y1 <= y0; }
  bool contains(int y, int x) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

inline bool center_inside(const Box& b, int width, int height) {
  const Point c = b.center();
  return c.x >= 0.0 && c.y >= 0.0 && c.x < width && c.y < height;
}

inline PatchRegion patch_region(int width, int height, int patch_size, const Box& fake) {
  if (!center_inside(fake, width, height)) {
    throw std::invalid_argument("patch_region: fake-box center outside the image");
  }
  const Point c = fake.center();
  const int sx = static_cast<int>(std::floor(c.x - patch_size / 2.0 + 0.5));
  const int sy = static_cast<int>(std::floor(c.y - patch_size / 2.0 + 0.5));
  PatchRegion r;
  r.x0 = std::max(sx, 0);
  r.y0 = std::max(sy, 0);
  r.x1 = std::min(sx + patch_size, width);
  r.y1 = std::min(sy + patch_size, height);
  r.px = r.x0 - sx;
  r.py = r.y0 - sy;
  return r;
}

template <typename T>
Image<T> add_patch(const Image<T>& x, const Image<T>& patch, const Box& fake) {
  if (patch.channels() != x.channels() || patch.height() != patch.width()) {
    throw std::invalid_argument("add_patch: patch must be square with matching channels");
  }
  const PatchRegion r = patch_region(x.width(), x.height(), patch.height(), fake);
  Image<T> out = x;
  for (int y = r.y0; y < r.y1; ++y) {
    for (int xx = r.x0; xx < r.x1; ++xx) {
      for (int c = 0; c < x.channels(); ++c) {
        out(y, xx, c) = clip_intensity<T>(x(y, xx, c) + patch(y - r.y0 + r.py, xx - r.x0 + r.px, c));
      }
    }
  }
  return out;
}

template <typename T>
Image<T> paste_patch(const Image<T>& x, const Image<T>& patch, const Box& fake) {
  if (patch.channels() != x.channels() || patch.height() != patch.width()) {
    throw std::invalid_argument("paste_patch: patch must be square with matching channels");
  }
  const PatchRegion r = patch_region(x.width(), x.height(), patch.height(), fake);
  Image<T> out = x;
  for (int y = r.y0; y < r.y1; ++y) {
    for (int xx = r.x0; xx < r.x1; ++xx) {
      for (int c = 0; c < x.channels(); ++c) {
        out(y, xx, c) = clip_intensity<T>(patch(y - r.y0 + r.py, xx - r.x0 + r.px, c));
      }
    }
  }
  return out;
}

// Elementwise sum clipped to [0, 255]; also used for full-image search
// perturbations.
template <typename T>
Image<T> perturb_template(const Image<T>& z, const Image<T>& delta) {
  if (!z.same_shape(delta)) {
    throw std::invalid_argument("perturb_template: shape mismatch");
  }
  Image<T> out = z;
  auto& d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = clip_intensity<T>(d[i] + delta.data()[i]);
  return out;
}

// Full-range BT.601.
struct YCbCrTransform {
  Eigen::Matrix3d forward;
  Eigen::Matrix3d inverse;
  Eigen::Vector3d offset{0.0, 128.0, 128.0};

  YCbCrTransform() {
    forward << 0.299, 0.587, 0.114,       //
        -0.168736, -0.331264, 0.5,        //
        0.5, -0.418688, -0.081312;
    inverse = forward.inverse();
  }
};

inline const YCbCrTransform& ycbcr_transform() {
  static const YCbCrTransform t;
  return t;
}

template <typename T>
Image<T> rgb_to_ycbcr(const Image<T>& img) {
  if (img.channels() != 3) throw std::invalid_argument("rgb_to_ycbcr: expected 3 channels");
  const auto& tf = ycbcr_transform();
  Image<T> out(img.height(), img.width(), 3);
  for (std::size_t i = 0; i < img.size(); i += 3) {
    const Eigen::Vector3d rgb(img.data()[i], img.data()[i + 1], img.data()[i + 2]);
    const Eigen::Vector3d ycc = tf.forward * rgb + tf.offset;
    for (int c = 0; c < 3; ++c) out.data()[i + c] = static_cast<T>(ycc[c]);
  }
  return out;
}

template <typename T>
Image<T> ycbcr_to_rgb(const Image<T>& img) {
  if (img.channels() != 3) throw std::invalid_argument("ycbcr_to_rgb: expected 3 channels");
  const auto& tf = ycbcr_transform();
  Image<T> out(img.height(), img.width(), 3);
  for (std::size_t i = 0; i < img.size(); i += 3) {
    const Eigen::Vector3d ycc(img.data()[i], img.data()[i + 1], img.data()[i + 2]);
    const Eigen::Vector3d rgb = tf.inverse * (ycc - tf.offset);
    for (int c = 0; c < 3; ++c) out.data()[i + c] = static_cast<T>(rgb[c]);
  }
  return out;
}

template <typename T>
Image<T> clip_image(Image<T> img) {
  for (auto& v : img.data()) v = clip_intensity(v);
  return img;
}

// Template perturbation in YCbCr space: all three channels of delta are added
// after conversion and the result is converted back. The _raw variants skip
// the final clip.
template <typename T>
Image<T> perturb_template_ycbcr_raw(const Image<T>& z, const Image<T>& delta) {
  if (!z.same_shape(delta)) throw std::invalid_argument("perturb_template_ycbcr: shape mismatch");
  Image<T> ycc = rgb_to_ycbcr(z);
  for (std::size_t i = 0; i < ycc.size(); ++i) ycc.data()[i] += delta.data()[i];
  return ycbcr_to_rgb(ycc);
}

template <typename T>
Image<T> perturb_template_ycbcr(const Image<T>& z, const Image<T>& delta) {
  return clip_image(perturb_template_ycbcr_raw(z, delta));
}

// Y-channel perturbation over the whole search image plus a CbCr patch at the
// fake-box center.
template <typename T>
Image<T> apply_ycbcr_attack_raw(const Image<T>& x, const Image<T>& search_y, const Image<T>& search_cbcr,
                                const Box& fake) {
  if (search_y.height() != x.height() || search_y.width() != x.width() || search_y.channels() != 1) {
    throw std::invalid_argument("apply_ycbcr_attack: Y perturbation must be search-sized with one channel");
  }
  if (search_cbcr.channels() != 2 || search_cbcr.height() != search_cbcr.width()) {
    throw std::invalid_argument("apply_ycbcr_attack: CbCr perturbation must be square with two channels");
  }
  const PatchRegion r = patch_region(x.width(), x.height(), search_cbcr.height(), fake);
  Image<T> ycc = rgb_to_ycbcr(x);
  for (int y = 0; y < x.height(); ++y) {
    for (int xx = 0; xx < x.width(); ++xx) {
      ycc(y, xx, 0) += search_y(y, xx, 0);
    }
  }
  for (int y = r.y0; y < r.y1; ++y) {
    for (int xx = r.x0; xx < r.x1; ++xx) {
      for (int c = 0; c < 2; ++c) ycc(y, xx, c + 1) += search_cbcr(y - r.y0 + r.py, xx - r.x0 + r.px, c);
    }
  }
  return ycbcr_to_rgb(ycc);
}

template <typename T>
Image<T> apply_ycbcr_attack(const Image<T>& x, const Image<T>& search_y, const Image<T>& search_cbcr, const Box& fake) {
  return clip_image(apply_ycbcr_attack_raw(x, search_y, search_cbcr, fake));
}

// z~ for a perturbation pair; the clean template when the template part is
// disabled.
template <typename T>
Image<T> apply_template_perturbation(const PerturbationPair<T>& p, const Image<T>& z) {
  if (!p.use_template || p.delta.empty()) return z;
  return p.color_mode == ColorMode::ycbcr ? perturb_template_ycbcr(z, p.delta) : perturb_template(z, p.delta);
}

// x~ for a perturbation pair; fake is in search-crop coordinates.
template <typename T>
Image<T> apply_search_perturbation(const PerturbationPair<T>& p, const Image<T>& x, const Box& fake) {
  if (!p.use_search) return x;
  switch (p.kind) {
    case AttackKind::baseline_uap: return perturb_template(x, p.search);
    case AttackKind::baseline_paste: return paste_patch(x, p.patch, fake);
    case AttackKind::patch_add: break;
  }
  if (p.color_mode == ColorMode::ycbcr) return apply_ycbcr_attack(x, p.search, p.patch, fake);
  return add_patch(x, p.patch, fake);
}

// Whether the search perturbation depends on a fake-box location.
template <typename T>
bool search_needs_fake(const PerturbationPair<T>& p) {
  return p.use_search && p.kind != AttackKind::baseline_uap;
}

}  // namespace siamuap
