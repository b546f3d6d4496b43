#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "siamuap/attack.hpp"
#include "siamuap/geometry.hpp"
#include "siamuap/image.hpp"

namespace siamuap {

namespace detail {

inline void check_trajectories(const std::vector<Box>& pred, const std::vector<Box>& ref, const char* what) {
  if (pred.size() != ref.size()) {
    throw std::invalid_argument(std::string(what) + ": prediction has " + std::to_string(pred.size()) +
                                " boxes but reference has " + std::to_string(ref.size()));
  }
  if (pred.size() < 2) throw std::invalid_argument(std::string(what) + ": need at least two frames");
}

// Degenerate predictions overlap nothing.
inline double overlap(const Box& a, const Box& b) { return a.valid() && b.valid() ? iou(a, b) : 0.0; }

inline double center_distance(const Box& a, const Box& b) {
  const Point p = a.center();
  const Point q = b.center();
  return std::hypot(p.x - q.x, p.y - q.y);
}

}  // namespace detail

// Per-frame IoU for frames 2..T.
inline std::vector<double> frame_overlaps(const std::vector<Box>& pred, const std::vector<Box>& ref) {
  detail::check_trajectories(pred, ref, "frame_overlaps");
  std::vector<double> out;
  out.reserve(pred.size() - 1);
  for (std::size_t i = 1; i < pred.size(); ++i) out.push_back(detail::overlap(pred[i], ref[i]));
  return out;
}

inline double ao(const std::vector<Box>& pred, const std::vector<Box>& ref) {
  const auto o = frame_overlaps(pred, ref);
  double s = 0.0;
  for (double v : o) s += v;
  return s / static_cast<double>(o.size());
}

// Fraction of frames whose IoU strictly exceeds thr.
inline double success_rate(const std::vector<Box>& pred, const std::vector<Box>& ref, double thr = 0.5) {
  const auto o = frame_overlaps(pred, ref);
  const auto n = std::count_if(o.begin(), o.end(), [thr](double v) { return v > thr; });
  return static_cast<double>(n) / static_cast<double>(o.size());
}

// Fraction of frames whose center lies within radius pixels (inclusive).
inline double precision(const std::vector<Box>& pred, const std::vector<Box>& ref, double radius = 20.0) {
  detail::check_trajectories(pred, ref, "precision");
  std::size_t hits = 0;
  for (std::size_t i = 1; i < pred.size(); ++i) {
    if (detail::center_distance(pred[i], ref[i]) <= radius) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size() - 1);
}

// Center error normalized per axis by the reference size, averaged over the
// success curve sampled at thresholds 0, 0.005, ..., 0.5.
inline double norm_precision(const std::vector<Box>& pred, const std::vector<Box>& ref) {
  detail::check_trajectories(pred, ref, "norm_precision");
  std::vector<double> d;
  d.reserve(pred.size() - 1);
  for (std::size_t i = 1; i < pred.size(); ++i) {
    const Point p = pred[i].center();
    const Point q = ref[i].center();
    const double w = ref[i].width();
    const double h = ref[i].height();
    if (!(w > 0.0 && h > 0.0)) throw std::invalid_argument("norm_precision: reference box has no area");
    d.push_back(std::hypot((p.x - q.x) / w, (p.y - q.y) / h));
  }
  constexpr int kSteps = 100;
  double area = 0.0;
  for (int k = 0; k <= kSteps; ++k) {
    const double t = 0.5 * k / kSteps;
    const auto n = std::count_if(d.begin(), d.end(), [t](double v) { return v <= t; });
    area += static_cast<double>(n) / static_cast<double>(d.size());
  }
  return area / (kSteps + 1);
}

struct Robustness {
  int failures = 0;
  int frames = 0;
  double per_100_frames = 0.0;
};

inline Robustness robustness(int failures, int frames) {
  if (failures < 0 || frames <= 0) throw std::invalid_argument("robustness: need failures >= 0 and frames > 0");
  return {failures, frames, 100.0 * failures / frames};
}

inline Robustness robustness(const ReinitRun& run) {
  return robustness(run.failures, static_cast<int>(run.status.size()));
}

// Mean IoU over tracked frames; initialization, failure and skipped frames
// are excluded. Returns 0 when nothing was tracked.
inline double accuracy(const std::vector<double>& overlaps, const std::vector<FrameStatus>& status) {
  if (overlaps.size() != status.size()) throw std::invalid_argument("accuracy: length mismatch");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < overlaps.size(); ++i) {
    if (status[i] != FrameStatus::tracked) continue;
    s += overlaps[i];
    ++n;
  }
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

inline double accuracy(const ReinitRun& run) { return accuracy(run.overlaps, run.status); }

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 255.0;
};

namespace detail {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double s = 0.0;
  for (int i = 0; i < size; ++i) {
    k[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
    s += k[i];
  }
  for (auto& v : k) v /= s;
  return k;
}

// Valid-mode separable filter of a (h, w) plane.
inline std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1;
  const int ow = w - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace detail

// Pixel rectangle [x0, x1) x [y0, y1) covered by a box, rounding its corners.
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
};

inline PixelRect pixel_rect(const Box& b) {
  return {static_cast<int>(std::lround(b.x0)), static_cast<int>(std::lround(b.y0)),
          static_cast<int>(std::lround(b.x1)), static_cast<int>(std::lround(b.y1))};
}

// Mean local SSIM over all window positions inside the region (whole image
// by default), computed per channel and averaged.
template <typename A, typename B>
double ssim(const Image<A>& a, const Image<B>& b, std::optional<Box> region = std::nullopt,
            const SsimOptions& opt = {}) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: image shapes differ");
  PixelRect r{0, 0, a.width(), a.height()};
  if (region) {
    r = pixel_rect(*region);
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > a.width() || r.y1 > a.height() || r.x1 <= r.x0 || r.y1 <= r.y0) {
      throw std::invalid_argument("ssim: region outside the image");
    }
  }
  const int h = r.y1 - r.y0;
  const int w = r.x1 - r.x0;
  if (h < opt.window || w < opt.window) throw std::invalid_argument("ssim: region smaller than the window");
  const auto k = detail::gaussian_kernel(opt.window, opt.sigma);
  const double c1 = (opt.k1 * opt.dynamic_range) * (opt.k1 * opt.dynamic_range);
  const double c2 = (opt.k2 * opt.dynamic_range) * (opt.k2 * opt.dynamic_range);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    std::vector<double> pa(n), pb(n), aa(n), bb(n), ab(n);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        pa[i] = static_cast<double>(a(r.y0 + y, r.x0 + x, c));
        pb[i] = static_cast<double>(b(r.y0 + y, r.x0 + x, c));
        aa[i] = pa[i] * pa[i];
        bb[i] = pb[i] * pb[i];
        ab[i] = pa[i] * pb[i];
      }
    }
    const auto ma = detail::filter_valid(pa, h, w, k);
    const auto mb = detail::filter_valid(pb, h, w, k);
    const auto saa = detail::filter_valid(aa, h, w, k);
    const auto sbb = detail::filter_valid(bb, h, w, k);
    const auto sab = detail::filter_valid(ab, h, w, k);
    double s = 0.0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
      const double va = saa[i] - ma[i] * ma[i];
      const double vb = sbb[i] - mb[i] * mb[i];
      const double cov = sab[i] - ma[i] * mb[i];
      s += ((2.0 * ma[i] * mb[i] + c1) * (2.0 * cov + c2)) /
           ((ma[i] * ma[i] + mb[i] * mb[i] + c1) * (va + vb + c2));
    }
    total += s / static_cast<double>(ma.size());
  }
  return total / a.channels();
}

// Metrics of one sequence. Fake-trajectory metrics, robustness and
// perceptibility are present only when the run produced them.
struct SequenceMetrics {
  std::string name;
  double ao_real = 0.0;
  double sr_real = 0.0;
  double precision_real = 0.0;
  double norm_precision_real = 0.0;
  std::optional<double> ao_fake;
  std::optional<double> sr_fake;
  std::optional<double> precision_fake;
  std::optional<double> norm_precision_fake;
  std::optional<int> robustness_failures;
  std::optional<int> robustness_frames;
  std::optional<double> accuracy;
  std::optional<double> ssim_template;
  std::optional<double> ssim_patch_region;
};

inline SequenceMetrics evaluate_sequence(const std::string& name, const std::vector<Box>& pred,
                                         const std::vector<Box>& gt, const std::vector<Box>* fake = nullptr,
                                         double sr_threshold = 0.5) {
  SequenceMetrics m;
  m.name = name;
  m.ao_real = ao(pred, gt);
  m.sr_real = success_rate(pred, gt, sr_threshold);
  m.precision_real = precision(pred, gt);
  m.norm_precision_real = norm_precision(pred, gt);
  if (fake != nullptr) {
    m.ao_fake = ao(pred, *fake);
    m.sr_fake = success_rate(pred, *fake, sr_threshold);
    m.precision_fake = precision(pred, *fake);
    m.norm_precision_fake = norm_precision(pred, *fake);
  }
  return m;
}

inline void add_reinit(SequenceMetrics& m, const ReinitRun& run) {
  m.robustness_failures = run.failures;
  m.robustness_frames = static_cast<int>(run.status.size());
  m.accuracy = accuracy(run);
}

// One evaluated configuration: a list of sequences plus descriptive fields
// used to lay out tables and plots.
struct RunRecord {
  std::string label;
  std::map<std::string, std::string> metadata;
  std::optional<int> iteration;
  std::optional<int> patch_size;
  std::vector<SequenceMetrics> sequences;
};

struct Aggregate {
  double ao_real = 0.0;
  double sr_real = 0.0;
  double precision_real = 0.0;
  double norm_precision_real = 0.0;
  std::optional<double> ao_fake;
  std::optional<double> sr_fake;
  std::optional<double> precision_fake;
  std::optional<double> norm_precision_fake;
  std::optional<int> robustness_failures;
  std::optional<double> robustness_per_sequence;
  std::optional<double> robustness_per_100_frames;
  std::optional<double> accuracy;
  std::optional<double> ssim_template;
  std::optional<double> ssim_patch_region;
};

struct EvalReport {
  RunRecord run;
  Aggregate aggregate;
};

namespace detail {

template <typename F>
std::optional<double> mean_of(const std::vector<SequenceMetrics>& seqs, F get) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& m : seqs) {
    const std::optional<double> v = get(m);
    if (!v) continue;
    s += *v;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

}  // namespace detail

inline EvalReport summarize(const RunRecord& run) {
  if (run.sequences.empty()) throw std::invalid_argument("summarize: run '" + run.label + "' has no sequences");
  EvalReport r;
  r.run = run;
  auto& a = r.aggregate;
  const auto& s = run.sequences;
  using M = SequenceMetrics;
  a.ao_real = *detail::mean_of(s, [](const M& m) { return std::optional<double>{m.ao_real}; });
  a.sr_real = *detail::mean_of(s, [](const M& m) { return std::optional<double>{m.sr_real}; });
  a.precision_real = *detail::mean_of(s, [](const M& m) { return std::optional<double>{m.precision_real}; });
  a.norm_precision_real =
      *detail::mean_of(s, [](const M& m) { return std::optional<double>{m.norm_precision_real}; });
  a.ao_fake = detail::mean_of(s, [](const M& m) { return m.ao_fake; });
  a.sr_fake = detail::mean_of(s, [](const M& m) { return m.sr_fake; });
  a.precision_fake = detail::mean_of(s, [](const M& m) { return m.precision_fake; });
  a.norm_precision_fake = detail::mean_of(s, [](const M& m) { return m.norm_precision_fake; });
  a.accuracy = detail::mean_of(s, [](const M& m) { return m.accuracy; });
  a.ssim_template = detail::mean_of(s, [](const M& m) { return m.ssim_template; });
  a.ssim_patch_region = detail::mean_of(s, [](const M& m) { return m.ssim_patch_region; });
  int failures = 0;
  int frames = 0;
  int counted = 0;
  for (const auto& m : s) {
    if (!m.robustness_failures) continue;
    failures += *m.robustness_failures;
    frames += m.robustness_frames.value_or(0);
    ++counted;
  }
  if (counted > 0) {
    a.robustness_failures = failures;
    a.robustness_per_sequence = static_cast<double>(failures) / counted;
    if (frames > 0) a.robustness_per_100_frames = 100.0 * failures / frames;
  }
  return r;
}

inline std::vector<EvalReport> make_report(const std::vector<RunRecord>& runs) {
  if (runs.empty()) throw std::invalid_argument("make_report: no runs");
  std::vector<EvalReport> out;
  out.reserve(runs.size());
  for (const auto& r : runs) out.push_back(summarize(r));
  return out;
}

}  // namespace siamuap
