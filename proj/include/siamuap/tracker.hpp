#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "siamuap/geometry.hpp"
#include "siamuap/image.hpp"
#include "siamuap/instrumentation.hpp"
#include "siamuap/nn.hpp"

namespace siamuap {

// Dense head outputs on a G x G grid. cls and quality are post-sigmoid,
// reg holds (l, t, r, b) edge distances in crop pixels per cell, laid out
// [(y * G + x) * 4 + k].
template <typename T>
struct HeadMaps {
  int grid = 0;
  std::vector<T> cls;
  std::vector<T> reg;
  std::vector<T> quality;

  HeadMaps() = default;
  explicit HeadMaps(int g)
      : grid{g},
        cls(static_cast<std::size_t>(g) * g),
        reg(static_cast<std::size_t>(g) * g * 4),
        quality(static_cast<std::size_t>(g) * g) {}

  std::size_t cell(int x, int y) const { return static_cast<std::size_t>(y) * grid + x; }
};

template <typename T>
struct InputGradients {
  Image<T> template_grad;
  Image<T> search_grad;
};

// Receives the forward maps and returns dL/d(maps).
template <typename T>
using HeadGradientFn = std::function<HeadMaps<T>(const HeadMaps<T>&)>;

// Contract for any victim tracker: dense C/R/Q maps for a (template, search)
// pair and input-image gradients of a scalar built from those maps.
template <typename T>
class TrackerAdapter {
 public:
  virtual ~TrackerAdapter() = default;
  virtual int template_size() const = 0;
  virtual int search_size() const = 0;
  virtual GridGeometry grid() const = 0;
  virtual HeadMaps<T> forward(const Image<T>& z, const Image<T>& x) const = 0;
  virtual InputGradients<T> input_gradients(const Image<T>& z, const Image<T>& x,
                                            const HeadGradientFn<T>& loss) const = 0;
};

struct TinyTrackerConfig {
  int template_size = 64;
  int search_size = 160;
  // Backbone stages: 3x3 convolutions; the product of strides is the grid stride.
  std::vector<int> backbone_channels{8, 16, 24, 24};
  std::vector<int> backbone_strides{2, 2, 2, 1};
  int adapter_channels = 24;
  int head_channels = 24;

  int stride() const {
    int s = 1;
    for (int v : backbone_strides) s *= v;
    return s;
  }
};

inline void validate(const TinyTrackerConfig& cfg) {
  if (cfg.backbone_channels.empty() || cfg.backbone_channels.size() != cfg.backbone_strides.size()) {
    throw std::invalid_argument("TinyTrackerConfig: backbone channels/strides mismatch");
  }
  const int s = cfg.stride();
  if (cfg.template_size <= 0 || cfg.search_size <= 0 || cfg.template_size % s != 0 ||
      cfg.search_size % s != 0 || cfg.template_size > cfg.search_size) {
    throw std::invalid_argument("TinyTrackerConfig: crop sizes must be positive multiples of the stride");
  }
  if (cfg.adapter_channels <= 0 || cfg.head_channels <= 0) {
    throw std::invalid_argument("TinyTrackerConfig: non-positive channel count");
  }
}

// Small anchor-free Siamese tracker: shared backbone, per-task adapters,
// depthwise correlation and C/R/Q heads. Parameters live in one flat vector.
template <typename T>
class TinyTracker final : public TrackerAdapter<T> {
 public:
  explicit TinyTracker(TinyTrackerConfig cfg) : cfg_{std::move(cfg)} {
    validate(cfg_);
    std::size_t cursor = 0;
    int in = 3;
    for (std::size_t i = 0; i < cfg_.backbone_channels.size(); ++i) {
      const int out = cfg_.backbone_channels[i];
      backbone_.push_back({nn::make_conv({in, out, 3, cfg_.backbone_strides[i], 1}, cursor), true});
      in = out;
    }
    const int feat = in;
    const int a = cfg_.adapter_channels;
    for (auto* adapter : {&adapter_cls_, &adapter_reg_}) {
      adapter->push_back({nn::make_conv({feat, a, 3, 1, 1}, cursor), true});
      adapter->push_back({nn::make_conv({a, a, 1, 1, 0}, cursor), false});
    }
    const int h = cfg_.head_channels;
    head_cls_.push_back({nn::make_conv({a, h, 3, 1, 1}, cursor), true});
    head_cls_.push_back({nn::make_conv({h, 2, 1, 1, 0}, cursor), false});
    head_reg_.push_back({nn::make_conv({a, h, 3, 1, 1}, cursor), true});
    head_reg_.push_back({nn::make_conv({h, 4, 1, 1, 0}, cursor), false});
    params_.assign(cursor, T{});
  }

  const TinyTrackerConfig& config() const { return cfg_; }
  int template_size() const override { return cfg_.template_size; }
  int search_size() const override { return cfg_.search_size; }
  GridGeometry grid() const override {
    return {cfg_.stride(), cfg_.search_size / cfg_.stride(), cfg_.search_size};
  }

  std::span<const T> params() const { return params_; }
  std::span<T> mutable_params() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const auto* stack : {&backbone_, &adapter_cls_, &adapter_reg_, &head_cls_, &head_reg_}) {
      for (const auto& stage : *stack) {
        nn::init_conv<T>(stage.conv, params_, rng, stage.activation ? 1.0 : 0.5);
      }
    }
    // Rare-positive prior on the classification logit.
    const auto& cls_out = head_cls_.back().conv;
    params_[cls_out.bias.offset] = static_cast<T>(-std::log((1.0 - 0.01) / 0.01));
    // Start edge distances near twice the stride.
    const auto& reg_out = head_reg_.back().conv;
    for (std::size_t i = 0; i < reg_out.bias.size; ++i) {
      params_[reg_out.bias.offset + i] = static_cast<T>(std::log(2.0));
    }
  }

  HeadMaps<T> forward(const Image<T>& z, const Image<T>& x) const override {
    Cache cache;
    return run_forward(z, x, cache);
  }

  InputGradients<T> input_gradients(const Image<T>& z, const Image<T>& x,
                                    const HeadGradientFn<T>& loss) const override {
    Cache cache;
    const HeadMaps<T> maps = run_forward(z, x, cache);
    const HeadMaps<T> grad = loss(maps);
    counters().gradient_evaluations.fetch_add(1, std::memory_order_relaxed);
    InputGradients<T> out;
    run_backward(cache, maps, grad, {}, &out);
    return out;
  }

  // Accumulates dL/d(params) into grad_params (same layout as params()).
  HeadMaps<T> parameter_gradients(const Image<T>& z, const Image<T>& x, const HeadGradientFn<T>& loss,
                                  std::span<T> grad_params) const {
    if (grad_params.size() != params_.size()) {
      throw std::invalid_argument("parameter_gradients: gradient buffer size mismatch");
    }
    Cache cache;
    const HeadMaps<T> maps = run_forward(z, x, cache);
    const HeadMaps<T> grad = loss(maps);
    counters().gradient_evaluations.fetch_add(1, std::memory_order_relaxed);
    run_backward(cache, maps, grad, grad_params, nullptr);
    return maps;
  }

  // FNV-1a over the parameter bytes.
  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(params_.data());
    for (std::size_t i = 0; i < params_.size() * sizeof(T); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
    return h;
  }

  template <typename U>
  TinyTracker<U> cast() const {
    TinyTracker<U> other(cfg_);
    auto dst = other.mutable_params();
    for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<U>(params_[i]);
    return other;
  }

 private:
  static constexpr double kInputCenter = 127.5;
  static constexpr double kInputScale = 1.0 / 64.0;

  struct Branch {
    nn::StackCache<T> adapter_z;
    nn::StackCache<T> adapter_x;
    nn::Tensor<T> kernel;
    nn::Tensor<T> padded_search;
    nn::StackCache<T> head;
  };

  struct Cache {
    nn::StackCache<T> backbone_z;
    nn::StackCache<T> backbone_x;
    Branch cls;
    Branch reg;
    int search_feat = 0;
  };

  nn::Tensor<T> to_planar(const Image<T>& img, int expected, const char* what) const {
    if (img.height() != expected || img.width() != expected || img.channels() != 3) {
      throw std::invalid_argument(std::string("TinyTracker: ") + what + " must be " +
                                  std::to_string(expected) + "x" + std::to_string(expected) + "x3");
    }
    nn::Tensor<T> t(3, expected, expected);
    for (int y = 0; y < expected; ++y) {
      for (int x = 0; x < expected; ++x) {
        for (int c = 0; c < 3; ++c) {
          t(c, y, x) = static_cast<T>((static_cast<double>(img(y, x, c)) - kInputCenter) * kInputScale);
        }
      }
    }
    return t;
  }

  Image<T> to_interleaved_grad(const nn::Tensor<T>& g) const {
    Image<T> img(g.height, g.width, g.channels);
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        for (int c = 0; c < g.channels; ++c) img(y, x, c) = g(c, y, x) * static_cast<T>(kInputScale);
      }
    }
    return img;
  }

  int pad_lo(int kernel) const { return (kernel - 1) / 2; }

  nn::Tensor<T> run_branch(const std::vector<nn::ConvStage>& adapter, const std::vector<nn::ConvStage>& head,
                           const nn::Tensor<T>& fz, const nn::Tensor<T>& fx, Branch& b) const {
    std::span<const T> p = params_;
    b.kernel = nn::stack_forward<T>(adapter, p, fz, &b.adapter_z);
    const nn::Tensor<T> ax = nn::stack_forward<T>(adapter, p, fx, &b.adapter_x);
    const int lo = pad_lo(b.kernel.height);
    const int hi = b.kernel.height - 1 - lo;
    b.padded_search = nn::zero_pad(ax, lo, lo, hi, hi);
    nn::Tensor<T> fused = nn::correlate(b.kernel, b.padded_search);
    const T norm = T{1} / static_cast<T>(b.kernel.height * b.kernel.width);
    for (auto& v : fused.values) v *= norm;
    return nn::stack_forward<T>(head, p, fused, &b.head);
  }

  HeadMaps<T> run_forward(const Image<T>& z, const Image<T>& x, Cache& cache) const {
    counters().forward_passes.fetch_add(1, std::memory_order_relaxed);
    std::span<const T> p = params_;
    const nn::Tensor<T> zin = to_planar(z, cfg_.template_size, "template");
    const nn::Tensor<T> xin = to_planar(x, cfg_.search_size, "search");
    const nn::Tensor<T> fz = nn::stack_forward<T>(backbone_, p, zin, &cache.backbone_z);
    const nn::Tensor<T> fx = nn::stack_forward<T>(backbone_, p, xin, &cache.backbone_x);
    cache.search_feat = fx.height;
    const nn::Tensor<T> cls = run_branch(adapter_cls_, head_cls_, fz, fx, cache.cls);
    const nn::Tensor<T> reg = run_branch(adapter_reg_, head_reg_, fz, fx, cache.reg);

    const int g = fx.height;
    const double stride = cfg_.stride();
    HeadMaps<T> maps(g);
    for (int y = 0; y < g; ++y) {
      for (int xx = 0; xx < g; ++xx) {
        const std::size_t i = maps.cell(xx, y);
        maps.cls[i] = nn::sigmoid(cls(0, y, xx));
        maps.quality[i] = nn::sigmoid(cls(1, y, xx));
        for (int k = 0; k < 4; ++k) {
          maps.reg[i * 4 + k] = static_cast<T>(stride * std::exp(static_cast<double>(reg(k, y, xx))));
        }
      }
    }
    return maps;
  }

  nn::Tensor<T> branch_backward(const std::vector<nn::ConvStage>& adapter,
                                const std::vector<nn::ConvStage>& head, const Branch& b,
                                const nn::Tensor<T>& grad_head, std::span<T> gp, nn::Tensor<T>& grad_fx) const {
    std::span<const T> p = params_;
    nn::Tensor<T> gfused = nn::stack_backward<T>(head, p, b.head, grad_head, gp);
    const T norm = T{1} / static_cast<T>(b.kernel.height * b.kernel.width);
    for (auto& v : gfused.values) v *= norm;
    nn::Tensor<T> gkernel;
    nn::Tensor<T> gpadded;
    nn::correlate_backward(b.kernel, b.padded_search, gfused, gkernel, gpadded);
    const int lo = pad_lo(b.kernel.height);
    const int n = b.padded_search.height - (b.kernel.height - 1);
    const nn::Tensor<T> gax = nn::crop_pad_gradient(gpadded, lo, lo, n, n);
    nn::Tensor<T> gfx = nn::stack_backward<T>(adapter, p, b.adapter_x, gax, gp);
    if (grad_fx.values.empty()) {
      grad_fx = std::move(gfx);
    } else {
      for (std::size_t i = 0; i < gfx.values.size(); ++i) grad_fx.values[i] += gfx.values[i];
    }
    return nn::stack_backward<T>(adapter, p, b.adapter_z, gkernel, gp);
  }

  void run_backward(const Cache& cache, const HeadMaps<T>& maps, const HeadMaps<T>& grad,
                    std::span<T> grad_params, InputGradients<T>* inputs) const {
    const int g = maps.grid;
    nn::Tensor<T> gcls(2, g, g);
    nn::Tensor<T> greg(4, g, g);
    for (int y = 0; y < g; ++y) {
      for (int x = 0; x < g; ++x) {
        const std::size_t i = maps.cell(x, y);
        const T c = maps.cls[i];
        const T q = maps.quality[i];
        gcls(0, y, x) = grad.cls[i] * c * (T{1} - c);
        gcls(1, y, x) = grad.quality[i] * q * (T{1} - q);
        for (int k = 0; k < 4; ++k) greg(k, y, x) = grad.reg[i * 4 + k] * maps.reg[i * 4 + k];
      }
    }
    nn::Tensor<T> grad_fx;
    nn::Tensor<T> grad_fz = branch_backward(adapter_cls_, head_cls_, cache.cls, gcls, grad_params, grad_fx);
    const nn::Tensor<T> gz_reg = branch_backward(adapter_reg_, head_reg_, cache.reg, greg, grad_params, grad_fx);
    for (std::size_t i = 0; i < grad_fz.values.size(); ++i) grad_fz.values[i] += gz_reg.values[i];

    std::span<const T> p = params_;
    const bool want_inputs = inputs != nullptr;
    nn::Tensor<T> gz = nn::stack_backward<T>(backbone_, p, cache.backbone_z, grad_fz, grad_params, want_inputs);
    nn::Tensor<T> gx = nn::stack_backward<T>(backbone_, p, cache.backbone_x, grad_fx, grad_params, want_inputs);
    if (want_inputs) {
      inputs->template_grad = to_interleaved_grad(gz);
      inputs->search_grad = to_interleaved_grad(gx);
    }
  }

  TinyTrackerConfig cfg_;
  std::vector<nn::ConvStage> backbone_;
  std::vector<nn::ConvStage> adapter_cls_;
  std::vector<nn::ConvStage> adapter_reg_;
  std::vector<nn::ConvStage> head_cls_;
  std::vector<nn::ConvStage> head_reg_;
  std::vector<T> params_;
};

template <typename T = float>
TinyTracker<T> build_reference_tracker(std::uint64_t seed, const TinyTrackerConfig& cfg = {}) {
  TinyTracker<T> tracker(cfg);
  tracker.initialize(seed);
  return tracker;
}

struct Detection {
  Box box;  // frame coordinates
  double score = 0.0;
  int cell_x = 0;
  int cell_y = 0;
};

inline std::vector<double> cosine_window(int g) {
  std::vector<double> hann(g, 1.0);
  if (g > 1) {
    for (int i = 0; i < g; ++i) hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (g - 1));
  }
  std::vector<double> w(static_cast<std::size_t>(g) * g);
  for (int y = 0; y < g; ++y) {
    for (int x = 0; x < g; ++x) w[static_cast<std::size_t>(y) * g + x] = hann[y] * hann[x];
  }
  return w;
}

// score = C * Q, optionally blended with a cosine window; ties resolve to the
// first cell in row-major order.
template <typename T>
Detection decode(const HeadMaps<T>& maps, const CropSpec& spec, const GridGeometry& g, double window_weight = 0.0) {
  if (maps.grid != g.grid_size) {
    throw std::invalid_argument("decode: map grid does not match geometry");
  }
  const std::vector<double> window = window_weight > 0.0 ? cosine_window(g.grid_size) : std::vector<double>{};
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < maps.cls.size(); ++i) {
    double s = static_cast<double>(maps.cls[i]) * static_cast<double>(maps.quality[i]);
    if (!window.empty()) s = (1.0 - window_weight) * s + window_weight * window[i];
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  Detection det;
  det.cell_x = static_cast<int>(best % g.grid_size);
  det.cell_y = static_cast<int>(best / g.grid_size);
  det.score = best_score;
  const Point c = grid_to_image(det.cell_x, det.cell_y, g);
  const double l = maps.reg[best * 4 + 0];
  const double t = maps.reg[best * 4 + 1];
  const double r = maps.reg[best * 4 + 2];
  const double b = maps.reg[best * 4 + 3];
  det.box = project_box({c.x - l, c.y - t, c.x + r, c.y + b}, spec, ProjectDirection::crop_to_frame);
  return det;
}

struct TrackerState {
  Point center;
  double width = 0.0;
  double height = 0.0;

  static TrackerState from_box(const Box& b) { return {b.center(), b.width(), b.height()}; }
  Box box() const { return Box::from_center(center, width, height); }
};

struct TrackOptions {
  double window_weight = 0.0;
  // Weight of the previous size in the size update.
  double size_momentum = 0.5;
  double min_size = 4.0;
};

// Moves the state to the detection, blending size with the previous estimate.
inline TrackerState update_state(const TrackerState& prev, const Box& detected, Size frame, const TrackOptions& opt) {
  TrackerState next;
  const Point c = detected.center();
  next.center = {std::clamp(c.x, 0.0, static_cast<double>(frame.width)),
                 std::clamp(c.y, 0.0, static_cast<double>(frame.height))};
  const double w = opt.size_momentum * prev.width + (1.0 - opt.size_momentum) * detected.width();
  const double h = opt.size_momentum * prev.height + (1.0 - opt.size_momentum) * detected.height();
  next.width = std::clamp(w, opt.min_size, static_cast<double>(frame.width));
  next.height = std::clamp(h, opt.min_size, static_cast<double>(frame.height));
  return next;
}

inline Size frame_size(const Frame& f) { return {f.width(), f.height()}; }

template <typename T>
Image<T> template_crop(const TrackerAdapter<T>& tracker, const Frame& frame, const Box& box) {
  const CropSpec spec = make_crop_spec(frame_size(frame), box, CropMode::template_crop, tracker.template_size(),
                                       tracker.search_size(), channel_mean(frame));
  return apply_crop<T>(frame, spec);
}

template <typename T>
std::pair<Image<T>, CropSpec> search_crop(const TrackerAdapter<T>& tracker, const Frame& frame, const Box& box) {
  const CropSpec spec = make_crop_spec(frame_size(frame), box, CropMode::search_crop, tracker.template_size(),
                                       tracker.search_size(), channel_mean(frame));
  return {apply_crop<T>(frame, spec), spec};
}

// Clean one-pass tracking; frame 0 reports init_box.
template <typename T>
std::vector<Box> track_sequence(const TrackerAdapter<T>& tracker, const std::vector<Frame>& video, const Box& init_box,
                                const TrackOptions& opt = {}) {
  if (video.empty()) {
    throw std::invalid_argument("track_sequence: empty video");
  }
  std::vector<Box> out{init_box};
  const Image<T> z = template_crop(tracker, video.front(), init_box);
  TrackerState state = TrackerState::from_box(init_box);
  const GridGeometry g = tracker.grid();
  for (std::size_t i = 1; i < video.size(); ++i) {
    auto [x, spec] = search_crop(tracker, video[i], state.box());
    const HeadMaps<T> maps = tracker.forward(z, x);
    const Detection det = decode(maps, spec, g, opt.window_weight);
    state = update_state(state, det.box, frame_size(video[i]), opt);
    out.push_back(state.box());
  }
  return out;
}

}  // namespace siamuap
