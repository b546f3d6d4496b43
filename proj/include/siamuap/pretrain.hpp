#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "siamuap/errors.hpp"
#include "siamuap/labels.hpp"
#include "siamuap/losses.hpp"
#include "siamuap/sampling.hpp"
#include "siamuap/tracker.hpp"

namespace siamuap {

struct AdamConfig {
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
class Adam {
 public:
  Adam(std::size_t n, AdamConfig cfg) : cfg_{cfg}, m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<T> params, std::span<const T> grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = static_cast<double>(grad[i]) + cfg_.weight_decay * static_cast<double>(params[i]);
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
      params[i] -= static_cast<T>(lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon));
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

struct PretrainConfig {
  int steps = 1500;
  int batch = 8;
  std::uint64_t seed = 7;
  AdamConfig adam;
  // Fraction of steps after which the learning rate decays linearly to 5%.
  double decay_start = 0.5;
  CropJitter jitter{32.0, 0.15};
  LossWeights weights;
  int log_every = 0;
  std::function<void(int step, double loss)> on_log;
};

// Fits the tracker to true labels with the same three-branch objective used
// by the attack.
template <typename T>
void pretrain_reference_tracker(TinyTracker<T>& model, const Dataset& data, const PretrainConfig& cfg) {
  if (cfg.steps <= 0) return;
  if (cfg.batch <= 0) throw std::invalid_argument("pretrain: batch must be positive");
  std::mt19937_64 rng(cfg.seed);
  const GridGeometry g = model.grid();
  Adam<T> opt(model.parameter_count(), cfg.adam);
  std::vector<T> grad(model.parameter_count());
  for (int step = 0; step < cfg.steps; ++step) {
    std::fill(grad.begin(), grad.end(), T{});
    double loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      TrainingSample<T> s;
      FakeLabels labels;
      for (int attempt = 0;; ++attempt) {
        s = sample_training_pair(data, model, rng, cfg.jitter);
        labels = make_fake_labels(s.real_box, g);
        if (labels.n_pos > 0) break;
        if (attempt >= 8) throw TrainingFailure("pretrain: no positive cells after 8 resamples");
      }
      const T scale = static_cast<T>(1.0 / cfg.batch);
      model.parameter_gradients(
          s.z, s.x,
          [&](const HeadMaps<T>& maps) {
            HeadMaps<T> gm;
            loss += branch_loss(maps, labels, g, cfg.weights, &gm).total / cfg.batch;
            for (auto* v : {&gm.cls, &gm.reg, &gm.quality}) {
              for (auto& e : *v) e *= scale;
            }
            return gm;
          },
          grad);
    }
    if (!std::isfinite(loss)) {
      throw TrainingFailure("pretrain: non-finite loss at step " + std::to_string(step));
    }
    const double progress = static_cast<double>(step) / cfg.steps;
    double lr = cfg.adam.learning_rate;
    if (progress > cfg.decay_start) {
      lr *= 1.0 - 0.95 * (progress - cfg.decay_start) / (1.0 - cfg.decay_start);
    }
    opt.step(model.mutable_params(), grad, lr);
    if (cfg.on_log && cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
      cfg.on_log(step, loss);
    }
  }
}

}  // namespace siamuap
