/*
 * Copyright 2026 The hetfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Training sessions: fixed-epoch mini-batch SGD and convergence-driven
// ("dynamic") training that evaluates validation loss every `strip` epochs
// and keeps the weights with the lowest validation loss.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "hetfed/curriculum.hpp"
#include "hetfed/data.hpp"
#include "hetfed/error.hpp"
#include "hetfed/model.hpp"
#include "hetfed/rng.hpp"

namespace hetfed {

struct DynamicConfig {
  int strip_local = 7;
  int strip_global = 10;
  int z = 3;
  double plateau_eps = 1e-4;
  int max_epochs = 100;
  double lr = 0.001;
  int batch_size = 64;

  friend bool operator==(const DynamicConfig&, const DynamicConfig&) = default;
};

inline void validate(const DynamicConfig& cfg) {
  if (cfg.z < 1) throw InvalidArgument(detail::concat("z must be >= 1, got ", cfg.z));
  if (cfg.strip_local < 1 || cfg.strip_global < 1) {
    throw InvalidArgument("strips must be >= 1");
  }
  if (!(cfg.lr > 0.0)) throw InvalidArgument(detail::concat("lr must be > 0, got ", cfg.lr));
  if (cfg.batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (cfg.max_epochs < 1) throw InvalidArgument("max_epochs must be >= 1");
  if (!(cfg.plateau_eps >= 0.0)) throw InvalidArgument("plateau_eps must be >= 0");
}

enum class StopReason { ValIncrease, Plateau, MaxEpochs };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::ValIncrease: return "val_increase";
    case StopReason::Plateau: return "plateau";
    case StopReason::MaxEpochs: return "max_epochs";
  }
  return "?";
}

inline std::optional<StopReason> stop_reason_from_string(const std::string& s) {
  if (s == "val_increase") return StopReason::ValIncrease;
  if (s == "plateau") return StopReason::Plateau;
  if (s == "max_epochs") return StopReason::MaxEpochs;
  return std::nullopt;
}

struct ValPoint {
  int epoch = 0;
  double loss = 0.0;
  friend bool operator==(const ValPoint&, const ValPoint&) = default;
};

struct TrainingOutcome {
  WeightVector best_weights;
  int epochs_trained = 0;
  LossTrace trace;
  std::vector<ValPoint> val_curve;
  StopReason stop_reason = StopReason::MaxEpochs;

  /// Minimum of val_curve; NaN when no validation was run (fixed sessions).
  double best_val_loss() const {
    double best = std::numeric_limits<double>::quiet_NaN();
    for (const auto& p : val_curve) {
      if (!(p.loss >= best)) best = p.loss;
    }
    return best;
  }

  friend bool operator==(const TrainingOutcome&, const TrainingOutcome&) = default;
};

/// Pull toward an anchor (FedProx). Applied as an exact proximal step,
///   w <- (w - lr*g + lr*mu*anchor) / (1 + lr*mu),
/// which is stable for any mu.
struct Proximal {
  const WeightVector* anchor = nullptr;
  double mu = 0.0;
};

/// Watches a sequence of validation losses and reports when training should
/// stop: ValIncrease after z consecutive strict increases, Plateau after z
/// consecutive relative changes below eps. Both need z+1 observations.
class ConvergenceMonitor {
 public:
  ConvergenceMonitor(int z, double plateau_eps) : z_(z), eps_(plateau_eps) {
    if (z < 1) throw InvalidArgument("z must be >= 1");
  }

  std::optional<StopReason> observe(double loss) {
    history_.push_back(loss);
    const std::size_t n = history_.size();
    const auto z = static_cast<std::size_t>(z_);
    if (n < z + 1) return std::nullopt;
    bool rising = true;
    bool flat = true;
    for (std::size_t i = n - z; i < n; ++i) {
      const double prev = history_[i - 1];
      const double cur = history_[i];
      rising = rising && cur > prev;
      flat = flat && std::abs(cur - prev) / std::max(std::abs(prev), 1e-12) < eps_;
    }
    if (rising) return StopReason::ValIncrease;
    if (flat) return StopReason::Plateau;
    return std::nullopt;
  }

  const std::vector<double>& history() const { return history_; }

 private:
  int z_;
  double eps_;
  std::vector<double> history_;
};

/// Mean per-sample cross-entropy over the whole set, one pass in row order.
inline double evaluate_val_loss(const WeightVector& w, const Dataset& val) {
  if (val.empty()) throw InvalidArgument("validation set is empty");
  return forward_loss(w, val.features, val.labels);
}

/// Replaces the default validation evaluation; receives the weights and the
/// epoch just completed. Used to inject curves in tests.
using ValEvaluator = std::function<double(const WeightVector&, int epoch)>;

namespace detail {

class EpochRunner {
 public:
  EpochRunner(const Dataset& train, const DynamicConfig& cfg, std::uint64_t seed,
              const Proximal* prox)
      : train_(train), cfg_(cfg), rng_(seed), prox_(prox), order_(train.size()) {
    if (train.empty()) throw InvalidArgument("training set is empty");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    batch_.features.cols = train.features.cols;
  }

  void run_epoch(WeightVector& w, LossTrace& trace) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    const auto bs = static_cast<std::size_t>(cfg_.batch_size);
    for (std::size_t start = 0; start < order_.size(); start += bs) {
      const std::size_t end = std::min(order_.size(), start + bs);
      gather(start, end);
      trace.values.push_back(loss_and_gradient(w, batch_, grad_));
      if (prox_ && prox_->mu > 0.0) {
        proximal_step(w);
      } else {
        sgd_step_inplace(w, grad_, cfg_.lr);
      }
    }
  }

 private:
  void gather(std::size_t start, std::size_t end) {
    const std::size_t b = end - start;
    const std::size_t d = train_.features.cols;
    batch_.features.rows = b;
    batch_.features.data.resize(b * d);
    batch_.labels.resize(b);
    for (std::size_t k = 0; k < b; ++k) {
      const std::size_t i = order_[start + k];
      auto src = train_.features.row(i);
      std::copy(src.begin(), src.end(), batch_.features.data.begin() + k * d);
      batch_.labels[k] = train_.labels[i];
    }
  }

  void proximal_step(WeightVector& w) {
    const auto& anchor = prox_->anchor->values;
    if (anchor.size() != w.values.size()) {
      throw DimensionError("proximal anchor does not match the weight shape");
    }
    const double lr = cfg_.lr;
    const double scale = 1.0 / (1.0 + lr * prox_->mu);
    for (std::size_t i = 0; i < w.values.size(); ++i) {
      w.values[i] = (w.values[i] - lr * grad_.values[i] + lr * prox_->mu * anchor[i]) * scale;
    }
    require_finite(w.values, "proximal step");
  }

  const Dataset& train_;
  const DynamicConfig& cfg_;
  Rng rng_;
  const Proximal* prox_;
  std::vector<std::size_t> order_;
  Batch batch_;
  WeightVector grad_;
};

}  // namespace detail

/// Exactly `epochs` epochs of shuffled mini-batch SGD; the last partial batch
/// is kept. The returned weights are the final ones.
inline TrainingOutcome train_fixed(const WeightVector& w, const Dataset& train, int epochs,
                                   const DynamicConfig& cfg, std::uint64_t seed,
                                   const Proximal* prox = nullptr) {
  validate(cfg);
  if (epochs < 1) throw InvalidArgument(detail::concat("epochs must be >= 1, got ", epochs));
  detail::EpochRunner runner(train, cfg, seed, prox);
  TrainingOutcome out;
  out.best_weights = w;
  for (int e = 0; e < epochs; ++e) runner.run_epoch(out.best_weights, out.trace);
  out.epochs_trained = epochs;
  out.stop_reason = StopReason::MaxEpochs;
  return out;
}

/// Trains until the convergence monitor fires on the validation losses taken
/// every `strip` epochs, or until cfg.max_epochs. If the cap is not a multiple
/// of `strip`, one more evaluation is taken at the cap.
inline TrainingOutcome train_dynamic(const WeightVector& w, const Dataset& train,
                                     const Dataset& val, const DynamicConfig& cfg,
                                     int strip, std::uint64_t seed,
                                     const ValEvaluator& evaluator = {}) {
  validate(cfg);
  if (strip < 1) throw InvalidArgument(detail::concat("strip must be >= 1, got ", strip));
  if (!evaluator && val.empty()) throw InvalidArgument("validation set is empty");
  detail::EpochRunner runner(train, cfg, seed, nullptr);
  ConvergenceMonitor monitor(cfg.z, cfg.plateau_eps);

  TrainingOutcome out;
  WeightVector current = w;
  out.best_weights = w;
  double best = std::numeric_limits<double>::infinity();
  out.stop_reason = StopReason::MaxEpochs;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    runner.run_epoch(current, out.trace);
    out.epochs_trained = epoch;
    const bool at_strip = epoch % strip == 0;
    if (!at_strip && epoch != cfg.max_epochs) continue;

    const double loss = evaluator ? evaluator(current, epoch) : evaluate_val_loss(current, val);
    out.val_curve.push_back({epoch, loss});
    if (loss < best) {
      best = loss;
      out.best_weights = current;
    }
    if (auto reason = monitor.observe(loss)) {
      out.stop_reason = *reason;
      break;
    }
  }
  return out;
}

}  // namespace hetfed
