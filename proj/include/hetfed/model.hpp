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

// Small differentiable classifiers over a unified label space: softmax
// regression and a one-hidden-layer ReLU MLP. Parameters live in one flat
// vector so they can be relayed, mixed and checkpointed without knowing the
// architecture.
//
// Parameter layout (row-major, out x in):
//   Softmax: W[C x d], b[C]
//   MLP:     W1[h x d], b1[h], W2[C x h], b2[C]

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hetfed/error.hpp"
#include "hetfed/matrix.hpp"
#include "hetfed/rng.hpp"

namespace hetfed {

using Label = std::int32_t;

enum class ModelKind : std::uint32_t { Softmax = 0, MLP = 1 };

inline const char* to_string(ModelKind kind) {
  return kind == ModelKind::Softmax ? "softmax" : "mlp";
}

struct ModelSpec {
  ModelKind kind = ModelKind::Softmax;
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 0;
  std::size_t num_classes = 2;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

inline void validate(const ModelSpec& spec) {
  if (spec.num_classes < 2) {
    throw InvalidArgument(detail::concat("model num_classes must be >= 2, got ",
                                         spec.num_classes));
  }
  if (spec.input_dim < 1) throw InvalidArgument("model input_dim must be >= 1");
  if (spec.kind == ModelKind::MLP && spec.hidden_dim < 1) {
    throw InvalidArgument("mlp model requires hidden_dim >= 1");
  }
}

inline std::size_t parameter_count(const ModelSpec& spec) {
  if (spec.kind == ModelKind::Softmax) {
    return spec.input_dim * spec.num_classes + spec.num_classes;
  }
  return spec.input_dim * spec.hidden_dim + spec.hidden_dim +
         spec.hidden_dim * spec.num_classes + spec.num_classes;
}

/// Flat parameter vector tagged with the architecture it belongs to.
struct WeightVector {
  ModelSpec spec;
  std::vector<double> values;

  WeightVector() = default;
  explicit WeightVector(const ModelSpec& s)
      : spec(s), values(parameter_count(s), 0.0) {}

  std::size_t size() const { return values.size(); }

  friend bool operator==(const WeightVector&, const WeightVector&) = default;
};

struct Batch {
  Matrix features;
  std::vector<Label> labels;
};

namespace detail {

inline void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericalError(concat(what, " produced a non-finite value"));
    }
  }
}

inline void check_shape(const WeightVector& w) {
  if (w.values.size() != parameter_count(w.spec)) {
    throw DimensionError(concat("weight vector has ", w.values.size(),
                                " entries, spec expects ",
                                parameter_count(w.spec)));
  }
}

inline void check_features(const ModelSpec& spec, const Matrix& features) {
  if (features.cols != spec.input_dim) {
    throw DimensionError(concat("feature dimension mismatch: expected ",
                                spec.input_dim, ", got ", features.cols));
  }
}

inline void check_inputs(const WeightVector& w, const Matrix& features,
                         std::span<const Label> labels) {
  check_shape(w);
  check_features(w.spec, features);
  if (features.rows == 0) throw DimensionError("batch is empty");
  if (labels.size() != features.rows) {
    throw DimensionError(concat("batch has ", features.rows,
                                " feature rows but ", labels.size(), " labels"));
  }
  for (Label y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= w.spec.num_classes) {
      throw DimensionError(concat("label ", y, " outside [0, ",
                                  w.spec.num_classes, ")"));
    }
  }
}

// out = W x + b for a [rows x cols] block W at `weights`, bias right after.
inline void affine(const double* weights, std::size_t rows, std::size_t cols,
                   std::span<const double> x, double* out) {
  const double* bias = weights + rows * cols;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = weights + r * cols;
    double acc = bias[r];
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    out[r] = acc;
  }
}

/// Reusable scratch for one forward/backward pass.
struct Scratch {
  std::vector<double> hidden;
  std::vector<double> logits;
  std::vector<double> delta_out;
  std::vector<double> delta_hidden;

  void reserve(const ModelSpec& spec) {
    hidden.resize(spec.hidden_dim);
    logits.resize(spec.num_classes);
    delta_out.resize(spec.num_classes);
    delta_hidden.resize(spec.hidden_dim);
  }
};

// Computes logits for one row into scratch.logits (and hidden activations).
inline void forward_row(const WeightVector& w, std::span<const double> x,
                        Scratch& s) {
  const ModelSpec& spec = w.spec;
  const double* p = w.values.data();
  if (spec.kind == ModelKind::Softmax) {
    affine(p, spec.num_classes, spec.input_dim, x, s.logits.data());
    return;
  }
  affine(p, spec.hidden_dim, spec.input_dim, x, s.hidden.data());
  for (double& a : s.hidden) a = a > 0.0 ? a : 0.0;
  const double* second = p + spec.hidden_dim * spec.input_dim + spec.hidden_dim;
  affine(second, spec.num_classes, spec.hidden_dim, s.hidden, s.logits.data());
}

// Row-max stabilized log-sum-exp.
inline double log_sum_exp(std::span<const double> logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - m);
  return m + std::log(sum);
}

inline double loss_and_gradient_impl(const WeightVector& w, const Matrix& features,
                                     std::span<const Label> labels,
                                     std::vector<double>* grad, Scratch& s) {
  const ModelSpec& spec = w.spec;
  s.reserve(spec);
  const std::size_t n = features.rows;
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad) grad->assign(w.values.size(), 0.0);

  const std::size_t d = spec.input_dim;
  const std::size_t h = spec.hidden_dim;
  const std::size_t C = spec.num_classes;

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto x = features.row(i);
    const auto y = static_cast<std::size_t>(labels[i]);
    forward_row(w, x, s);
    const double lse = log_sum_exp(s.logits);
    total += lse - s.logits[y];
    if (!grad) continue;

    for (std::size_t c = 0; c < C; ++c) {
      s.delta_out[c] = (std::exp(s.logits[c] - lse) - (c == y ? 1.0 : 0.0)) * inv_n;
    }
    double* g = grad->data();
    if (spec.kind == ModelKind::Softmax) {
      double* gb = g + C * d;
      for (std::size_t c = 0; c < C; ++c) {
        const double dc = s.delta_out[c];
        double* gw = g + c * d;
        for (std::size_t j = 0; j < d; ++j) gw[j] += dc * x[j];
        gb[c] += dc;
      }
      continue;
    }

    const double* w2 = w.values.data() + h * d + h;
    double* g_w1 = g;
    double* g_b1 = g + h * d;
    double* g_w2 = g_b1 + h;
    double* g_b2 = g_w2 + C * h;
    std::fill(s.delta_hidden.begin(), s.delta_hidden.end(), 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      const double dc = s.delta_out[c];
      const double* w2c = w2 + c * h;
      double* gw = g_w2 + c * h;
      for (std::size_t k = 0; k < h; ++k) {
        gw[k] += dc * s.hidden[k];
        s.delta_hidden[k] += dc * w2c[k];
      }
      g_b2[c] += dc;
    }
    for (std::size_t k = 0; k < h; ++k) {
      // hidden[k] == 0 exactly when the pre-activation was <= 0.
      if (s.hidden[k] <= 0.0) continue;
      const double dk = s.delta_hidden[k];
      double* gw = g_w1 + k * d;
      for (std::size_t j = 0; j < d; ++j) gw[j] += dk * x[j];
      g_b1[k] += dk;
    }
  }
  return total * inv_n;
}

}  // namespace detail

/// Glorot-uniform weights, zero biases. Deterministic in (spec, seed).
inline WeightVector init_weights(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  WeightVector w(spec);
  Rng rng(seed);
  auto fill_layer = [&](std::size_t offset, std::size_t fan_out, std::size_t fan_in) {
    const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-r, r);
    for (std::size_t i = 0; i < fan_out * fan_in; ++i) w.values[offset + i] = dist(rng);
    return offset + fan_out * fan_in + fan_out;  // skip the zero bias block
  };
  if (spec.kind == ModelKind::Softmax) {
    fill_layer(0, spec.num_classes, spec.input_dim);
  } else {
    std::size_t next = fill_layer(0, spec.hidden_dim, spec.input_dim);
    fill_layer(next, spec.num_classes, spec.hidden_dim);
  }
  return w;
}

/// Mean cross-entropy of the batch.
inline double forward_loss(const WeightVector& w, const Matrix& features,
                           std::span<const Label> labels) {
  detail::check_inputs(w, features, labels);
  detail::Scratch s;
  return detail::loss_and_gradient_impl(w, features, labels, nullptr, s);
}

inline double forward_loss(const WeightVector& w, const Batch& batch) {
  return forward_loss(w, batch.features, batch.labels);
}

/// Analytic gradient of forward_loss with respect to every parameter.
inline WeightVector gradient(const WeightVector& w, const Batch& batch) {
  detail::check_inputs(w, batch.features, batch.labels);
  detail::Scratch s;
  WeightVector g(w.spec);
  detail::loss_and_gradient_impl(w, batch.features, batch.labels, &g.values, s);
  return g;
}

/// Loss and gradient in one pass, writing the gradient into `grad`.
inline double loss_and_gradient(const WeightVector& w, const Batch& batch,
                                WeightVector& grad) {
  detail::check_inputs(w, batch.features, batch.labels);
  detail::Scratch s;
  grad.spec = w.spec;
  return detail::loss_and_gradient_impl(w, batch.features, batch.labels, &grad.values, s);
}

inline void sgd_step_inplace(WeightVector& w, const WeightVector& grad, double lr) {
  if (!(lr > 0.0)) {
    throw InvalidArgument(detail::concat("learning rate must be > 0, got ", lr));
  }
  if (grad.values.size() != w.values.size()) {
    throw DimensionError(detail::concat("gradient has ", grad.values.size(),
                                        " entries, weights have ",
                                        w.values.size()));
  }
  for (std::size_t i = 0; i < w.values.size(); ++i) w.values[i] -= lr * grad.values[i];
  detail::require_finite(w.values, "sgd step");
}

inline WeightVector sgd_step(WeightVector w, const WeightVector& grad, double lr) {
  sgd_step_inplace(w, grad, lr);
  return w;
}

/// Argmax class per row; ties go to the lowest index.
inline std::vector<Label> predict(const WeightVector& w, const Matrix& features) {
  detail::check_shape(w);
  detail::check_features(w.spec, features);
  detail::Scratch s;
  s.reserve(w.spec);
  std::vector<Label> out(features.rows);
  for (std::size_t i = 0; i < features.rows; ++i) {
    detail::forward_row(w, features.row(i), s);
    std::size_t best = 0;
    for (std::size_t c = 1; c < s.logits.size(); ++c) {
      if (s.logits[c] > s.logits[best]) best = c;
    }
    out[i] = static_cast<Label>(best);
  }
  return out;
}

}  // namespace hetfed
