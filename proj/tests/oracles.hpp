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

// Reference implementations used by the unit and acceptance tests. They are
// written from the definitions, deliberately naive, and share no code with
// the library beyond its data types.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "hetfed/hetfed.hpp"

namespace hetfed::oracle {

/// OLS slope of y against x = 1..n by solving the 2x2 normal equations
/// [n, Sx; Sx, Sxx] [a; b] = [Sy; Sxy] in long double with Cramer's rule.
inline double normal_equation_slope(const std::vector<double>& y) {
  const auto n = static_cast<long double>(y.size());
  long double sx = 0, sxx = 0, sy = 0, sxy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const long double x = static_cast<long double>(i + 1);
    sx += x;
    sxx += x * x;
    sy += y[i];
    sxy += x * y[i];
  }
  const long double det = n * sxx - sx * sx;
  return static_cast<double>((n * sxy - sx * sy) / det);
}

/// Mean cross-entropy of a softmax or one-hidden-layer ReLU model, computed
/// row by row straight from the parameter layout.
inline double cross_entropy(const WeightVector& w, const Matrix& x, const std::vector<Label>& y) {
  const auto& s = w.spec;
  const std::size_t d = s.input_dim, C = s.num_classes, h = s.hidden_dim;
  long double total = 0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    std::vector<long double> input(x.row(i).begin(), x.row(i).end());
    std::vector<long double> logits(C, 0);
    if (s.kind == ModelKind::Softmax) {
      for (std::size_t c = 0; c < C; ++c) {
        long double z = w.values[C * d + c];
        for (std::size_t j = 0; j < d; ++j) z += w.values[c * d + j] * input[j];
        logits[c] = z;
      }
    } else {
      const std::size_t b1 = h * d, w2 = b1 + h, b2 = w2 + C * h;
      std::vector<long double> hid(h);
      for (std::size_t u = 0; u < h; ++u) {
        long double z = w.values[b1 + u];
        for (std::size_t j = 0; j < d; ++j) z += w.values[u * d + j] * input[j];
        hid[u] = z > 0 ? z : 0;
      }
      for (std::size_t c = 0; c < C; ++c) {
        long double z = w.values[b2 + c];
        for (std::size_t u = 0; u < h; ++u) z += w.values[w2 + c * h + u] * hid[u];
        logits[c] = z;
      }
    }
    const long double m = *std::max_element(logits.begin(), logits.end());
    long double sum = 0;
    for (auto z : logits) sum += std::exp(z - m);
    total += (m + std::log(sum)) - logits[static_cast<std::size_t>(y[i])];
  }
  return static_cast<double>(total / static_cast<long double>(x.rows));
}

/// Central differences of the oracle loss.
inline std::vector<double> finite_difference_gradient(const WeightVector& w, const Matrix& x,
                                                      const std::vector<Label>& y,
                                                      double step = 1e-6) {
  std::vector<double> g(w.size());
  WeightVector probe = w;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double orig = probe.values[i];
    probe.values[i] = orig + step;
    const double up = cross_entropy(probe, x, y);
    probe.values[i] = orig - step;
    const double down = cross_entropy(probe, x, y);
    probe.values[i] = orig;
    g[i] = (up - down) / (2 * step);
  }
  return g;
}

/// Analytic mean gradient of softmax cross-entropy, in long double.
inline std::vector<double> softmax_gradient(const WeightVector& w, const Matrix& x,
                                            const std::vector<Label>& y) {
  const std::size_t d = w.spec.input_dim, C = w.spec.num_classes;
  std::vector<long double> g(w.size(), 0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    std::vector<long double> z(C);
    for (std::size_t c = 0; c < C; ++c) {
      z[c] = w.values[C * d + c];
      for (std::size_t j = 0; j < d; ++j) z[c] += w.values[c * d + j] * x.row(i)[j];
    }
    const long double m = *std::max_element(z.begin(), z.end());
    long double sum = 0;
    for (auto& v : z) sum += (v = std::exp(v - m));
    for (std::size_t c = 0; c < C; ++c) {
      const long double delta = z[c] / sum - (static_cast<std::size_t>(y[i]) == c ? 1 : 0);
      for (std::size_t j = 0; j < d; ++j) g[c * d + j] += delta * x.row(i)[j];
      g[C * d + c] += delta;
    }
  }
  std::vector<double> out(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    out[k] = static_cast<double>(g[k] / static_cast<long double>(x.rows));
  }
  return out;
}

/// Plain shuffled mini-batch SGD on a softmax model: each epoch permutes the
/// row indices with std::shuffle on `rng` and keeps the last partial batch.
inline WeightVector centralized_sgd(WeightVector w, const Dataset& train, int epochs,
                                    std::size_t batch, double lr, Rng& rng) {
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      Matrix xb(end - start, train.features.cols);
      std::vector<Label> yb;
      for (std::size_t k = start; k < end; ++k) {
        auto src = train.features.row(order[k]);
        std::copy(src.begin(), src.end(), xb.row(k - start).begin());
        yb.push_back(train.labels[order[k]]);
      }
      const auto g = softmax_gradient(w, xb, yb);
      for (std::size_t k = 0; k < g.size(); ++k) w.values[k] -= lr * g[k];
    }
  }
  return w;
}

struct StopPoint {
  int epoch = 0;
  StopReason reason = StopReason::MaxEpochs;
  int best_epoch = 0;
};

/// Hand simulation of the dynamic stopping rule over a validation curve given
/// per epoch (curve[e-1] is the loss after epoch e). Evaluations happen every
/// `strip` epochs and at max_epochs. After at least z+1 evaluations:
/// increase if each of the last z evaluations is strictly above the one
/// before it; plateau if each of the last z relative changes is below eps.
inline StopPoint simulate_stop(const std::vector<double>& curve, int strip, int z, double eps,
                               int max_epochs) {
  std::vector<std::pair<int, double>> evals;
  StopPoint out;
  double best = INFINITY;
  for (int e = 1; e <= max_epochs; ++e) {
    if (e % strip != 0 && e != max_epochs) continue;
    const double v = curve[static_cast<std::size_t>(e - 1)];
    evals.push_back({e, v});
    if (v < best) {
      best = v;
      out.best_epoch = e;
    }
    const int n = static_cast<int>(evals.size());
    if (n >= z + 1) {
      int ups = 0, flats = 0;
      for (int k = n - z; k < n; ++k) {
        const double prev = evals[static_cast<std::size_t>(k - 1)].second;
        const double cur = evals[static_cast<std::size_t>(k)].second;
        if (cur > prev) ++ups;
        if (std::fabs(cur - prev) / std::max(std::fabs(prev), 1e-12) < eps) ++flats;
      }
      if (ups == z) return {e, StopReason::ValIncrease, out.best_epoch};
      if (flats == z) return {e, StopReason::Plateau, out.best_epoch};
    }
    if (e == max_epochs) return {e, StopReason::MaxEpochs, out.best_epoch};
  }
  return out;
}

/// Checks the partition contract and returns a list of violations.
inline std::vector<std::string> partition_violations(const Dataset& source,
                                                     const PartitionResult& parts,
                                                     const PartitionPlan& plan) {
  std::vector<std::string> bad;
  std::multiset<std::size_t> seen;
  auto add = [&](const Dataset& ds) { seen.insert(ds.row_ids.begin(), ds.row_ids.end()); };
  for (const auto& h : parts.hospitals) {
    add(h.train);
    add(h.val);
    add(h.test);
    if (h.train.empty()) bad.push_back("hospital " + std::to_string(h.hospital_id) + " empty train");
    // Stratification: per class, each split is within one row of its share
    // (classes under three rows are exempt and go to train).
    std::map<Label, std::array<std::size_t, 3>> per_class;
    const Dataset* splits[3] = {&h.train, &h.val, &h.test};
    for (int s = 0; s < 3; ++s) {
      for (Label y : splits[s]->labels) per_class[y][static_cast<std::size_t>(s)]++;
    }
    for (const auto& [label, c] : per_class) {
      const std::size_t n = c[0] + c[1] + c[2];
      if (n < 3) {
        if (c[1] + c[2] != 0) bad.push_back("small class split outside train");
        continue;
      }
      for (int s = 0; s < 3; ++s) {
        const double exact = plan.split_fractions[static_cast<std::size_t>(s)] * n;
        if (std::fabs(static_cast<double>(c[static_cast<std::size_t>(s)]) - exact) > 1.0 + 1e-9) {
          bad.push_back("hospital " + std::to_string(h.hospital_id) + " class " +
                        std::to_string(label) + " split " + std::to_string(s) + " off by > 1");
        }
      }
    }
    for (const Dataset* ds : splits) {
      for (std::size_t i = 0; i < ds->size(); ++i) {
        if (ds->task_of_sample[i] != h.task_id) bad.push_back("row from another task");
        if (ds->labels[i] != source.labels[ds->row_ids[i]]) bad.push_back("label changed");
      }
    }
  }
  add(parts.server_set);
  if (seen.size() != source.size()) bad.push_back("row count mismatch");
  std::size_t expect = 0;
  for (auto r : seen) {
    if (r != expect) {
      bad.push_back("rows missing or duplicated near " + std::to_string(r));
      break;
    }
    ++expect;
  }
  return bad;
}

/// A small synthetic federation: `tasks` of the given class counts, each
/// split over `hospitals_per_task` hospitals.
inline RunConfig small_config(std::vector<std::size_t> classes = {2, 3},
                              std::size_t hospitals_per_task = 2,
                              std::size_t samples_per_class = 40) {
  RunConfig cfg = default_config();
  cfg.tasks.clear();
  for (std::size_t t = 0; t < classes.size(); ++t) {
    TaskSpec spec;
    spec.task_id = static_cast<TaskId>(t);
    spec.local_num_classes = classes[t];
    spec.feature_dim = 4;
    spec.samples_per_class = samples_per_class;
    spec.generator = GaussianBlobs{3.0, 1.0};
    cfg.tasks.push_back(spec);
  }
  cfg.partition.hospitals_per_task = hospitals_per_task;
  cfg.partition.scenario = Scenario::ModeratelyNonIID;
  cfg.partition.server_fraction = 0.2;
  cfg.federation.num_rounds = 3;
  cfg.federation.dynamic.lr = 0.05;
  cfg.federation.dynamic.batch_size = 8;
  cfg.federation.dynamic.strip_local = 2;
  cfg.federation.dynamic.strip_global = 2;
  cfg.federation.dynamic.max_epochs = 8;
  cfg.checkpoint_every = 1;
  return cfg;
}

inline Federation small_federation(const RunConfig& cfg, std::uint64_t seed = 7) {
  auto mixture = build_mixture(cfg.tasks, seed);
  return make_federation(model_spec(cfg), partition(mixture.data, cfg.partition, seed), seed);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("hetfed_test_" + name + "_" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace hetfed::oracle
