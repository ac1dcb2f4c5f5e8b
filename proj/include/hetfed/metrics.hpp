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

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hetfed/data.hpp"
#include "hetfed/error.hpp"
#include "hetfed/model.hpp"

namespace hetfed {

/// counts[t][p]: samples of true class t predicted as p.
struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(std::size_t c = 0) : num_classes(c), counts(c * c, 0) {}

  std::uint64_t& at(std::size_t t, std::size_t p) { return counts[t * num_classes + p]; }
  std::uint64_t at(std::size_t t, std::size_t p) const { return counts[t * num_classes + p]; }

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
  std::uint64_t trace() const {
    std::uint64_t n = 0;
    for (std::size_t c = 0; c < num_classes; ++c) n += at(c, c);
    return n;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct MetricBundle {
  double accuracy = 0.0;
  double f1 = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;

  friend bool operator==(const MetricBundle&, const MetricBundle&) = default;
};

enum class Averaging { Macro, Micro };

inline ConfusionMatrix confusion(std::span<const Label> preds, std::span<const Label> truths,
                                 std::size_t num_classes) {
  if (preds.size() != truths.size()) {
    throw DimensionError(detail::concat("confusion: ", preds.size(), " predictions vs ",
                                        truths.size(), " labels"));
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Label t = truths[i];
    const Label p = preds[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes ||
        static_cast<std::size_t>(p) >= num_classes) {
      throw InvalidArgument(detail::concat("confusion: label pair (", t, ", ", p,
                                           ") at index ", i, " outside [0, ",
                                           num_classes, ")"));
    }
    ++cm.at(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return cm;
}

// Macro means run over classes that occur in the truths; a class whose
// denominator is zero contributes 0.
inline MetricBundle bundle(const ConfusionMatrix& cm, Averaging avg = Averaging::Macro) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw InvalidArgument("confusion matrix is empty");
  const std::size_t C = cm.num_classes;
  MetricBundle out;
  out.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);

  std::vector<std::uint64_t> row(C, 0), col(C, 0);
  for (std::size_t t = 0; t < C; ++t) {
    for (std::size_t p = 0; p < C; ++p) {
      row[t] += cm.at(t, p);
      col[p] += cm.at(t, p);
    }
  }
  auto ratio = [](std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };

  if (avg == Averaging::Micro) {
    // Single-label multiclass: micro precision = micro recall = accuracy.
    std::uint64_t tn = 0, fp = 0;
    for (std::size_t c = 0; c < C; ++c) {
      const std::uint64_t tp = cm.at(c, c);
      fp += col[c] - tp;
      tn += total - row[c] - (col[c] - tp);
    }
    out.sensitivity = out.accuracy;
    out.f1 = out.accuracy;
    out.specificity = ratio(tn, tn + fp);
    return out;
  }

  std::size_t present = 0;
  for (std::size_t c = 0; c < C; ++c) {
    if (row[c] == 0) continue;
    ++present;
    const std::uint64_t tp = cm.at(c, c);
    const std::uint64_t fn = row[c] - tp;
    const std::uint64_t fp = col[c] - tp;
    const std::uint64_t tn = total - tp - fn - fp;
    const double recall = ratio(tp, tp + fn);
    const double precision = ratio(tp, tp + fp);
    out.sensitivity += recall;
    out.specificity += ratio(tn, tn + fp);
    out.f1 += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  const auto k = static_cast<double>(present);
  out.sensitivity /= k;
  out.specificity /= k;
  out.f1 /= k;
  return out;
}

inline MetricBundle evaluate(const WeightVector& w, const Dataset& ds,
                             Averaging avg = Averaging::Macro) {
  const auto preds = predict(w, ds.features);
  return bundle(confusion(preds, ds.labels, w.spec.num_classes), avg);
}

/// Communication and computation accounting for one run. Single writer.
struct CostLedger {
  std::int64_t epoch_units = 0;
  std::int64_t server_epoch_units = 0;
  std::int64_t transfers = 0;
  std::int64_t payload_floats = 0;
  std::map<HospitalId, std::int64_t> hospital_epochs;
  std::map<std::string, double> compute_ms;

  double total_compute_ms() const {
    double t = 0.0;
    for (const auto& [_, ms] : compute_ms) t += ms;
    return t;
  }
};

inline void record_epochs(CostLedger& ledger, HospitalId hospital, std::int64_t epochs) {
  if (epochs < 0) throw InvalidArgument(detail::concat("negative epoch count ", epochs));
  ledger.epoch_units += epochs;
  ledger.hospital_epochs[hospital] += epochs;
}

inline void record_server_epochs(CostLedger& ledger, std::int64_t epochs) {
  if (epochs < 0) throw InvalidArgument(detail::concat("negative epoch count ", epochs));
  ledger.server_epoch_units += epochs;
}

inline void record_transfer(CostLedger& ledger, std::int64_t payload_size) {
  if (payload_size < 0) {
    throw InvalidArgument(detail::concat("negative payload size ", payload_size));
  }
  ledger.transfers += 1;
  ledger.payload_floats += payload_size;
}

inline void record_compute(CostLedger& ledger, const std::string& participant, double ms) {
  if (!(ms >= 0.0)) throw InvalidArgument(detail::concat("negative compute time ", ms));
  ledger.compute_ms[participant] += ms;
}

}  // namespace hetfed
