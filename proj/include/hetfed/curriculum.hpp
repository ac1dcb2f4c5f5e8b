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

// Task-complexity scoring from training-loss curves and the resulting
// hospital ordering.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <unordered_set>
#include <vector>

#include "hetfed/data.hpp"
#include "hetfed/error.hpp"

namespace hetfed {

/// Per-batch mean training losses, batch 1 first.
struct LossTrace {
  std::vector<double> values;
  friend bool operator==(const LossTrace&, const LossTrace&) = default;
};

struct ComplexityScore {
  HospitalId hospital_id = 0;
  double slope = 0.0;
  std::size_t trace_len = 1;
  bool degenerate = false;
};

enum class OrderDirection { Ascending, Descending };

/// Least-squares slope of loss against batch index. A single-point trace has
/// no slope; 0.0 is returned and `degenerate` is set when requested.
inline double loss_slope(std::span<const double> trace, bool* degenerate = nullptr) {
  if (trace.empty()) throw InvalidArgument("loss trace is empty");
  for (double v : trace) {
    if (!std::isfinite(v)) throw NumericalError("loss trace contains a non-finite value");
  }
  const std::size_t n = trace.size();
  if (degenerate) *degenerate = n == 1;
  if (n == 1) return 0.0;

  // Batch indices run 1..n, so their mean and centered sum of squares are
  // closed-form: b_bar = (n+1)/2, sum (b-b_bar)^2 = n(n^2-1)/12.
  const double nd = static_cast<double>(n);
  const double b_bar = (nd + 1.0) / 2.0;
  double l_bar = 0.0;
  for (double v : trace) l_bar += v;
  l_bar /= nd;
  double num = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (static_cast<double>(i + 1) - b_bar) * (trace[i] - l_bar);
  }
  const double den = nd * (nd * nd - 1.0) / 12.0;
  return num / den;
}

inline double loss_slope(const LossTrace& trace, bool* degenerate = nullptr) {
  return loss_slope(std::span<const double>(trace.values), degenerate);
}

inline ComplexityScore score(HospitalId hospital, const LossTrace& trace) {
  ComplexityScore s;
  s.hospital_id = hospital;
  s.slope = loss_slope(trace, &s.degenerate);
  s.trace_len = trace.values.size();
  return s;
}

/// Hospitals sorted by slope (most negative first when ascending), ties by id.
inline std::vector<HospitalId> order_hospitals(
    std::span<const ComplexityScore> scores,
    OrderDirection direction = OrderDirection::Ascending) {
  std::unordered_set<HospitalId> seen;
  for (const auto& s : scores) {
    if (!seen.insert(s.hospital_id).second) {
      throw InvalidArgument(detail::concat("duplicate score for hospital ", s.hospital_id));
    }
    if (!std::isfinite(s.slope)) {
      throw NumericalError(detail::concat("hospital ", s.hospital_id, " has a non-finite slope"));
    }
  }
  std::vector<ComplexityScore> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
    if (a.slope != b.slope) {
      return direction == OrderDirection::Ascending ? a.slope < b.slope : a.slope > b.slope;
    }
    return a.hospital_id < b.hospital_id;
  });
  std::vector<HospitalId> order;
  order.reserve(sorted.size());
  for (const auto& s : sorted) order.push_back(s.hospital_id);
  return order;
}

/// Like order_hospitals, but also checks that every id in `expected` is
/// scored exactly once.
inline std::vector<HospitalId> order_hospitals(
    std::span<const ComplexityScore> scores, std::span<const HospitalId> expected,
    OrderDirection direction = OrderDirection::Ascending) {
  auto order = order_hospitals(scores, direction);
  std::unordered_set<HospitalId> have(order.begin(), order.end());
  for (HospitalId id : expected) {
    if (!have.count(id)) throw InvalidArgument(detail::concat("missing score for hospital ", id));
  }
  if (order.size() != expected.size()) {
    throw InvalidArgument(detail::concat("got ", order.size(), " scores for ",
                                         expected.size(), " hospitals"));
  }
  return order;
}

}  // namespace hetfed
