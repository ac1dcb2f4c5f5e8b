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

// Task generation, CSV ingestion, the unified label space, and the
// server/hospital partitioning with stratified train/val/test splits.

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hetfed/error.hpp"
#include "hetfed/matrix.hpp"
#include "hetfed/model.hpp"
#include "hetfed/rng.hpp"

namespace hetfed {

using TaskId = std::int32_t;
using HospitalId = std::int32_t;

struct GaussianBlobs {
  double center_scale = 3.0;
  double noise_sigma = 1.0;
  friend bool operator==(const GaussianBlobs&, const GaussianBlobs&) = default;
};

struct CsvSource {
  std::string path;
  friend bool operator==(const CsvSource&, const CsvSource&) = default;
};

struct TaskSpec {
  TaskId task_id = 0;
  std::size_t local_num_classes = 2;
  std::size_t feature_dim = 2;
  std::variant<GaussianBlobs, CsvSource> generator = GaussianBlobs{};
  std::size_t samples_per_class = 100;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

/// Rows of a classification problem. `row_ids` record where each row came
/// from in the source mixture so partitions can be audited.
struct Dataset {
  Matrix features;
  std::vector<Label> labels;
  std::vector<TaskId> task_of_sample;
  std::vector<std::size_t> row_ids;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t feature_dim() const { return features.cols; }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.features = Matrix(indices.size(), features.cols);
    out.labels.reserve(indices.size());
    out.task_of_sample.reserve(indices.size());
    out.row_ids.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const std::size_t i = indices[k];
      auto src = features.row(i);
      std::copy(src.begin(), src.end(), out.features.row(k).begin());
      out.labels.push_back(labels[i]);
      out.task_of_sample.push_back(task_of_sample[i]);
      out.row_ids.push_back(row_ids[i]);
    }
    return out;
  }

  void append(const Dataset& other) {
    if (other.empty()) return;
    if (empty() && features.cols == 0) features.cols = other.features.cols;
    if (other.features.cols != features.cols) {
      throw DimensionError(detail::concat("cannot append dataset with ",
                                          other.features.cols,
                                          " features to one with ",
                                          features.cols));
    }
    features.data.insert(features.data.end(), other.features.data.begin(),
                         other.features.data.end());
    features.rows += other.features.rows;
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    task_of_sample.insert(task_of_sample.end(), other.task_of_sample.begin(),
                          other.task_of_sample.end());
    row_ids.insert(row_ids.end(), other.row_ids.begin(), other.row_ids.end());
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct UnifiedLabelMap {
  std::vector<TaskId> task_ids;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> local_classes;
  std::size_t total_classes = 0;

  std::size_t index_of(TaskId task) const {
    for (std::size_t i = 0; i < task_ids.size(); ++i) {
      if (task_ids[i] == task) return i;
    }
    throw InvalidArgument(detail::concat("task ", task, " is not registered"));
  }
  std::size_t offset_of(TaskId task) const { return offsets[index_of(task)]; }
};

enum class Scenario { StronglyNonIID, ModeratelyNonIID };

inline const char* to_string(Scenario s) {
  return s == Scenario::StronglyNonIID ? "strong" : "moderate";
}

struct PartitionPlan {
  Scenario scenario = Scenario::StronglyNonIID;
  double dirichlet_beta = 0.3;
  std::size_t hospitals_per_task = 8;
  double server_fraction = 0.05;
  std::array<double, 3> split_fractions{0.70, 0.10, 0.20};

  friend bool operator==(const PartitionPlan&, const PartitionPlan&) = default;
};

struct HospitalData {
  HospitalId hospital_id = 0;
  TaskId task_id = 0;
  Dataset train;
  Dataset val;
  Dataset test;
};

struct SplitResult {
  Dataset train;
  Dataset val;
  Dataset test;
  std::vector<std::string> warnings;
};

struct PartitionResult {
  std::vector<HospitalData> hospitals;
  Dataset server_set;
  std::vector<std::string> warnings;
};

struct Mixture {
  Dataset data;
  UnifiedLabelMap label_map;
};

namespace detail {

/// Splits `total` items in proportion to `weights` with the largest
/// remainder method. Ties in the remainder go to the lower index.
inline std::vector<std::size_t> apportion(std::size_t total,
                                          std::span<const double> weights) {
  std::vector<std::size_t> counts(weights.size(), 0);
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || !(sum > 0.0)) return counts;
  std::vector<double> remainder(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double quota = static_cast<double>(total) * weights[i] / sum;
    counts[i] = static_cast<std::size_t>(std::floor(quota));
    remainder[i] = quota - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b];
  });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) {
    ++counts[order[k % order.size()]];
  }
  return counts;
}

/// Row indices grouped by label, labels ascending.
inline std::map<Label, std::vector<std::size_t>> rows_by_label(const Dataset& ds) {
  std::map<Label, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.size(); ++i) groups[ds.labels[i]].push_back(i);
  return groups;
}

inline void check_fractions(std::span<const double> fractions) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) {
      throw InvalidArgument(concat("split fraction must be >= 0, got ", f));
    }
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InvalidArgument(concat("split fractions must sum to 1, got ", sum));
  }
}

inline constexpr std::size_t kMinStratifiedClass = 3;

// Train/val sizes a stratified split would produce for the given class sizes.
inline std::array<std::size_t, 3> split_sizes(std::span<const std::size_t> class_sizes,
                                              std::span<const double> fractions) {
  std::array<std::size_t, 3> sizes{0, 0, 0};
  for (std::size_t n : class_sizes) {
    if (n == 0) continue;
    if (n < kMinStratifiedClass) {
      sizes[0] += n;
      continue;
    }
    auto counts = apportion(n, fractions);
    for (std::size_t s = 0; s < 3; ++s) sizes[s] += counts[s];
  }
  return sizes;
}

inline double parse_double(std::string_view field, const std::string& where) {
  double value = 0.0;
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
    field.remove_suffix(1);
  }
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw FormatError(concat(where, ": cannot parse '", field, "' as a number"));
  }
  return value;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

}  // namespace detail

/// Samples a synthetic task (GaussianBlobs) or loads it from disk (CsvSource).
/// Labels are task-local, in [0, local_num_classes).
inline Dataset load_csv(const std::string& path, std::size_t local_num_classes,
                        std::size_t feature_dim);

inline Dataset generate_task(const TaskSpec& spec, std::uint64_t seed) {
  if (spec.local_num_classes < 2) {
    throw InvalidArgument(detail::concat("task ", spec.task_id,
                                         " needs at least 2 classes"));
  }
  if (spec.feature_dim < 1) {
    throw InvalidArgument(detail::concat("task ", spec.task_id,
                                         " needs feature_dim >= 1"));
  }
  if (const auto* csv = std::get_if<CsvSource>(&spec.generator)) {
    Dataset ds = load_csv(csv->path, spec.local_num_classes, spec.feature_dim);
    std::fill(ds.task_of_sample.begin(), ds.task_of_sample.end(), spec.task_id);
    return ds;
  }
  const auto& blobs = std::get<GaussianBlobs>(spec.generator);
  if (spec.samples_per_class < 1) {
    throw InvalidArgument(detail::concat("task ", spec.task_id,
                                         " needs samples_per_class >= 1"));
  }
  Rng rng(derive_seed(seed, {stream::kTask, static_cast<std::uint64_t>(spec.task_id)}));
  std::uniform_real_distribution<double> center(-blobs.center_scale, blobs.center_scale);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t C = spec.local_num_classes;
  const std::size_t d = spec.feature_dim;
  Matrix centers(C, d);
  for (double& v : centers.data) v = center(rng);

  Dataset ds;
  ds.features = Matrix(C * spec.samples_per_class, d);
  std::size_t row = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < spec.samples_per_class; ++i, ++row) {
      auto out = ds.features.row(row);
      for (std::size_t j = 0; j < d; ++j) {
        out[j] = centers(c, j) + blobs.noise_sigma * noise(rng);
      }
      ds.labels.push_back(static_cast<Label>(c));
      ds.task_of_sample.push_back(spec.task_id);
      ds.row_ids.push_back(row);
    }
  }
  return ds;
}

/// Reads `label,f1,...,fd` rows. A first line whose label field is not an
/// integer is treated as a header.
inline Dataset load_csv(const std::string& path, std::size_t local_num_classes,
                        std::size_t feature_dim) {
  std::ifstream in(path);
  if (!in) throw IoError(detail::concat("cannot open CSV file '", path, "'"));
  Dataset ds;
  ds.features.cols = feature_dim;
  std::vector<double> row(feature_dim);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto fields = detail::split_fields(line);
    const std::string where = detail::concat(path, ":", line_no);

    long long label = 0;
    std::string_view label_field = fields[0];
    auto [ptr, ec] = std::from_chars(label_field.data(),
                                     label_field.data() + label_field.size(), label);
    const bool label_ok = ec == std::errc() && ptr == label_field.data() + label_field.size();
    if (!label_ok) {
      if (line_no == 1) continue;  // header
      throw FormatError(detail::concat(where, ": label '", label_field,
                                       "' is not an integer"));
    }
    if (fields.size() != feature_dim + 1) {
      throw FormatError(detail::concat(where, ": expected ", feature_dim + 1,
                                       " fields (label + ", feature_dim,
                                       " features), got ", fields.size()));
    }
    if (label < 0 || static_cast<unsigned long long>(label) >= local_num_classes) {
      throw FormatError(detail::concat(where, ": label ", label,
                                       " out of range [0, ", local_num_classes, ")"));
    }
    for (std::size_t j = 0; j < feature_dim; ++j) {
      row[j] = detail::parse_double(fields[j + 1], where);
    }
    ds.row_ids.push_back(ds.size());
    ds.features.append_row(row);
    ds.labels.push_back(static_cast<Label>(label));
    ds.task_of_sample.push_back(0);
  }
  return ds;
}

/// Offsets into the unified label space are prefix sums of class counts in
/// registration order.
inline UnifiedLabelMap build_unified(std::span<const TaskSpec> tasks) {
  if (tasks.empty()) throw InvalidArgument("at least one task is required");
  UnifiedLabelMap map;
  for (const auto& t : tasks) {
    for (TaskId seen : map.task_ids) {
      if (seen == t.task_id) {
        throw InvalidArgument(detail::concat("duplicate task id ", t.task_id));
      }
    }
    map.task_ids.push_back(t.task_id);
    map.offsets.push_back(map.total_classes);
    map.local_classes.push_back(t.local_num_classes);
    map.total_classes += t.local_num_classes;
  }
  return map;
}

/// Generates every task, zero-pads features to the widest task and shifts
/// labels into the unified space. Row ids are positions in the mixture.
inline Mixture build_mixture(std::span<const TaskSpec> tasks, std::uint64_t seed) {
  Mixture mix;
  mix.label_map = build_unified(tasks);
  std::size_t width = 0;
  for (const auto& t : tasks) width = std::max(width, t.feature_dim);
  mix.data.features.cols = width;
  std::vector<double> padded(width);
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    Dataset local = generate_task(tasks[k], seed);
    const auto offset = static_cast<Label>(mix.label_map.offsets[k]);
    for (std::size_t i = 0; i < local.size(); ++i) {
      std::fill(padded.begin(), padded.end(), 0.0);
      auto src = local.features.row(i);
      std::copy(src.begin(), src.end(), padded.begin());
      mix.data.row_ids.push_back(mix.data.size());
      mix.data.features.append_row(padded);
      mix.data.labels.push_back(local.labels[i] + offset);
      mix.data.task_of_sample.push_back(tasks[k].task_id);
    }
  }
  return mix;
}

/// Per-class stratified split with largest-remainder rounding. Classes with
/// fewer than three rows go entirely to train and leave a warning.
inline SplitResult stratified_split(const Dataset& ds, std::array<double, 3> fractions,
                                    std::uint64_t seed) {
  detail::check_fractions(fractions);
  Rng rng(seed);
  std::array<std::vector<std::size_t>, 3> picks;
  SplitResult result;
  for (auto& [label, rows] : detail::rows_by_label(ds)) {
    if (rows.size() < detail::kMinStratifiedClass) {
      picks[0].insert(picks[0].end(), rows.begin(), rows.end());
      result.warnings.push_back(detail::concat("class ", label, " has only ",
                                               rows.size(),
                                               " samples; all assigned to train"));
      continue;
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto counts = detail::apportion(rows.size(), fractions);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      picks[s].insert(picks[s].end(), rows.begin() + pos, rows.begin() + pos + counts[s]);
      pos += counts[s];
    }
  }
  result.train = ds.subset(picks[0]);
  result.val = ds.subset(picks[1]);
  result.test = ds.subset(picks[2]);
  for (Dataset* part : {&result.train, &result.val, &result.test}) {
    part->features.cols = ds.features.cols;
  }
  return result;
}

namespace detail {

inline std::vector<double> sample_dirichlet(std::size_t k, double beta, Rng& rng) {
  std::gamma_distribution<double> gamma(beta, 1.0);
  std::vector<double> p(k);
  double sum = 0.0;
  for (double& v : p) {
    v = gamma(rng);
    sum += v;
  }
  if (!(sum > 0.0)) {
    // Every draw underflowed (tiny beta): put all mass on one class.
    std::fill(p.begin(), p.end(), 0.0);
    p[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)] = 1.0;
    return p;
  }
  for (double& v : p) v /= sum;
  return p;
}

inline constexpr int kDirichletAttempts = 100;

}  // namespace detail

/// Removes `server_fraction` of every task into the server set, spreads the
/// remainder over `hospitals_per_task` hospitals per task, and stratifies each
/// hospital into train/val/test. Hospital ids are task-major.
inline PartitionResult partition(const Dataset& ds, const PartitionPlan& plan,
                                 std::uint64_t seed) {
  if (plan.hospitals_per_task < 1) throw InvalidArgument("hospitals_per_task must be >= 1");
  if (!(plan.server_fraction > 0.0 && plan.server_fraction < 1.0)) {
    throw InvalidArgument(detail::concat("server_fraction must be in (0, 1), got ",
                                         plan.server_fraction));
  }
  if (plan.scenario == Scenario::StronglyNonIID && !(plan.dirichlet_beta > 0.0)) {
    throw InvalidArgument(detail::concat("dirichlet_beta must be > 0, got ",
                                         plan.dirichlet_beta));
  }
  detail::check_fractions(plan.split_fractions);

  std::vector<TaskId> task_order;
  std::map<TaskId, std::vector<std::size_t>> task_rows;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto [it, inserted] = task_rows.try_emplace(ds.task_of_sample[i]);
    if (inserted) task_order.push_back(ds.task_of_sample[i]);
    it->second.push_back(i);
  }

  Rng rng(derive_seed(seed, {stream::kPartition}));
  const std::size_t H = plan.hospitals_per_task;
  PartitionResult result;
  std::vector<std::size_t> server_rows;
  HospitalId next_id = 0;

  for (TaskId task : task_order) {
    auto rows = task_rows[task];
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n_server = static_cast<std::size_t>(
        std::llround(plan.server_fraction * static_cast<double>(rows.size())));
    server_rows.insert(server_rows.end(), rows.begin(), rows.begin() + n_server);

    std::map<Label, std::vector<std::size_t>> by_class;
    for (auto it = rows.begin() + n_server; it != rows.end(); ++it) {
      by_class[ds.labels[*it]].push_back(*it);
    }
    // A class every row of which went to the server leaves hospitals empty-handed.
    for (std::size_t i : task_rows[task]) {
      if (!by_class.count(ds.labels[i])) {
        throw InfeasiblePlan(detail::concat("task ", task, ": class ", ds.labels[i],
                                            " has no samples left after server extraction"));
      }
    }
    std::vector<Label> classes;
    for (const auto& [label, _] : by_class) classes.push_back(label);
    const std::size_t C = classes.size();

    // counts[c][h]: rows of class c given to hospital h.
    std::vector<std::vector<std::size_t>> counts(C);
    auto feasible = [&](std::size_t& bad_hospital) {
      for (std::size_t h = 0; h < H; ++h) {
        std::vector<std::size_t> sizes(C);
        for (std::size_t c = 0; c < C; ++c) sizes[c] = counts[c][h];
        auto split = detail::split_sizes(sizes, plan.split_fractions);
        if (split[0] == 0 || split[1] == 0) {
          bad_hospital = h;
          return false;
        }
      }
      return true;
    };

    std::size_t bad = 0;
    if (plan.scenario == Scenario::ModeratelyNonIID) {
      std::vector<double> equal(H, 1.0);
      for (std::size_t c = 0; c < C; ++c) {
        counts[c] = detail::apportion(by_class[classes[c]].size(), equal);
      }
      if (!feasible(bad)) {
        throw InfeasiblePlan(detail::concat(
            "hospital ", next_id + static_cast<HospitalId>(bad), " (task ", task,
            ") would have an empty train or validation split"));
      }
    } else {
      bool ok = false;
      for (int attempt = 0; attempt < detail::kDirichletAttempts && !ok; ++attempt) {
        std::vector<std::vector<double>> mix(H);
        for (auto& p : mix) p = detail::sample_dirichlet(C, plan.dirichlet_beta, rng);
        for (std::size_t c = 0; c < C; ++c) {
          std::vector<double> weights(H);
          for (std::size_t h = 0; h < H; ++h) weights[h] = mix[h][c];
          if (std::accumulate(weights.begin(), weights.end(), 0.0) <= 0.0) {
            std::fill(weights.begin(), weights.end(), 1.0);
          }
          counts[c] = detail::apportion(by_class[classes[c]].size(), weights);
        }
        ok = feasible(bad);
      }
      if (!ok) {
        throw InfeasiblePlan(detail::concat(
            "hospital ", next_id + static_cast<HospitalId>(bad), " (task ", task,
            ") would have an empty train or validation split after ",
            detail::kDirichletAttempts, " Dirichlet draws; add samples or raise beta"));
      }
    }

    std::vector<std::vector<std::size_t>> assigned(H);
    for (std::size_t c = 0; c < C; ++c) {
      const auto& pool = by_class[classes[c]];
      std::size_t pos = 0;
      for (std::size_t h = 0; h < H; ++h) {
        assigned[h].insert(assigned[h].end(), pool.begin() + pos,
                           pool.begin() + pos + counts[c][h]);
        pos += counts[c][h];
      }
    }
    for (std::size_t h = 0; h < H; ++h) {
      std::sort(assigned[h].begin(), assigned[h].end());
      HospitalData hd;
      hd.hospital_id = next_id++;
      hd.task_id = task;
      auto split = stratified_split(
          ds.subset(assigned[h]), plan.split_fractions,
          derive_seed(seed, {stream::kSplit, static_cast<std::uint64_t>(hd.hospital_id)}));
      hd.train = std::move(split.train);
      hd.val = std::move(split.val);
      hd.test = std::move(split.test);
      for (auto& w : split.warnings) {
        result.warnings.push_back(detail::concat("hospital ", hd.hospital_id, ": ", w));
      }
      result.hospitals.push_back(std::move(hd));
    }
  }
  std::sort(server_rows.begin(), server_rows.end());
  result.server_set = ds.subset(server_rows);
  result.server_set.features.cols = ds.features.cols;
  return result;
}

}  // namespace hetfed
