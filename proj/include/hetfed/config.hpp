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

// Run configuration: everything needed to regenerate the data, partition it,
// and run one algorithm. Loaded from JSON with unknown-field rejection, then
// validated in full before anything runs.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hetfed/data.hpp"
#include "hetfed/error.hpp"
#include "hetfed/federation.hpp"
#include "hetfed/model.hpp"

namespace hetfed {

struct RunConfig {
  FederationConfig federation;
  PartitionPlan partition;
  ModelKind model_kind = ModelKind::Softmax;
  std::size_t hidden_dim = 0;
  std::vector<TaskSpec> tasks;
  std::string out_dir;
  int checkpoint_every = 1;  // 0 disables per-round checkpoints
  int repetitions = 3;
  std::vector<double> alphas{0.1, 0.3, 0.5, 0.7, 0.9};

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Three blob tasks with 4, 11 and 8 classes, split over 8 hospitals each.
inline std::vector<TaskSpec> default_tasks() {
  std::vector<TaskSpec> tasks(3);
  const std::size_t classes[] = {4, 11, 8};
  const std::size_t dims[] = {16, 16, 12};
  const double noise[] = {1.2, 1.6, 2.0};
  for (std::size_t i = 0; i < 3; ++i) {
    tasks[i].task_id = static_cast<TaskId>(i);
    tasks[i].local_num_classes = classes[i];
    tasks[i].feature_dim = dims[i];
    tasks[i].samples_per_class = 120;
    tasks[i].generator = GaussianBlobs{3.0, noise[i]};
  }
  return tasks;
}

inline RunConfig default_config() {
  RunConfig cfg;
  cfg.tasks = default_tasks();
  return cfg;
}

inline ModelSpec model_spec(const RunConfig& cfg) {
  ModelSpec spec;
  spec.kind = cfg.model_kind;
  spec.hidden_dim = cfg.model_kind == ModelKind::MLP ? cfg.hidden_dim : 0;
  spec.input_dim = 0;
  spec.num_classes = 0;
  for (const auto& t : cfg.tasks) {
    spec.input_dim = std::max(spec.input_dim, t.feature_dim);
    spec.num_classes += t.local_num_classes;
  }
  return spec;
}

inline std::size_t hospital_count(const RunConfig& cfg) {
  return cfg.partition.hospitals_per_task * cfg.tasks.size();
}

/// Every problem with the configuration, one line per field.
inline std::vector<std::string> validation_errors(const RunConfig& cfg) {
  std::vector<std::string> errs;
  auto err = [&](auto&&... parts) { errs.push_back(detail::concat(parts...)); };
  const auto& f = cfg.federation;
  const auto& d = f.dynamic;
  const auto& p = cfg.partition;

  if (!(f.alpha >= 0.0 && f.alpha <= 1.0)) err("alpha: must be in [0, 1], got ", f.alpha);
  if (!(f.mu >= 0.0)) err("mu: must be >= 0, got ", f.mu);
  if (f.num_rounds < 1) err("rounds: must be >= 1, got ", f.num_rounds);
  if (f.local_epochs < 1) err("local_epochs: must be >= 1, got ", f.local_epochs);
  if (f.first_epochs < 1) err("first_epochs: must be >= 1, got ", f.first_epochs);
  if (f.workers < 1) err("workers: must be >= 1, got ", f.workers);
  if (d.strip_local < 1) err("dynamic.strip_local: must be >= 1, got ", d.strip_local);
  if (d.strip_global < 1) err("dynamic.strip_global: must be >= 1, got ", d.strip_global);
  if (d.z < 1) err("dynamic.z: must be >= 1, got ", d.z);
  if (!(d.plateau_eps >= 0.0)) err("dynamic.plateau_eps: must be >= 0, got ", d.plateau_eps);
  if (d.max_epochs < 1) err("dynamic.max_epochs: must be >= 1, got ", d.max_epochs);
  if (!(d.lr > 0.0 && std::isfinite(d.lr))) err("dynamic.lr: must be > 0, got ", d.lr);
  if (d.batch_size < 1) err("dynamic.batch_size: must be >= 1, got ", d.batch_size);

  if (!(p.dirichlet_beta > 0.0)) {
    err("partition.dirichlet_beta: must be > 0, got ", p.dirichlet_beta);
  }
  if (p.hospitals_per_task < 1) err("partition.hospitals_per_task: must be >= 1");
  if (!(p.server_fraction > 0.0 && p.server_fraction < 1.0)) {
    err("partition.server_fraction: must be in (0, 1), got ", p.server_fraction);
  }
  double sum = 0.0;
  for (double x : p.split_fractions) {
    if (!(x >= 0.0)) err("partition.split: fractions must be >= 0, got ", x);
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) err("partition.split: fractions must sum to 1, got ", sum);

  if (cfg.model_kind == ModelKind::MLP && cfg.hidden_dim < 1) {
    err("model.hidden_dim: must be >= 1 for the mlp model");
  }
  if (cfg.tasks.empty()) err("tasks: at least one task is required");
  std::set<TaskId> ids;
  for (std::size_t i = 0; i < cfg.tasks.size(); ++i) {
    const auto& t = cfg.tasks[i];
    const std::string at = detail::concat("tasks[", i, "].");
    if (!ids.insert(t.task_id).second) err(at, "id: duplicate task id ", t.task_id);
    if (t.local_num_classes < 2) err(at, "classes: must be >= 2, got ", t.local_num_classes);
    if (t.feature_dim < 1) err(at, "feature_dim: must be >= 1");
    if (const auto* csv = std::get_if<CsvSource>(&t.generator)) {
      if (csv->path.empty()) err(at, "path: required for csv tasks");
    } else {
      const auto& b = std::get<GaussianBlobs>(t.generator);
      if (t.samples_per_class < 1) err(at, "samples_per_class: must be >= 1");
      if (!(b.center_scale >= 0.0)) err(at, "center_scale: must be >= 0");
      if (!(b.noise_sigma >= 0.0)) err(at, "noise_sigma: must be >= 0");
    }
  }
  if (cfg.checkpoint_every < 0) err("checkpoint_every: must be >= 0");
  if (cfg.repetitions < 1) err("repetitions: must be >= 1, got ", cfg.repetitions);
  if (cfg.alphas.empty()) err("alphas: at least one value is required");
  for (double a : cfg.alphas) {
    if (!(a >= 0.0 && a <= 1.0)) err("alphas: every value must be in [0, 1], got ", a);
  }
  return errs;
}

inline void validate(const RunConfig& cfg) {
  auto errs = validation_errors(cfg);
  if (!errs.empty()) throw ConfigError(std::move(errs));
}

inline nlohmann::json to_json(const RunConfig& cfg) {
  using nlohmann::json;
  const auto& f = cfg.federation;
  const auto& d = f.dynamic;
  const auto& p = cfg.partition;
  json tasks = json::array();
  for (const auto& t : cfg.tasks) {
    json jt = {{"id", t.task_id},
               {"classes", t.local_num_classes},
               {"feature_dim", t.feature_dim},
               {"samples_per_class", t.samples_per_class}};
    if (const auto* csv = std::get_if<CsvSource>(&t.generator)) {
      jt["generator"] = "csv";
      jt["path"] = csv->path;
    } else {
      const auto& b = std::get<GaussianBlobs>(t.generator);
      jt["generator"] = "blobs";
      jt["center_scale"] = b.center_scale;
      jt["noise_sigma"] = b.noise_sigma;
    }
    tasks.push_back(std::move(jt));
  }
  return json{
      {"algorithm", to_string(f.algorithm)},
      {"seed", f.seed},
      {"rounds", f.num_rounds},
      {"local_epochs", f.local_epochs},
      {"alpha", f.alpha},
      {"first_epochs", f.first_epochs},
      {"mu", f.mu},
      {"order", f.order == OrderDirection::Ascending ? "asc" : "desc"},
      {"direct_relay", f.direct_relay},
      {"keep_round0", f.keep_round0},
      {"global_early_stop", f.global_early_stop},
      {"nofed_dynamic", f.nofed_dynamic},
      {"avg", f.avg == Averaging::Macro ? "macro" : "micro"},
      {"eval", f.eval == EvalMode::Pooled ? "pooled" : "per_hospital"},
      {"workers", f.workers},
      {"dynamic",
       {{"strip_local", d.strip_local},
        {"strip_global", d.strip_global},
        {"z", d.z},
        {"plateau_eps", d.plateau_eps},
        {"max_epochs", d.max_epochs},
        {"lr", d.lr},
        {"batch_size", d.batch_size}}},
      {"partition",
       {{"scenario", to_string(p.scenario)},
        {"dirichlet_beta", p.dirichlet_beta},
        {"hospitals_per_task", p.hospitals_per_task},
        {"server_fraction", p.server_fraction},
        {"split", p.split_fractions}}},
      {"model", {{"kind", to_string(cfg.model_kind)}, {"hidden_dim", cfg.hidden_dim}}},
      {"tasks", std::move(tasks)},
      {"out", cfg.out_dir},
      {"checkpoint_every", cfg.checkpoint_every},
      {"repetitions", cfg.repetitions},
      {"alphas", cfg.alphas},
  };
}

namespace detail {

// Reads fields out of a JSON object, recording type errors and unknown keys
// against a dotted path instead of throwing on the first one.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& obj, std::string path, std::vector<std::string>& errs)
      : obj_(obj), path_(std::move(path)), errs_(errs) {
    if (!obj_.is_object()) errs_.push_back(name("") + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return;
    const auto& v = obj_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
            throw std::invalid_argument("expected a non-negative integer");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
      }
      out = v.get<T>();
    } catch (const std::exception& e) {
      errs_.push_back(name(key) + ": " + e.what());
    }
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return nullptr;
    return &obj_.at(key);
  }

  std::string name(const std::string& key) const {
    if (path_.empty()) return key;
    return key.empty() ? path_ : path_ + "." + key;
  }

  void error(const std::string& key, const std::string& msg) {
    errs_.push_back(name(key) + ": " + msg);
  }

  void reject_unknown() {
    if (!obj_.is_object()) return;
    for (const auto& [key, _] : obj_.items()) {
      if (!seen_.count(key)) errs_.push_back(name(key) + ": unknown field");
    }
  }

 private:
  const nlohmann::json& obj_;
  std::string path_;
  std::vector<std::string>& errs_;
  std::set<std::string> seen_;
};

}  // namespace detail

/// Builds a RunConfig from JSON, starting from defaults. Unknown fields and
/// type errors are collected and thrown together as a ConfigError, along with
/// any range errors in the fields that did parse. A config that parses
/// cleanly is not range-checked here; that is left to validate().
inline RunConfig config_from_json(const nlohmann::json& j) {
  std::vector<std::string> errs;
  RunConfig cfg = default_config();
  auto& f = cfg.federation;
  detail::FieldReader top(j, "", errs);

  std::string algorithm = to_string(f.algorithm);
  top.get("algorithm", algorithm);
  if (auto a = algorithm_from_string(algorithm)) {
    f.algorithm = *a;
  } else {
    top.error("algorithm", "unknown algorithm '" + algorithm +
                               "' (expected unifed, fedavg, fedprox, fedseq or nofed)");
  }
  top.get("seed", f.seed);
  top.get("rounds", f.num_rounds);
  top.get("local_epochs", f.local_epochs);
  top.get("alpha", f.alpha);
  top.get("first_epochs", f.first_epochs);
  top.get("mu", f.mu);
  std::string order = "asc";
  top.get("order", order);
  if (order == "asc" || order == "desc") {
    f.order = order == "asc" ? OrderDirection::Ascending : OrderDirection::Descending;
  } else {
    top.error("order", "expected 'asc' or 'desc', got '" + order + "'");
  }
  top.get("direct_relay", f.direct_relay);
  top.get("keep_round0", f.keep_round0);
  top.get("global_early_stop", f.global_early_stop);
  top.get("nofed_dynamic", f.nofed_dynamic);
  std::string avg = "macro";
  top.get("avg", avg);
  if (avg == "macro" || avg == "micro") {
    f.avg = avg == "macro" ? Averaging::Macro : Averaging::Micro;
  } else {
    top.error("avg", "expected 'macro' or 'micro', got '" + avg + "'");
  }
  std::string eval = "pooled";
  top.get("eval", eval);
  if (eval == "pooled" || eval == "per_hospital") {
    f.eval = eval == "pooled" ? EvalMode::Pooled : EvalMode::PerHospital;
  } else {
    top.error("eval", "expected 'pooled' or 'per_hospital', got '" + eval + "'");
  }
  top.get("workers", f.workers);
  top.get("out", cfg.out_dir);
  top.get("checkpoint_every", cfg.checkpoint_every);
  top.get("repetitions", cfg.repetitions);
  top.get("alphas", cfg.alphas);

  if (const auto* jd = top.child("dynamic")) {
    detail::FieldReader r(*jd, "dynamic", errs);
    auto& d = f.dynamic;
    r.get("strip_local", d.strip_local);
    r.get("strip_global", d.strip_global);
    r.get("z", d.z);
    r.get("plateau_eps", d.plateau_eps);
    r.get("max_epochs", d.max_epochs);
    r.get("lr", d.lr);
    r.get("batch_size", d.batch_size);
    r.reject_unknown();
  }
  if (const auto* jp = top.child("partition")) {
    detail::FieldReader r(*jp, "partition", errs);
    auto& p = cfg.partition;
    std::string scenario = to_string(p.scenario);
    r.get("scenario", scenario);
    if (scenario == "strong" || scenario == "moderate") {
      p.scenario = scenario == "strong" ? Scenario::StronglyNonIID : Scenario::ModeratelyNonIID;
    } else {
      r.error("scenario", "expected 'strong' or 'moderate', got '" + scenario + "'");
    }
    r.get("dirichlet_beta", p.dirichlet_beta);
    r.get("hospitals_per_task", p.hospitals_per_task);
    r.get("server_fraction", p.server_fraction);
    if (const auto* js = r.child("split")) {
      if (js->is_array() && js->size() == 3 &&
          std::all_of(js->begin(), js->end(), [](const auto& x) { return x.is_number(); })) {
        for (std::size_t i = 0; i < 3; ++i) p.split_fractions[i] = (*js)[i].get<double>();
      } else {
        r.error("split", "expected an array of three numbers");
      }
    }
    r.reject_unknown();
  }
  if (const auto* jm = top.child("model")) {
    detail::FieldReader r(*jm, "model", errs);
    std::string kind = to_string(cfg.model_kind);
    r.get("kind", kind);
    if (kind == "softmax" || kind == "mlp") {
      cfg.model_kind = kind == "softmax" ? ModelKind::Softmax : ModelKind::MLP;
    } else {
      r.error("kind", "expected 'softmax' or 'mlp', got '" + kind + "'");
    }
    r.get("hidden_dim", cfg.hidden_dim);
    r.reject_unknown();
  }
  if (const auto* jt = top.child("tasks")) {
    if (!jt->is_array()) {
      top.error("tasks", "expected an array");
    } else {
      cfg.tasks.clear();
      for (std::size_t i = 0; i < jt->size(); ++i) {
        detail::FieldReader r((*jt)[i], detail::concat("tasks[", i, "]"), errs);
        TaskSpec t;
        t.task_id = static_cast<TaskId>(i);
        r.get("id", t.task_id);
        r.get("classes", t.local_num_classes);
        r.get("feature_dim", t.feature_dim);
        r.get("samples_per_class", t.samples_per_class);
        std::string generator = "blobs";
        r.get("generator", generator);
        GaussianBlobs blobs;
        r.get("center_scale", blobs.center_scale);
        r.get("noise_sigma", blobs.noise_sigma);
        CsvSource csv;
        r.get("path", csv.path);
        if (generator == "blobs") {
          t.generator = blobs;
        } else if (generator == "csv") {
          t.generator = csv;
        } else {
          r.error("generator", "expected 'blobs' or 'csv', got '" + generator + "'");
        }
        r.reject_unknown();
        cfg.tasks.push_back(std::move(t));
      }
    }
  }
  top.reject_unknown();
  if (!errs.empty()) {
    for (auto& e : validation_errors(cfg)) errs.push_back(std::move(e));
    throw ConfigError(std::move(errs));
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({detail::concat("config: cannot open '", path, "'")});
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({detail::concat("config: '", path, "' is not valid JSON: ", e.what())});
  }
  return config_from_json(j);
}

}  // namespace hetfed
