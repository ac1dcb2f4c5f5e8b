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

// Protocol orchestration. UniFed runs a one-epoch scoring phase, then per
// round relays the model through the hospitals in loss-slope order with
// convergence-driven local training, trains the server copy on its mixed
// set, and blends the two. FedAvg, FedProx, FedSeq and centralized training
// (NoFed) are provided as baselines on the same data.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hetfed/curriculum.hpp"
#include "hetfed/data.hpp"
#include "hetfed/error.hpp"
#include "hetfed/metrics.hpp"
#include "hetfed/model.hpp"
#include "hetfed/rng.hpp"
#include "hetfed/trainer.hpp"

namespace hetfed {

enum class Algorithm { UniFed, FedAvg, FedProx, FedSeq, NoFed };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::UniFed: return "unifed";
    case Algorithm::FedAvg: return "fedavg";
    case Algorithm::FedProx: return "fedprox";
    case Algorithm::FedSeq: return "fedseq";
    case Algorithm::NoFed: return "nofed";
  }
  return "?";
}

inline std::optional<Algorithm> algorithm_from_string(const std::string& s) {
  for (auto a : {Algorithm::UniFed, Algorithm::FedAvg, Algorithm::FedProx,
                 Algorithm::FedSeq, Algorithm::NoFed}) {
    if (s == to_string(a)) return a;
  }
  return std::nullopt;
}

enum class EvalMode { Pooled, PerHospital };

struct FederationConfig {
  Algorithm algorithm = Algorithm::UniFed;
  double mu = 0.01;  // FedProx only
  int num_rounds = 200;
  int local_epochs = 5;
  double alpha = 0.7;
  int first_epochs = 1;
  DynamicConfig dynamic;
  std::uint64_t seed = 1;
  OrderDirection order = OrderDirection::Ascending;
  bool direct_relay = false;
  bool keep_round0 = false;
  bool global_early_stop = true;
  bool nofed_dynamic = false;
  Averaging avg = Averaging::Macro;
  EvalMode eval = EvalMode::Pooled;
  int workers = 1;

  friend bool operator==(const FederationConfig&, const FederationConfig&) = default;
};

inline void validate(const FederationConfig& cfg) {
  validate(cfg.dynamic);
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) {
    throw InvalidArgument(detail::concat("alpha must be in [0, 1], got ", cfg.alpha));
  }
  if (!(cfg.mu >= 0.0)) throw InvalidArgument(detail::concat("mu must be >= 0, got ", cfg.mu));
  if (cfg.num_rounds < 0) throw InvalidArgument("num_rounds must be >= 0");
  if (cfg.local_epochs < 1) throw InvalidArgument("local_epochs must be >= 1");
  if (cfg.first_epochs < 1) throw InvalidArgument("first_epochs must be >= 1");
  if (cfg.workers < 1) throw InvalidArgument("workers must be >= 1");
}

/// The server's mixed set, split into its own train and validation parts.
struct ServerState {
  Dataset train;
  Dataset val;
};

struct Federation {
  ModelSpec spec;
  std::vector<HospitalData> hospitals;
  ServerState server;
};

/// One hospital session inside a round, in training order.
struct HospitalRound {
  HospitalId hospital_id = 0;
  int rank = 0;
  int epochs = 0;
  StopReason stop_reason = StopReason::MaxEpochs;
  double slope = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  std::string hash_in;
  std::string hash_out;

  bool operator==(const HospitalRound& o) const {
    auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    return hospital_id == o.hospital_id && rank == o.rank && epochs == o.epochs &&
           stop_reason == o.stop_reason && same(slope, o.slope) &&
           same(val_loss, o.val_loss) && hash_in == o.hash_in && hash_out == o.hash_out;
  }
};

struct RoundRecord {
  int round = 0;
  std::vector<HospitalId> ordering;
  std::vector<HospitalRound> hospitals;
  int transfers = 0;
  int server_epochs = 0;
  std::optional<StopReason> server_stop;
  /// Validation loss of the round's output model on the server val split.
  double global_val_loss = std::numeric_limits<double>::quiet_NaN();
  std::string hash_relay;   // theta_t^K
  std::string hash_server;  // theta_t^S
  MetricBundle metrics;

  bool operator==(const RoundRecord& o) const {
    auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    return round == o.round && ordering == o.ordering && hospitals == o.hospitals &&
           transfers == o.transfers && server_epochs == o.server_epochs &&
           server_stop == o.server_stop && same(global_val_loss, o.global_val_loss) &&
           hash_relay == o.hash_relay && hash_server == o.hash_server && metrics == o.metrics;
  }
};

struct RunResult {
  WeightVector final_weights;
  std::vector<RoundRecord> rounds;
  CostLedger ledger;
  MetricBundle final_metrics;
  int rounds_run = 0;
  bool early_stopped = false;
};

/// Called after every round with the record and the round's output model.
using RoundObserver = std::function<void(const RoundRecord&, const WeightVector&)>;

inline constexpr std::uint64_t kServerParticipant = 1ULL << 32;
inline constexpr std::uint64_t kCentralParticipant = (1ULL << 32) + 1;

/// Seed of the SGD shuffle stream for one training session.
inline std::uint64_t session_seed(std::uint64_t run_seed, int round, std::uint64_t participant) {
  return derive_seed(run_seed, {stream::kSession, static_cast<std::uint64_t>(round), participant});
}

inline std::uint64_t init_seed(std::uint64_t run_seed) {
  return derive_seed(run_seed, {stream::kInit});
}

inline std::string weights_hash(const WeightVector& w) {
  Fnv1a h;
  h.update(std::span<const double>(w.values));
  return h.hex();
}

/// alpha * theta_k + (1 - alpha) * theta_s, elementwise. The endpoints return
/// one input unchanged, and every coordinate stays between its two inputs.
inline WeightVector mix(const WeightVector& theta_k, const WeightVector& theta_s, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw InvalidArgument(detail::concat("alpha must be in [0, 1], got ", alpha));
  }
  if (!(theta_k.spec == theta_s.spec) || theta_k.size() != theta_s.size()) {
    throw DimensionError(detail::concat("cannot mix weight vectors of sizes ", theta_k.size(),
                                        " and ", theta_s.size()));
  }
  if (alpha == 1.0) return theta_k;
  if (alpha == 0.0) return theta_s;
  WeightVector out(theta_k.spec);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a = theta_k.values[i];
    const double b = theta_s.values[i];
    out.values[i] = std::clamp(alpha * a + (1.0 - alpha) * b, std::min(a, b), std::max(a, b));
  }
  return out;
}

/// Splits the pooled server sample into its train/val parts (90/10).
inline ServerState make_server_state(const Dataset& server_set, std::uint64_t seed) {
  auto split = stratified_split(server_set, {0.9, 0.1, 0.0},
                                derive_seed(seed, {stream::kServerSplit}));
  return {std::move(split.train), std::move(split.val)};
}

inline Federation make_federation(const ModelSpec& spec, PartitionResult parts,
                                  std::uint64_t seed) {
  Federation fed;
  fed.spec = spec;
  fed.hospitals = std::move(parts.hospitals);
  fed.server = make_server_state(parts.server_set, seed);
  return fed;
}

/// Union of hospital test sets in hospital order.
inline Dataset pooled(const Federation& fed, Dataset HospitalData::*part) {
  Dataset out;
  out.features.cols = fed.spec.input_dim;
  for (const auto& h : fed.hospitals) out.append(h.*part);
  return out;
}

/// Metrics of a global model: on the pooled test union, or the mean of
/// per-hospital metrics.
inline MetricBundle evaluate_global(const WeightVector& w, const Federation& fed,
                                    const FederationConfig& cfg) {
  if (cfg.eval == EvalMode::Pooled) {
    Dataset test = pooled(fed, &HospitalData::test);
    if (test.empty()) return {};
    return evaluate(w, test, cfg.avg);
  }
  MetricBundle sum;
  int n = 0;
  for (const auto& h : fed.hospitals) {
    if (h.test.empty()) continue;
    auto m = evaluate(w, h.test, cfg.avg);
    sum.accuracy += m.accuracy;
    sum.f1 += m.f1;
    sum.sensitivity += m.sensitivity;
    sum.specificity += m.specificity;
    ++n;
  }
  if (n == 0) return {};
  sum.accuracy /= n;
  sum.f1 /= n;
  sum.sensitivity /= n;
  sum.specificity /= n;
  return sum;
}

namespace detail {

inline void check_federation(const Federation& fed, bool need_server) {
  validate(fed.spec);
  if (fed.hospitals.empty()) throw InvalidArgument("federation has no hospitals");
  auto check = [&](const Dataset& ds, const std::string& what) {
    if (!ds.empty() && ds.features.cols != fed.spec.input_dim) {
      throw DimensionError(concat(what, " has ", ds.features.cols,
                                  " features but the model expects ", fed.spec.input_dim));
    }
    for (Label y : ds.labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= fed.spec.num_classes) {
        throw DimensionError(concat(what, " has label ", y, " outside the model's ",
                                    fed.spec.num_classes, " classes"));
      }
    }
  };
  for (const auto& h : fed.hospitals) {
    const std::string name = concat("hospital ", h.hospital_id);
    check(h.train, name + " train");
    check(h.val, name + " val");
    check(h.test, name + " test");
    if (h.train.empty()) throw InvalidArgument(name + " has an empty training set");
  }
  check(fed.server.train, "server train");
  check(fed.server.val, "server val");
  if (need_server && (fed.server.train.empty() || fed.server.val.empty())) {
    throw InvalidArgument("server data is empty but alpha < 1 needs server training");
  }
}

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

inline std::string hospital_name(HospitalId id) { return concat("hospital_", id); }

inline double val_loss_or_nan(const WeightVector& w, const Dataset& val) {
  return val.empty() ? std::numeric_limits<double>::quiet_NaN() : evaluate_val_loss(w, val);
}

// Runs fn(i) for i in [0, n), on up to `workers` threads, results in index order.
template <typename Fn>
auto parallel_map(std::size_t n, int workers, Fn fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<R> results;
  results.reserve(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) results.push_back(fn(i));
    return results;
  }
  for (std::size_t base = 0; base < n; base += static_cast<std::size_t>(workers)) {
    std::vector<std::future<R>> batch;
    const std::size_t end = std::min(n, base + static_cast<std::size_t>(workers));
    for (std::size_t i = base; i < end; ++i) {
      batch.push_back(std::async(std::launch::async, fn, i));
    }
    for (auto& f : batch) results.push_back(f.get());
  }
  return results;
}

inline std::vector<HospitalId> identity_order(const Federation& fed) {
  std::vector<HospitalId> ids;
  for (const auto& h : fed.hospitals) ids.push_back(h.hospital_id);
  return ids;
}

// Transfers for relaying a model through `k` hospitals in one round.
inline void record_relay_transfers(CostLedger& ledger, std::size_t k, bool direct,
                                   std::int64_t payload) {
  const std::size_t count = direct ? k + 1 : 2 * k;
  for (std::size_t i = 0; i < count; ++i) record_transfer(ledger, payload);
}

inline void emit(RunResult& result, RoundRecord rec, const WeightVector& global,
                 const RoundObserver& observer) {
  if (observer) observer(rec, global);
  result.rounds.push_back(std::move(rec));
}

}  // namespace detail

inline RunResult run_unifed(const FederationConfig& cfg, const Federation& fed,
                            const RoundObserver& observer = {}) {
  validate(cfg);
  detail::check_federation(fed, cfg.alpha < 1.0);
  const std::size_t K = fed.hospitals.size();
  const auto payload = static_cast<std::int64_t>(parameter_count(fed.spec));
  const DynamicConfig& dyn = cfg.dynamic;
  const bool have_server_val = !fed.server.val.empty();

  RunResult result;
  const WeightVector theta0 = init_weights(fed.spec, init_seed(cfg.seed));

  // Scoring phase: every hospital trains a copy of theta0 for first_epochs.
  struct Phase1 {
    TrainingOutcome outcome;
    double ms;
  };
  auto phase1 = detail::parallel_map(K, cfg.workers, [&](std::size_t k) {
    const auto& h = fed.hospitals[k];
    auto start = std::chrono::steady_clock::now();
    auto out = train_fixed(theta0, h.train, cfg.first_epochs, dyn,
                           session_seed(cfg.seed, 0, static_cast<std::uint64_t>(h.hospital_id)));
    return Phase1{std::move(out), detail::elapsed_ms(start)};
  });

  std::vector<ComplexityScore> scores(K);
  std::vector<std::size_t> index_of;  // hospital id -> position in fed.hospitals
  RoundRecord r0;
  r0.round = 0;
  r0.ordering = detail::identity_order(fed);
  const std::string theta0_hash = weights_hash(theta0);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& h = fed.hospitals[k];
    const auto& out = phase1[k].outcome;
    record_transfer(result.ledger, payload);
    record_transfer(result.ledger, payload);
    record_epochs(result.ledger, h.hospital_id, out.epochs_trained);
    record_compute(result.ledger, detail::hospital_name(h.hospital_id), phase1[k].ms);
    scores[k] = score(h.hospital_id, out.trace);
    r0.hospitals.push_back({h.hospital_id, static_cast<int>(k), out.epochs_trained,
                            out.stop_reason, scores[k].slope,
                            detail::val_loss_or_nan(out.best_weights, h.val), theta0_hash,
                            weights_hash(out.best_weights)});
    if (index_of.size() <= static_cast<std::size_t>(h.hospital_id)) {
      index_of.resize(static_cast<std::size_t>(h.hospital_id) + 1, K);
    }
    index_of[static_cast<std::size_t>(h.hospital_id)] = k;
  }
  r0.transfers = static_cast<int>(2 * K);
  r0.global_val_loss = detail::val_loss_or_nan(theta0, fed.server.val);
  r0.metrics = evaluate_global(theta0, fed, cfg);

  const auto expected = detail::identity_order(fed);
  WeightVector global = theta0;
  if (cfg.keep_round0 && cfg.num_rounds > 0) {
    auto first = order_hospitals(scores, expected, cfg.order).front();
    global = phase1[index_of[static_cast<std::size_t>(first)]].outcome.best_weights;
  }
  detail::emit(result, std::move(r0), theta0, observer);

  // Global stop: z consecutive rounds without a new best server-val loss.
  WeightVector best_global = global;
  double best_global_loss = std::numeric_limits<double>::infinity();
  int stale_rounds = 0;

  for (int t = 1; t <= cfg.num_rounds; ++t) {
    RoundRecord rec;
    rec.round = t;
    rec.ordering = order_hospitals(scores, expected, cfg.order);
    const auto transfers_before = result.ledger.transfers;
    detail::record_relay_transfers(result.ledger, K, cfg.direct_relay, payload);

    WeightVector current = global;
    for (std::size_t pos = 0; pos < K; ++pos) {
      const HospitalId id = rec.ordering[pos];
      const std::size_t k = index_of[static_cast<std::size_t>(id)];
      const auto& h = fed.hospitals[k];
      HospitalRound hr;
      hr.hospital_id = id;
      hr.rank = static_cast<int>(pos);
      hr.hash_in = weights_hash(current);
      auto start = std::chrono::steady_clock::now();
      auto out = train_dynamic(current, h.train, h.val, dyn, dyn.strip_local,
                               session_seed(cfg.seed, t, static_cast<std::uint64_t>(id)));
      record_compute(result.ledger, detail::hospital_name(id), detail::elapsed_ms(start));
      record_epochs(result.ledger, id, out.epochs_trained);
      scores[k] = score(id, out.trace);
      hr.epochs = out.epochs_trained;
      hr.stop_reason = out.stop_reason;
      hr.slope = scores[k].slope;
      hr.val_loss = out.best_val_loss();
      current = std::move(out.best_weights);
      hr.hash_out = weights_hash(current);
      rec.hospitals.push_back(std::move(hr));
    }
    rec.hash_relay = weights_hash(current);

    WeightVector next;
    if (cfg.alpha < 1.0) {
      // The server trains its kept copy of the previous global model.
      auto start = std::chrono::steady_clock::now();
      auto out = train_dynamic(global, fed.server.train, fed.server.val, dyn, dyn.strip_global,
                               session_seed(cfg.seed, t, kServerParticipant));
      record_compute(result.ledger, "server", detail::elapsed_ms(start));
      record_server_epochs(result.ledger, out.epochs_trained);
      rec.server_epochs = out.epochs_trained;
      rec.server_stop = out.stop_reason;
      rec.hash_server = weights_hash(out.best_weights);
      next = mix(current, out.best_weights, cfg.alpha);
    } else {
      next = std::move(current);
    }
    global = std::move(next);
    rec.transfers = static_cast<int>(result.ledger.transfers - transfers_before);
    rec.global_val_loss = detail::val_loss_or_nan(global, fed.server.val);
    rec.metrics = evaluate_global(global, fed, cfg);
    result.rounds_run = t;

    bool stop = false;
    if (have_server_val) {
      if (rec.global_val_loss < best_global_loss) {
        best_global_loss = rec.global_val_loss;
        best_global = global;
        stale_rounds = 0;
      } else {
        ++stale_rounds;
      }
      stop = cfg.global_early_stop && stale_rounds >= dyn.z;
    }
    detail::emit(result, std::move(rec), global, observer);
    if (stop) {
      result.early_stopped = true;
      break;
    }
  }

  result.final_weights = have_server_val && result.rounds_run > 0 ? best_global : global;
  result.final_metrics = evaluate_global(result.final_weights, fed, cfg);
  return result;
}

namespace detail {

// FedAvg and FedProx share everything but the proximal pull.
inline RunResult run_averaging(const FederationConfig& cfg, const Federation& fed, double mu,
                               const RoundObserver& observer) {
  validate(cfg);
  check_federation(fed, false);
  const std::size_t K = fed.hospitals.size();
  const auto payload = static_cast<std::int64_t>(parameter_count(fed.spec));

  double total = 0.0;
  for (const auto& h : fed.hospitals) total += static_cast<double>(h.train.size());

  RunResult result;
  WeightVector global = init_weights(fed.spec, init_seed(cfg.seed));
  for (int t = 1; t <= cfg.num_rounds; ++t) {
    RoundRecord rec;
    rec.round = t;
    rec.ordering = identity_order(fed);
    const Proximal prox{&global, mu};
    const std::string global_hash = weights_hash(global);

    struct Local {
      TrainingOutcome outcome;
      double ms;
    };
    auto locals = parallel_map(K, cfg.workers, [&](std::size_t k) {
      const auto& h = fed.hospitals[k];
      auto start = std::chrono::steady_clock::now();
      auto out = train_fixed(global, h.train, cfg.local_epochs, cfg.dynamic,
                             session_seed(cfg.seed, t, static_cast<std::uint64_t>(h.hospital_id)),
                             &prox);
      return Local{std::move(out), elapsed_ms(start)};
    });

    WeightVector aggregate(fed.spec);
    for (std::size_t k = 0; k < K; ++k) {
      const auto& h = fed.hospitals[k];
      const auto& w = locals[k].outcome.best_weights;
      record_transfer(result.ledger, payload);
      record_transfer(result.ledger, payload);
      record_epochs(result.ledger, h.hospital_id, locals[k].outcome.epochs_trained);
      record_compute(result.ledger, hospital_name(h.hospital_id), locals[k].ms);
      const double share = static_cast<double>(h.train.size()) / total;
      for (std::size_t i = 0; i < aggregate.size(); ++i) {
        aggregate.values[i] = k == 0 ? share * w.values[i] : aggregate.values[i] + share * w.values[i];
      }
      rec.hospitals.push_back({h.hospital_id, static_cast<int>(k),
                               locals[k].outcome.epochs_trained, StopReason::MaxEpochs,
                               loss_slope(locals[k].outcome.trace),
                               val_loss_or_nan(w, h.val), global_hash, weights_hash(w)});
    }
    global = std::move(aggregate);
    rec.transfers = static_cast<int>(2 * K);
    rec.global_val_loss = val_loss_or_nan(global, fed.server.val);
    rec.metrics = evaluate_global(global, fed, cfg);
    result.rounds_run = t;
    emit(result, std::move(rec), global, observer);
  }
  result.final_weights = std::move(global);
  result.final_metrics = evaluate_global(result.final_weights, fed, cfg);
  return result;
}

}  // namespace detail

/// Sample-size weighted averaging of fixed-epoch local updates.
inline RunResult run_fedavg(const FederationConfig& cfg, const Federation& fed,
                            const RoundObserver& observer = {}) {
  return detail::run_averaging(cfg, fed, 0.0, observer);
}

inline RunResult run_fedprox(const FederationConfig& cfg, const Federation& fed,
                             const RoundObserver& observer = {}) {
  return detail::run_averaging(cfg, fed, cfg.mu, observer);
}

/// Fixed-order sequential relay with fixed local epochs; no server learning.
inline RunResult run_fedseq(const FederationConfig& cfg, const Federation& fed,
                            const RoundObserver& observer = {}) {
  validate(cfg);
  detail::check_federation(fed, false);
  const std::size_t K = fed.hospitals.size();
  const auto payload = static_cast<std::int64_t>(parameter_count(fed.spec));

  RunResult result;
  WeightVector current = init_weights(fed.spec, init_seed(cfg.seed));
  for (int t = 1; t <= cfg.num_rounds; ++t) {
    RoundRecord rec;
    rec.round = t;
    rec.ordering = detail::identity_order(fed);
    const auto transfers_before = result.ledger.transfers;
    detail::record_relay_transfers(result.ledger, K, cfg.direct_relay, payload);
    for (std::size_t k = 0; k < K; ++k) {
      const auto& h = fed.hospitals[k];
      HospitalRound hr;
      hr.hospital_id = h.hospital_id;
      hr.rank = static_cast<int>(k);
      hr.hash_in = weights_hash(current);
      auto start = std::chrono::steady_clock::now();
      auto out = train_fixed(current, h.train, cfg.local_epochs, cfg.dynamic,
                             session_seed(cfg.seed, t, static_cast<std::uint64_t>(h.hospital_id)));
      record_compute(result.ledger, detail::hospital_name(h.hospital_id),
                     detail::elapsed_ms(start));
      record_epochs(result.ledger, h.hospital_id, out.epochs_trained);
      hr.epochs = out.epochs_trained;
      hr.slope = loss_slope(out.trace);
      current = std::move(out.best_weights);
      hr.val_loss = detail::val_loss_or_nan(current, h.val);
      hr.hash_out = weights_hash(current);
      rec.hospitals.push_back(std::move(hr));
    }
    rec.hash_relay = weights_hash(current);
    rec.transfers = static_cast<int>(result.ledger.transfers - transfers_before);
    rec.global_val_loss = detail::val_loss_or_nan(current, fed.server.val);
    rec.metrics = evaluate_global(current, fed, cfg);
    result.rounds_run = t;
    detail::emit(result, std::move(rec), current, observer);
  }
  result.final_weights = std::move(current);
  result.final_metrics = evaluate_global(result.final_weights, fed, cfg);
  return result;
}

/// Centralized training on the union of hospital training sets. Each central
/// epoch visits every hospital's data once, so it is booked as K hospital
/// epoch-units; the actual passes are booked as server epochs.
inline RunResult run_nofed(const FederationConfig& cfg, const Federation& fed,
                           const RoundObserver& observer = {}) {
  validate(cfg);
  detail::check_federation(fed, false);
  const Dataset train = pooled(fed, &HospitalData::train);
  const Dataset val = pooled(fed, &HospitalData::val);
  if (train.empty()) throw InvalidArgument("pooled training set is empty");

  RunResult result;
  WeightVector global = init_weights(fed.spec, init_seed(cfg.seed));
  auto book = [&](int epochs) {
    for (const auto& h : fed.hospitals) record_epochs(result.ledger, h.hospital_id, epochs);
    record_server_epochs(result.ledger, epochs);
  };

  if (cfg.nofed_dynamic && cfg.num_rounds > 0) {
    DynamicConfig dyn = cfg.dynamic;
    dyn.max_epochs = cfg.num_rounds * cfg.local_epochs;
    auto start = std::chrono::steady_clock::now();
    auto out = train_dynamic(global, train, val, dyn, dyn.strip_global,
                             session_seed(cfg.seed, 1, kCentralParticipant));
    record_compute(result.ledger, "central", detail::elapsed_ms(start));
    book(out.epochs_trained);
    global = std::move(out.best_weights);
    RoundRecord rec;
    rec.round = 1;
    rec.server_epochs = out.epochs_trained;
    rec.server_stop = out.stop_reason;
    rec.global_val_loss = detail::val_loss_or_nan(global, fed.server.val);
    rec.metrics = evaluate_global(global, fed, cfg);
    result.rounds_run = 1;
    detail::emit(result, std::move(rec), global, observer);
  } else {
    for (int t = 1; t <= cfg.num_rounds; ++t) {
      auto start = std::chrono::steady_clock::now();
      auto out = train_fixed(global, train, cfg.local_epochs, cfg.dynamic,
                             session_seed(cfg.seed, t, kCentralParticipant));
      record_compute(result.ledger, "central", detail::elapsed_ms(start));
      book(out.epochs_trained);
      global = std::move(out.best_weights);
      RoundRecord rec;
      rec.round = t;
      rec.server_epochs = out.epochs_trained;
      rec.server_stop = StopReason::MaxEpochs;
      rec.global_val_loss = detail::val_loss_or_nan(global, fed.server.val);
      rec.metrics = evaluate_global(global, fed, cfg);
      result.rounds_run = t;
      detail::emit(result, std::move(rec), global, observer);
    }
  }
  result.final_weights = std::move(global);
  result.final_metrics = evaluate_global(result.final_weights, fed, cfg);
  return result;
}

inline RunResult run(const FederationConfig& cfg, const Federation& fed,
                     const RoundObserver& observer = {}) {
  switch (cfg.algorithm) {
    case Algorithm::UniFed: return run_unifed(cfg, fed, observer);
    case Algorithm::FedAvg: return run_fedavg(cfg, fed, observer);
    case Algorithm::FedProx: return run_fedprox(cfg, fed, observer);
    case Algorithm::FedSeq: return run_fedseq(cfg, fed, observer);
    case Algorithm::NoFed: return run_nofed(cfg, fed, observer);
  }
  throw InvalidArgument("unknown algorithm");
}

}  // namespace hetfed
