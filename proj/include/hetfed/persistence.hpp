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

// Run artifacts. A run directory holds
//   manifest.json           RunManifest
//   rounds.csv              per-round log, see kRoundsHeader
//   checkpoints/round_<t>.bin
//   final.bin
// Checkpoints are "UNFW", u32 version, u32 kind/input_dim/hidden_dim/classes,
// then the parameters as f64, all little-endian.

#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hetfed/config.hpp"
#include "hetfed/curriculum.hpp"
#include "hetfed/data.hpp"
#include "hetfed/error.hpp"
#include "hetfed/federation.hpp"
#include "hetfed/metrics.hpp"
#include "hetfed/model.hpp"
#include "hetfed/rng.hpp"

namespace hetfed {

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct RunManifest {
  int schema_version = kManifestSchemaVersion;
  std::string artifact_version = kArtifactVersion;
  RunConfig config;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  std::string input_hash;
  std::string partition_hash;

  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

/// UTC time as 2026-01-02T03:04:05Z.
inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Hash of the config's canonical JSON; unchanged by a write/read cycle.
inline std::string config_hash(const RunConfig& cfg) {
  Fnv1a h;
  h.update(to_json(cfg).dump());
  return h.hex();
}

/// Hash of the config plus the generated data it describes.
inline std::string input_hash(const RunConfig& cfg, const Dataset& data) {
  Fnv1a h;
  h.update(to_json(cfg).dump());
  h.update(std::span<const double>(data.features.data));
  for (Label y : data.labels) h.update_u64(static_cast<std::uint64_t>(y));
  return h.hex();
}

/// Hash of who holds which rows: hospital ids and the row ids of every split,
/// plus the server's train/val rows.
inline std::string partition_hash(const Federation& fed) {
  Fnv1a h;
  auto rows = [&](const Dataset& ds) {
    h.update_u64(ds.row_ids.size());
    for (auto r : ds.row_ids) h.update_u64(static_cast<std::uint64_t>(r));
  };
  for (const auto& hd : fed.hospitals) {
    h.update_u64(static_cast<std::uint64_t>(hd.hospital_id));
    h.update_u64(static_cast<std::uint64_t>(hd.task_id));
    rows(hd.train);
    rows(hd.val);
    rows(hd.test);
  }
  rows(fed.server.train);
  rows(fed.server.val);
  return h.hex();
}

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"schema_version", m.schema_version},
          {"artifact_version", m.artifact_version},
          {"config", to_json(m.config)},
          {"seed", m.seed},
          {"started_at", m.started_at},
          {"finished_at", m.finished_at},
          {"input_hash", m.input_hash},
          {"partition_hash", m.partition_hash}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("manifest: expected a JSON object");
  if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer()) {
    throw FormatError("manifest: missing integer field 'schema_version'");
  }
  const int version = j.at("schema_version").get<int>();
  if (version != kManifestSchemaVersion) {
    throw VersionError(detail::concat("manifest schema version ", version,
                                      " is not supported; this reader handles version ",
                                      kManifestSchemaVersion));
  }
  static const std::set<std::string> known = {
      "schema_version", "artifact_version", "config",        "seed",
      "started_at",     "finished_at",      "input_hash",    "partition_hash"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw FormatError("manifest: unknown field '" + key + "'");
  }
  for (const auto& key : known) {
    if (!j.contains(key)) throw FormatError("manifest: missing field '" + key + "'");
  }
  RunManifest m;
  try {
    m.schema_version = version;
    m.artifact_version = j.at("artifact_version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
    m.input_hash = j.at("input_hash").get<std::string>();
    m.partition_hash = j.at("partition_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(detail::concat("manifest: ", e.what()));
  }
  try {
    m.config = config_from_json(j.at("config"));
  } catch (const ConfigError& e) {
    throw FormatError(detail::concat("manifest: config: ", e.what()));
  }
  return m;
}

inline void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(detail::concat("cannot write '", path.string(), "'"));
  out << to_json(m).dump(2) << '\n';
  out.flush();
  if (!out) throw IoError(detail::concat("write failed for '", path.string(), "'"));
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(detail::concat("cannot open '", path.string(), "'"));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(detail::concat(path.string(), ": ", e.what()));
  }
  return manifest_from_json(j);
}

// ---------------------------------------------------------------------------
// Round log

/// Hospital rows fill hospital_id..val_loss and hash_in/hash_out; the global
/// row (row=global) fills the round's stop reason (server session, if any),
/// val_loss of the output model on the server val split, transfers,
/// server_epochs, the metrics and hash_relay/hash_server. Unused cells are
/// empty, as is any NaN.
inline constexpr const char* kRoundsHeader =
    "round,row,hospital_id,rank,epochs,stop_reason,slope,val_loss,transfers,server_epochs,"
    "accuracy,f1,sensitivity,specificity,hash_in,hash_out,hash_relay,hash_server";

namespace detail {

inline std::string fmt_double(double x) {
  if (std::isnan(x)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_cell_double(std::string_view s, const std::string& where) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return parse_double(s, where);
}

inline long long parse_cell_int(std::string_view s, const std::string& where) {
  long long v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end) {
    throw FormatError(concat(where, ": bad integer '", s, "'"));
  }
  return v;
}

inline std::string format_round(const RoundRecord& r) {
  std::ostringstream os;
  for (const auto& h : r.hospitals) {
    os << r.round << ",hospital," << h.hospital_id << ',' << h.rank << ',' << h.epochs << ','
       << to_string(h.stop_reason) << ',' << fmt_double(h.slope) << ','
       << fmt_double(h.val_loss) << ",,,,,,," << h.hash_in << ',' << h.hash_out << ",,\n";
  }
  os << r.round << ",global,,,," << (r.server_stop ? to_string(*r.server_stop) : "") << ",,"
     << fmt_double(r.global_val_loss) << ',' << r.transfers << ',' << r.server_epochs << ','
     << fmt_double(r.metrics.accuracy) << ',' << fmt_double(r.metrics.f1) << ','
     << fmt_double(r.metrics.sensitivity) << ',' << fmt_double(r.metrics.specificity)
     << ",,," << r.hash_relay << ',' << r.hash_server << '\n';
  return os.str();
}

}  // namespace detail

inline void write_round_header(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(detail::concat("cannot write '", path.string(), "'"));
  out << kRoundsHeader << '\n';
  out.flush();
  if (!out) throw IoError(detail::concat("write failed for '", path.string(), "'"));
}

/// Appends one round and flushes; the file is complete at every round boundary.
inline void append_round(const std::filesystem::path& path, const RoundRecord& record) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError(detail::concat("cannot append to '", path.string(), "'"));
  out << detail::format_round(record);
  out.flush();
  if (!out) throw IoError(detail::concat("write failed for '", path.string(), "'"));
}

/// Rebuilds the records. Hospital rows after the last global row (a round cut
/// short) are dropped, as is a final line with no terminating newline.
/// ordering is rebuilt from the ranks.
inline std::vector<RoundRecord> read_rounds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(detail::concat("cannot open '", path.string(), "'"));
  std::string line;
  if (!std::getline(in, line) || line != kRoundsHeader) {
    throw FormatError(detail::concat(path.string(), ":1: unexpected header"));
  }
  std::vector<RoundRecord> out;
  RoundRecord cur;
  bool open = false;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (in.eof()) break;  // partial write
    if (line.empty()) continue;
    const std::string where = detail::concat(path.string(), ":", lineno);
    auto f = detail::split_fields(line);
    if (f.size() != 18) {
      throw FormatError(detail::concat(where, ": expected 18 fields, got ", f.size()));
    }
    const int round = static_cast<int>(detail::parse_cell_int(f[0], where));
    if (open && round != cur.round) {
      throw FormatError(detail::concat(where, ": round ", cur.round, " has no global row"));
    }
    if (!open) {
      cur = RoundRecord{};
      cur.round = round;
      open = true;
    }
    if (f[1] == "hospital") {
      HospitalRound h;
      h.hospital_id = static_cast<HospitalId>(detail::parse_cell_int(f[2], where));
      h.rank = static_cast<int>(detail::parse_cell_int(f[3], where));
      h.epochs = static_cast<int>(detail::parse_cell_int(f[4], where));
      auto reason = stop_reason_from_string(std::string(f[5]));
      if (!reason) throw FormatError(detail::concat(where, ": bad stop reason '", f[5], "'"));
      h.stop_reason = *reason;
      h.slope = detail::parse_cell_double(f[6], where);
      h.val_loss = detail::parse_cell_double(f[7], where);
      h.hash_in = std::string(f[14]);
      h.hash_out = std::string(f[15]);
      cur.hospitals.push_back(std::move(h));
    } else if (f[1] == "global") {
      if (!f[5].empty()) {
        auto reason = stop_reason_from_string(std::string(f[5]));
        if (!reason) throw FormatError(detail::concat(where, ": bad stop reason '", f[5], "'"));
        cur.server_stop = *reason;
      }
      cur.global_val_loss = detail::parse_cell_double(f[7], where);
      cur.transfers = static_cast<int>(detail::parse_cell_int(f[8], where));
      cur.server_epochs = static_cast<int>(detail::parse_cell_int(f[9], where));
      cur.metrics.accuracy = detail::parse_cell_double(f[10], where);
      cur.metrics.f1 = detail::parse_cell_double(f[11], where);
      cur.metrics.sensitivity = detail::parse_cell_double(f[12], where);
      cur.metrics.specificity = detail::parse_cell_double(f[13], where);
      cur.hash_relay = std::string(f[16]);
      cur.hash_server = std::string(f[17]);
      std::vector<const HospitalRound*> by_rank;
      for (const auto& h : cur.hospitals) by_rank.push_back(&h);
      std::stable_sort(by_rank.begin(), by_rank.end(),
                       [](const auto* a, const auto* b) { return a->rank < b->rank; });
      for (const auto* h : by_rank) cur.ordering.push_back(h->hospital_id);
      out.push_back(std::move(cur));
      open = false;
    } else {
      throw FormatError(detail::concat(where, ": unknown row kind '", f[1], "'"));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_le(const std::string& buf, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  }
  return v;
}

inline constexpr std::size_t kCheckpointHeaderBytes = 4 + 4 + 4 * 4;

}  // namespace detail

inline std::string encode_checkpoint(const WeightVector& w) {
  std::string buf = "UNFW";
  detail::put_u32(buf, kCheckpointVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(w.spec.kind));
  detail::put_u32(buf, static_cast<std::uint32_t>(w.spec.input_dim));
  detail::put_u32(buf, static_cast<std::uint32_t>(w.spec.hidden_dim));
  detail::put_u32(buf, static_cast<std::uint32_t>(w.spec.num_classes));
  for (double x : w.values) detail::put_u64(buf, std::bit_cast<std::uint64_t>(x));
  return buf;
}

inline WeightVector decode_checkpoint(const std::string& buf) {
  if (buf.size() < 4 || buf.compare(0, 4, "UNFW") != 0) {
    throw FormatError("checkpoint: bad magic (expected \"UNFW\")");
  }
  if (buf.size() < detail::kCheckpointHeaderBytes) {
    throw FormatError(detail::concat("checkpoint truncated: expected at least ",
                                     detail::kCheckpointHeaderBytes, " header bytes, got ",
                                     buf.size()));
  }
  const auto version = static_cast<std::uint32_t>(detail::get_le(buf, 4, 4));
  if (version != kCheckpointVersion) {
    throw VersionError(detail::concat("checkpoint version ", version,
                                      " is not supported; this reader handles version ",
                                      kCheckpointVersion));
  }
  const auto kind = static_cast<std::uint32_t>(detail::get_le(buf, 8, 4));
  if (kind > static_cast<std::uint32_t>(ModelKind::MLP)) {
    throw FormatError(detail::concat("checkpoint: unknown model kind ", kind));
  }
  ModelSpec spec;
  spec.kind = static_cast<ModelKind>(kind);
  spec.input_dim = detail::get_le(buf, 12, 4);
  spec.hidden_dim = detail::get_le(buf, 16, 4);
  spec.num_classes = detail::get_le(buf, 20, 4);
  try {
    validate(spec);
  } catch (const Error& e) {
    throw FormatError(detail::concat("checkpoint: ", e.what()));
  }
  const std::size_t n = parameter_count(spec);
  const std::size_t expected = detail::kCheckpointHeaderBytes + 8 * n;
  if (buf.size() != expected) {
    throw FormatError(detail::concat(buf.size() < expected ? "checkpoint truncated" :
                                                             "checkpoint has trailing bytes",
                                     ": expected ", expected, " bytes, got ", buf.size()));
  }
  WeightVector w(spec);
  for (std::size_t i = 0; i < n; ++i) {
    w.values[i] = std::bit_cast<double>(
        detail::get_le(buf, detail::kCheckpointHeaderBytes + 8 * i, 8));
  }
  return w;
}

inline void save_checkpoint(const WeightVector& w, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(detail::concat("cannot write '", path.string(), "'"));
  const std::string buf = encode_checkpoint(w);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.flush();
  if (!out) throw IoError(detail::concat("write failed for '", path.string(), "'"));
}

inline WeightVector load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(detail::concat("cannot open '", path.string(), "'"));
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(buf);
}

// ---------------------------------------------------------------------------
// Replay

struct RunPaths {
  std::filesystem::path dir;

  std::filesystem::path manifest() const { return dir / "manifest.json"; }
  std::filesystem::path rounds() const { return dir / "rounds.csv"; }
  std::filesystem::path checkpoints() const { return dir / "checkpoints"; }
  std::filesystem::path checkpoint(int round) const {
    return checkpoints() / detail::concat("round_", round, ".bin");
  }
  std::filesystem::path final_weights() const { return dir / "final.bin"; }
};

/// Ledger totals recomputed from a manifest and its round log.
inline CostLedger replay_ledger(const RunManifest& m, const std::vector<RoundRecord>& rounds) {
  CostLedger ledger;
  const auto payload = static_cast<std::int64_t>(parameter_count(model_spec(m.config)));
  const auto K = static_cast<std::int64_t>(hospital_count(m.config));
  const bool nofed = m.config.federation.algorithm == Algorithm::NoFed;
  for (const auto& r : rounds) {
    for (const auto& h : r.hospitals) record_epochs(ledger, h.hospital_id, h.epochs);
    record_server_epochs(ledger, r.server_epochs);
    if (nofed) ledger.epoch_units += K * r.server_epochs;
    ledger.transfers += r.transfers;
    ledger.payload_floats += static_cast<std::int64_t>(r.transfers) * payload;
  }
  return ledger;
}

/// For each logged round t >= 1, the ordering implied by the slopes logged in
/// round t-1 (UniFed's curriculum).
inline std::vector<std::vector<HospitalId>> replay_orderings(
    const std::vector<RoundRecord>& rounds, OrderDirection dir) {
  std::vector<std::vector<HospitalId>> out;
  for (std::size_t i = 1; i < rounds.size(); ++i) {
    std::vector<ComplexityScore> scores;
    for (const auto& h : rounds[i - 1].hospitals) {
      scores.push_back({h.hospital_id, h.slope, 0, false});
    }
    out.push_back(order_hospitals(scores, dir));
  }
  return out;
}

}  // namespace hetfed
