#pragma once

// Checkpoints are a single JSON document:
//
//   {"format": "rlvr-checkpoint", "version": 1, "step": N,
//    "rng": {"root_seed": S, "next_step": N + 1},
//    "hyper": {...}, "penalty": {...},
//    "params": {"Math/thinking": {"temperature": T, "logits": [...]}, ...},
//    "reference": {...}, "config": {...}}
//
// Every random stream is derived from (root_seed, purpose, step, ...), so the
// stream position is fully described by the next step number. Keys are
// sorted and doubles use shortest round-trip formatting, which makes
// save -> load -> save byte-identical.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "rlvr/config.hpp"
#include "rlvr/errors.hpp"
#include "rlvr/grpo.hpp"

namespace rlvr {

inline constexpr std::string_view kCheckpointFormat = "rlvr-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  OptimizerState state;
  LengthPenaltyOptions penalty;
};

inline std::string policy_key_name(const PolicyKey& k) {
  return std::string(family_name(k.family)) +
         (k.think_mode ? "/thinking" : "/non_thinking");
}

inline nlohmann::json params_to_json(const PolicyParams& p) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [key, entry] : p.entries)
    out[policy_key_name(key)] = {{"temperature", entry.temperature},
                                 {"logits", entry.logits}};
  return out;
}

inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"step", c.state.step},
          {"rng", {{"root_seed", c.config.seed}, {"next_step", c.state.step + 1}}},
          {"hyper",
           {{"learning_rate", c.state.hyper.learning_rate},
            {"kl_coefficient", c.state.hyper.kl_coefficient},
            {"clip_epsilon", c.state.hyper.clip_epsilon},
            {"advantage_epsilon", c.state.hyper.advantage_epsilon}}},
          {"penalty",
           {{"enabled", c.penalty.enabled},
            {"alpha0", c.penalty.schedule.alpha0},
            {"alpha_min", c.penalty.schedule.alpha_min},
            {"decay_steps", c.penalty.schedule.decay_steps},
            {"length_ref", c.penalty.schedule.length_ref},
            {"length_floor", c.penalty.schedule.length_floor},
            {"delta_floor", c.penalty.delta_floor},
            {"stats_over_incorrect", c.penalty.stats_over_incorrect}}},
          {"params", params_to_json(c.state.params)},
          {"reference", params_to_json(c.state.reference)},
          {"config", config_to_json(c.config)}};
}

inline std::string checkpoint_text(const Checkpoint& c) {
  return checkpoint_to_json(c).dump(1) + "\n";
}

namespace detail {

inline const nlohmann::json& ck_field(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw CheckpointError(std::string("checkpoint: missing field '") + key + "'");
  return j.at(key);
}

inline double ck_real(const nlohmann::json& j, const char* key) {
  const auto& v = ck_field(j, key);
  if (!v.is_number()) throw CheckpointError(std::string("checkpoint: '") + key + "' must be a number");
  return v.get<double>();
}

inline std::int64_t ck_int(const nlohmann::json& j, const char* key) {
  const auto& v = ck_field(j, key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw CheckpointError(std::string("checkpoint: '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

inline bool ck_bool(const nlohmann::json& j, const char* key) {
  const auto& v = ck_field(j, key);
  if (!v.is_boolean()) throw CheckpointError(std::string("checkpoint: '") + key + "' must be a boolean");
  return v.get<bool>();
}

inline PolicyParams params_from_json(const nlohmann::json& j, std::size_t buckets,
                                     double temperature, const char* what) {
  if (!j.is_object()) throw CheckpointError(std::string("checkpoint: '") + what + "' must be an object");
  PolicyParams p;
  for (TaskFamily f : kAllFamilies) {
    for (bool mode : {false, true}) {
      const PolicyKey key{f, mode};
      const std::string name = policy_key_name(key);
      if (!j.contains(name))
        throw CheckpointError(std::string("checkpoint: '") + what + "' lacks " + name);
      const auto& e = j.at(name);
      PolicyEntry entry;
      entry.temperature = ck_real(e, "temperature");
      if (entry.temperature != temperature)
        throw CheckpointError("checkpoint: temperature of " + name + " disagrees with config");
      const auto& logits = ck_field(e, "logits");
      if (!logits.is_array() || logits.size() != buckets)
        throw CheckpointError("checkpoint: " + name + " must have " +
                              std::to_string(buckets) + " logits");
      for (const auto& x : logits) {
        if (!x.is_number()) throw CheckpointError("checkpoint: non-numeric logit in " + name);
        entry.logits.push_back(x.get<double>());
      }
      p.entries.emplace(key, std::move(entry));
    }
  }
  if (j.size() != p.entries.size())
    throw CheckpointError(std::string("checkpoint: '") + what + "' has unknown entries");
  return p;
}

}  // namespace detail

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  using namespace detail;
  if (!j.is_object()) throw CheckpointError("checkpoint: document must be an object");
  const auto& fmt = ck_field(j, "format");
  if (!fmt.is_string() || fmt.get<std::string>() != kCheckpointFormat)
    throw CheckpointError("checkpoint: unrecognized format tag");
  if (ck_int(j, "version") != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported version");

  Checkpoint c;
  try {
    c.config = config_from_json(ck_field(j, "config"));
  } catch (const InvalidConfig& e) {
    throw CheckpointError(std::string("checkpoint: embedded config: ") + e.what());
  }
  c.state.step = ck_int(j, "step");
  if (c.state.step < 0) throw CheckpointError("checkpoint: negative step");
  const auto& rng = ck_field(j, "rng");
  const auto& root = ck_field(rng, "root_seed");
  if (!root.is_number_unsigned() || root.get<std::uint64_t>() != c.config.seed)
    throw CheckpointError("checkpoint: rng.root_seed disagrees with config");
  if (ck_int(rng, "next_step") != c.state.step + 1)
    throw CheckpointError("checkpoint: rng.next_step inconsistent with step");

  const auto& h = ck_field(j, "hyper");
  c.state.hyper.learning_rate = ck_real(h, "learning_rate");
  c.state.hyper.kl_coefficient = ck_real(h, "kl_coefficient");
  c.state.hyper.clip_epsilon = ck_real(h, "clip_epsilon");
  c.state.hyper.advantage_epsilon = ck_real(h, "advantage_epsilon");

  const auto& p = ck_field(j, "penalty");
  c.penalty.enabled = ck_bool(p, "enabled");
  c.penalty.schedule.alpha0 = ck_real(p, "alpha0");
  c.penalty.schedule.alpha_min = ck_real(p, "alpha_min");
  c.penalty.schedule.decay_steps = ck_int(p, "decay_steps");
  c.penalty.schedule.length_ref = ck_int(p, "length_ref");
  c.penalty.schedule.length_floor = ck_real(p, "length_floor");
  c.penalty.delta_floor = ck_int(p, "delta_floor");
  c.penalty.stats_over_incorrect = ck_bool(p, "stats_over_incorrect");
  try {
    c.penalty.schedule.validate();
  } catch (const InvalidConfig& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }

  const std::size_t b = c.config.env.bucket_count();
  const double t = c.config.sampling_temperature;
  c.state.params = params_from_json(ck_field(j, "params"), b, t, "params");
  c.state.reference = params_from_json(ck_field(j, "reference"), b, t, "reference");
  return c;
}

inline Checkpoint parse_checkpoint(std::string_view text) {
  const nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw CheckpointError("checkpoint: not valid JSON (truncated?)");
  return checkpoint_from_json(j);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

// Written to a sibling temporary and renamed, so readers never see a partial
// file.
inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out << checkpoint_text(c);
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw CheckpointError("cannot rename checkpoint into " + path + ": " + ec.message());
}

}  // namespace rlvr
