#pragma once

// Training configuration: one JSON document whose schema is the default
// configuration itself. Unknown keys and type mismatches are errors.
//
// Environment overrides: any key can be set through a variable named
// RLVR_ + the upper-cased key path with '.' written as "__", for example
//
//   RLVR_PENALTY__ALPHA0=0.1        -> penalty.alpha0
//   RLVR_ENV__BUCKET_TOKENS=[64,512] -> env.bucket_tokens
//
// Values are parsed as JSON when possible and taken as strings otherwise.
// Precedence: command-line flags > environment > file > defaults.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlvr/errors.hpp"
#include "rlvr/expr.hpp"
#include "rlvr/grpo.hpp"
#include "rlvr/provider_net.hpp"
#include "rlvr/reward.hpp"
#include "rlvr/taskgen.hpp"
#include "rlvr/thinkmode.hpp"
#include "rlvr/verifier.hpp"

namespace rlvr {

inline const std::vector<std::int64_t> kDefaultBudgets = {
    4096, 6144, 8192, 12288, 16384, 24576, 32768};

struct TaskSetConfig {
  std::int64_t train_count = 512;
  std::int64_t heldout_count = 250;
  double think_fraction = 0.5;
  FamilyMix family_mix = {{TaskFamily::kMath, 0.2},
                          {TaskFamily::kCode, 0.2},
                          {TaskFamily::kStem, 0.2},
                          {TaskFamily::kInstructionFollowing, 0.2},
                          {TaskFamily::kMobileService, 0.2}};
};

struct ProviderConfig {
  std::string kind = "local";  // local | remote
  std::string address = "127.0.0.1:7070";
  std::int64_t timeout_ms = 5000;
  std::int64_t retries = 2;
};

struct OutputConfig {
  std::string dir = "runs/demo";
  std::int64_t checkpoint_interval = 100;  // 0: only at exit
};

struct TrainConfig {
  std::uint64_t seed = 1;
  std::int64_t steps = 300;
  std::int64_t group_size = 8;
  std::int64_t groups_per_step = 16;
  Hyperparams hyper;
  double sampling_temperature = 0.6;
  LengthPenaltyOptions penalty;
  EnvModel env;
  TaskSetConfig tasks;
  // Initial bucket logits per mode; empty means all zeros.
  std::vector<double> init_thinking;
  std::vector<double> init_non_thinking;
  std::vector<std::int64_t> budgets = kDefaultBudgets;
  std::int64_t eval_rollouts = 10000;
  VerifierConfig verifier;
  ProviderConfig provider;
  OutputConfig output;
  bool log_wall_time = false;
  ThinkTemplate think_template;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json config_to_json(const TrainConfig& c) {
  using nlohmann::json;
  json mix = json::object();
  for (const auto& [f, w] : c.tasks.family_mix) mix[std::string(family_name(f))] = w;
  json p_max = json::object();
  for (TaskFamily f : kAllFamilies)
    p_max[std::string(family_name(f))] = c.env.p_max[family_index(f)];
  return {
      {"seed", c.seed},
      {"steps", c.steps},
      {"group_size", c.group_size},
      {"groups_per_step", c.groups_per_step},
      {"learning_rate", c.hyper.learning_rate},
      {"kl_coefficient", c.hyper.kl_coefficient},
      {"clip_epsilon", c.hyper.clip_epsilon},
      {"advantage_epsilon", c.hyper.advantage_epsilon},
      {"sampling_temperature", c.sampling_temperature},
      {"penalty",
       {{"enabled", c.penalty.enabled},
        {"alpha0", c.penalty.schedule.alpha0},
        {"alpha_min", c.penalty.schedule.alpha_min},
        {"decay_steps", c.penalty.schedule.decay_steps},
        {"length_ref", c.penalty.schedule.length_ref},
        {"length_floor", c.penalty.schedule.length_floor},
        {"delta_floor", c.penalty.delta_floor},
        {"stats_over_incorrect", c.penalty.stats_over_incorrect}}},
      {"env",
       {{"bucket_tokens", c.env.bucket_tokens},
        {"p_max", p_max},
        {"tau0", c.env.tau0},
        {"gamma", c.env.gamma}}},
      {"tasks",
       {{"train_count", c.tasks.train_count},
        {"heldout_count", c.tasks.heldout_count},
        {"think_fraction", c.tasks.think_fraction},
        {"family_mix", mix}}},
      {"init_logits",
       {{"thinking", c.init_thinking}, {"non_thinking", c.init_non_thinking}}},
      {"budgets", c.budgets},
      {"eval", {{"rollouts", c.eval_rollouts}}},
      {"verifier",
       {{"min_reasoning_tokens", c.verifier.min_reasoning_tokens},
        {"max_boxed", c.verifier.max_boxed},
        {"ngram_n", c.verifier.ngram_n},
        {"max_dup_ratio", c.verifier.max_dup_ratio},
        {"sandbox",
         {{"step_limit", c.verifier.sandbox.step_limit},
          {"max_depth", c.verifier.sandbox.max_depth},
          {"max_nodes", c.verifier.sandbox.max_nodes}}}}},
      {"provider",
       {{"kind", c.provider.kind},
        {"address", c.provider.address},
        {"timeout_ms", c.provider.timeout_ms},
        {"retries", c.provider.retries}}},
      {"output",
       {{"dir", c.output.dir},
        {"checkpoint_interval", c.output.checkpoint_interval}}},
      {"log", {{"wall_time", c.log_wall_time}}},
      {"template",
       {{"control_token", c.think_template.control_token},
        {"user_label", c.think_template.user_label},
        {"assistant_label", c.think_template.assistant_label}}},
  };
}

namespace detail {

inline bool is_integer_json(const nlohmann::json& j) {
  return j.is_number_integer() || j.is_number_unsigned();
}

inline void check_same_type(const nlohmann::json& base,
                            const nlohmann::json& v, const std::string& path) {
  bool ok = false;
  const char* want = "";
  if (base.is_boolean()) ok = v.is_boolean(), want = "a boolean";
  else if (base.is_string()) ok = v.is_string(), want = "a string";
  else if (is_integer_json(base)) ok = is_integer_json(v), want = "an integer";
  else if (base.is_number()) ok = v.is_number(), want = "a number";
  else if (base.is_array()) ok = v.is_array(), want = "an array";
  else if (base.is_object()) ok = v.is_object(), want = "an object";
  if (!ok) throw InvalidConfig("config key '" + path + "' must be " + want);
}

inline void merge_strict(nlohmann::json& base, const nlohmann::json& over,
                         const std::string& path) {
  if (!over.is_object())
    throw InvalidConfig("config" + (path.empty() ? "" : " key '" + path + "'") +
                        " must be an object");
  for (const auto& [k, v] : over.items()) {
    const std::string p = path.empty() ? k : path + "." + k;
    if (!base.contains(k)) throw InvalidConfig("unknown config key '" + p + "'");
    nlohmann::json& b = base[k];
    check_same_type(b, v, p);
    if (b.is_object()) merge_strict(b, v, p);
    else b = v;
  }
}

template <typename T>
T config_value(const nlohmann::json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidConfig("config key '" + path + "' has the wrong type");
  }
}

inline std::vector<double> real_list(const nlohmann::json& j,
                                     const std::string& path) {
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw InvalidConfig("config key '" + path + "' must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

inline std::vector<std::int64_t> int_list(const nlohmann::json& j,
                                          const std::string& path) {
  std::vector<std::int64_t> out;
  for (const auto& v : j) {
    if (!is_integer_json(v))
      throw InvalidConfig("config key '" + path + "' must hold integers");
    out.push_back(v.get<std::int64_t>());
  }
  return out;
}

}  // namespace detail

// `user` is merged over the defaults, so it may be partial.
inline TrainConfig config_from_json(const nlohmann::json& user) {
  using detail::config_value;
  nlohmann::json j = config_to_json(TrainConfig{});
  detail::merge_strict(j, user, "");

  TrainConfig c;
  if (!j["seed"].is_number_unsigned())
    throw InvalidConfig("config key 'seed' must be a non-negative integer");
  c.seed = j["seed"].get<std::uint64_t>();
  c.steps = config_value<std::int64_t>(j["steps"], "steps");
  c.group_size = config_value<std::int64_t>(j["group_size"], "group_size");
  c.groups_per_step = config_value<std::int64_t>(j["groups_per_step"], "groups_per_step");
  c.hyper.learning_rate = j["learning_rate"].get<double>();
  c.hyper.kl_coefficient = j["kl_coefficient"].get<double>();
  c.hyper.clip_epsilon = j["clip_epsilon"].get<double>();
  c.hyper.advantage_epsilon = j["advantage_epsilon"].get<double>();
  c.sampling_temperature = j["sampling_temperature"].get<double>();

  const auto& p = j["penalty"];
  c.penalty.enabled = p["enabled"].get<bool>();
  c.penalty.schedule.alpha0 = p["alpha0"].get<double>();
  c.penalty.schedule.alpha_min = p["alpha_min"].get<double>();
  c.penalty.schedule.decay_steps = p["decay_steps"].get<std::int64_t>();
  c.penalty.schedule.length_ref = p["length_ref"].get<std::int64_t>();
  c.penalty.schedule.length_floor = p["length_floor"].get<double>();
  c.penalty.delta_floor = p["delta_floor"].get<std::int64_t>();
  c.penalty.stats_over_incorrect = p["stats_over_incorrect"].get<bool>();

  const auto& e = j["env"];
  c.env.bucket_tokens = detail::int_list(e["bucket_tokens"], "env.bucket_tokens");
  for (TaskFamily f : kAllFamilies)
    c.env.p_max[family_index(f)] = e["p_max"][std::string(family_name(f))].get<double>();
  c.env.tau0 = e["tau0"].get<double>();
  c.env.gamma = e["gamma"].get<double>();

  const auto& t = j["tasks"];
  c.tasks.train_count = t["train_count"].get<std::int64_t>();
  c.tasks.heldout_count = t["heldout_count"].get<std::int64_t>();
  c.tasks.think_fraction = t["think_fraction"].get<double>();
  for (TaskFamily f : kAllFamilies)
    c.tasks.family_mix[f] = t["family_mix"][std::string(family_name(f))].get<double>();

  c.init_thinking = detail::real_list(j["init_logits"]["thinking"], "init_logits.thinking");
  c.init_non_thinking =
      detail::real_list(j["init_logits"]["non_thinking"], "init_logits.non_thinking");
  c.budgets = detail::int_list(j["budgets"], "budgets");
  c.eval_rollouts = j["eval"]["rollouts"].get<std::int64_t>();

  const auto& v = j["verifier"];
  c.verifier.min_reasoning_tokens = v["min_reasoning_tokens"].get<std::int64_t>();
  c.verifier.max_boxed = v["max_boxed"].get<std::int64_t>();
  c.verifier.ngram_n = v["ngram_n"].get<std::int64_t>();
  c.verifier.max_dup_ratio = v["max_dup_ratio"].get<double>();
  const std::int64_t max_depth = v["sandbox"]["max_depth"].get<std::int64_t>();
  const std::int64_t max_nodes = v["sandbox"]["max_nodes"].get<std::int64_t>();
  if (max_depth < 1 || max_depth > 100000 || max_nodes < 1)
    throw InvalidConfig("verifier.sandbox limits must be positive");
  c.verifier.sandbox.step_limit = v["sandbox"]["step_limit"].get<std::int64_t>();
  c.verifier.sandbox.max_depth = static_cast<int>(max_depth);
  c.verifier.sandbox.max_nodes = static_cast<std::size_t>(max_nodes);

  const auto& pr = j["provider"];
  c.provider.kind = pr["kind"].get<std::string>();
  c.provider.address = pr["address"].get<std::string>();
  c.provider.timeout_ms = pr["timeout_ms"].get<std::int64_t>();
  c.provider.retries = pr["retries"].get<std::int64_t>();

  c.output.dir = j["output"]["dir"].get<std::string>();
  c.output.checkpoint_interval = j["output"]["checkpoint_interval"].get<std::int64_t>();
  c.log_wall_time = j["log"]["wall_time"].get<bool>();

  c.think_template.control_token = j["template"]["control_token"].get<std::string>();
  c.think_template.user_label = j["template"]["user_label"].get<std::string>();
  c.think_template.assistant_label = j["template"]["assistant_label"].get<std::string>();

  c.validate();
  return c;
}

inline void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidConfig(m); };
  if (steps < 1) fail("steps must be >= 1");
  if (group_size < 2) fail("group_size must be >= 2");
  if (groups_per_step < 1) fail("groups_per_step must be >= 1");
  if (!(sampling_temperature > 0.0) || !std::isfinite(sampling_temperature))
    fail("sampling_temperature must be > 0");
  if (!(hyper.learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (!(hyper.kl_coefficient >= 0.0)) fail("kl_coefficient must be >= 0");
  if (!(hyper.clip_epsilon > 0.0)) fail("clip_epsilon must be > 0");
  if (!(hyper.advantage_epsilon > 0.0)) fail("advantage_epsilon must be > 0");
  penalty.schedule.validate();
  if (penalty.delta_floor < 1) fail("penalty.delta_floor must be >= 1");
  env.validate();
  if (tasks.train_count < 1) fail("tasks.train_count must be >= 1");
  if (tasks.heldout_count < 1) fail("tasks.heldout_count must be >= 1");
  if (!(tasks.think_fraction >= 0.0 && tasks.think_fraction <= 1.0))
    fail("tasks.think_fraction must lie in [0, 1]");
  double mix = 0.0;
  for (const auto& [f, w] : tasks.family_mix) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail("tasks.family_mix weights must be >= 0");
    mix += w;
  }
  if (!(mix > 0.0)) fail("tasks.family_mix must have a positive weight");
  const std::size_t b = env.bucket_count();
  for (const auto* init : {&init_thinking, &init_non_thinking}) {
    if (!init->empty() && init->size() != b)
      fail("init_logits must be empty or have one entry per bucket");
    for (double x : *init)
      if (!std::isfinite(x)) fail("init_logits must be finite");
  }
  if (budgets.empty()) fail("budgets must be non-empty");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (budgets[i] < 1) fail("budgets must be positive");
    if (i > 0 && budgets[i] <= budgets[i - 1]) fail("budgets must be strictly increasing");
  }
  if (eval_rollouts < 1) fail("eval.rollouts must be >= 1");
  if (verifier.min_reasoning_tokens < 0) fail("verifier.min_reasoning_tokens must be >= 0");
  if (verifier.max_boxed < 1) fail("verifier.max_boxed must be >= 1");
  if (verifier.ngram_n < 2) fail("verifier.ngram_n must be >= 2");
  if (!(verifier.max_dup_ratio >= 0.0 && verifier.max_dup_ratio <= 1.0))
    fail("verifier.max_dup_ratio must lie in [0, 1]");
  if (verifier.sandbox.step_limit < 1) fail("verifier.sandbox.step_limit must be >= 1");
  // Every bucket must fit the response skeleton (at most 16 fixed tokens).
  if (env.bucket_tokens.front() < verifier.min_reasoning_tokens / 2 + 16)
    fail("env.bucket_tokens[0] is too small for a response");
  if (b > 1 && env.bucket_tokens[1] < verifier.min_reasoning_tokens + 16)
    fail("env.bucket_tokens[1] is too small for a response");
  if (provider.kind != "local" && provider.kind != "remote")
    fail("provider.kind must be 'local' or 'remote'");
  if (provider.kind == "remote") net::parse_endpoint(provider.address);
  if (provider.timeout_ms < 1) fail("provider.timeout_ms must be >= 1");
  if (provider.retries < 0) fail("provider.retries must be >= 0");
  if (output.dir.empty()) fail("output.dir must be non-empty");
  if (output.checkpoint_interval < 0) fail("output.checkpoint_interval must be >= 0");
  think_template.validate();
}

// ---------------------------------------------------------------------------
// Loading

inline std::map<std::string, std::string> rlvr_environment(char** envp) {
  std::map<std::string, std::string> out;
  if (envp == nullptr) return out;
  for (char** e = envp; *e != nullptr; ++e) {
    const std::string kv(*e);
    if (kv.rfind("RLVR_", 0) != 0) continue;
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) continue;
    out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

// "RLVR_PENALTY__ALPHA0" -> {"penalty", "alpha0"}
inline std::vector<std::string> env_key_path(const std::string& var) {
  std::string rest = var.substr(5);
  std::transform(rest.begin(), rest.end(), rest.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  std::vector<std::string> path;
  std::size_t start = 0;
  for (;;) {
    const std::size_t sep = rest.find("__", start);
    path.push_back(rest.substr(start, sep - start));
    if (sep == std::string::npos) break;
    start = sep + 2;
  }
  return path;
}

inline void apply_env_overrides(nlohmann::json& user,
                                const std::map<std::string, std::string>& env) {
  for (const auto& [var, raw] : env) {
    if (var.rfind("RLVR_", 0) != 0) continue;
    const auto path = env_key_path(var);
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    nlohmann::json* node = &user;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      if (!node->contains(path[i])) (*node)[path[i]] = nlohmann::json::object();
      node = &(*node)[path[i]];
      if (!node->is_object())
        throw InvalidConfig("environment override " + var + " does not name a key");
    }
    (*node)[path.back()] = value;
  }
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j = nlohmann::json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw InvalidConfig("config file " + path + " is not valid JSON");
  return j;
}

inline TrainConfig load_config(const std::string& path,
                               const std::map<std::string, std::string>& env = {}) {
  nlohmann::json user = read_json_file(path);
  if (!user.is_object()) throw InvalidConfig("config must be a JSON object");
  apply_env_overrides(user, env);
  return config_from_json(user);
}

}  // namespace rlvr
