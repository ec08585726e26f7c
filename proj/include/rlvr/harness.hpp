#pragma once

// Orchestration: wires task generation, rollouts, reward scoring, GRPO
// updates and evaluation into the train / resume / eval-budget /
// reward-check commands.
//
// Determinism: every random draw comes from a stream derived from the root
// seed and a (purpose, step, group) path, so a run is a pure function of its
// config, and resuming from a checkpoint at step N replays exactly what an
// uninterrupted run would have done from step N + 1.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlvr/checkpoint.hpp"
#include "rlvr/config.hpp"
#include "rlvr/errors.hpp"
#include "rlvr/evalkit.hpp"
#include "rlvr/grpo.hpp"
#include "rlvr/provider_net.hpp"
#include "rlvr/random.hpp"
#include "rlvr/reward.hpp"
#include "rlvr/taskgen.hpp"
#include "rlvr/thinkmode.hpp"
#include "rlvr/verifier.hpp"

namespace rlvr {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitProvider = 3,
  kExitCheckpoint = 4,
};

inline PolicyParams initial_params(const TrainConfig& c) {
  PolicyParams p;
  const std::size_t b = c.env.bucket_count();
  for (TaskFamily f : kAllFamilies) {
    for (bool mode : {false, true}) {
      const auto& init = mode ? c.init_thinking : c.init_non_thinking;
      PolicyEntry e;
      e.logits = init.empty() ? std::vector<double>(b, 0.0) : init;
      e.temperature = c.sampling_temperature;
      p.entries.emplace(PolicyKey{f, mode}, std::move(e));
    }
  }
  return p;
}

inline std::unique_ptr<RewardProvider> make_provider(const TrainConfig& c) {
  if (c.provider.kind == "remote") {
    RemoteProviderOptions o;
    o.address = c.provider.address;
    o.timeout_ms = static_cast<int>(c.provider.timeout_ms);
    o.retries = static_cast<int>(c.provider.retries);
    return std::make_unique<RemoteProvider>(o);
  }
  return std::make_unique<LocalProvider>(c.verifier);
}

inline std::vector<TaskInstance> training_tasks(const TrainConfig& c) {
  return generate_tasks(c.seed, c.tasks.train_count, c.tasks.family_mix,
                        c.tasks.think_fraction);
}

inline std::vector<TaskInstance> heldout_tasks(const TrainConfig& c) {
  Stream s = derive_stream(c.seed, StreamPurpose::kHeldOut);
  return generate_tasks(s(), c.tasks.heldout_count, c.tasks.family_mix,
                        c.tasks.think_fraction);
}

// The policy entry a task is routed to. The mode is whatever the prompt
// protocol reports for the rendered single-turn prompt.
inline PolicyKey rollout_key(const TaskInstance& task,
                             const ThinkTemplate& tpl = {}) {
  const PromptAssembly a =
      build_prompt({{ChatRole::kUser, task.prompt, task.think_mode}}, tpl);
  return {task.family, detect_mode(a.rendered, tpl) == ThinkMode::kThinking};
}

// ---------------------------------------------------------------------------
// Evaluation

// Exact outcome distribution of one rollout per task: outcome (b, correct)
// carries weight pi(b) * P(correct | b). `mode` forces thinking or
// non-thinking; otherwise each task keeps its own mode.
inline std::vector<EvalResult> expected_results(
    std::span<const TaskInstance> tasks, const PolicyParams& params,
    const EnvModel& env, std::optional<bool> mode = std::nullopt) {
  std::vector<EvalResult> out;
  out.reserve(tasks.size() * env.bucket_count() * 2);
  for (const TaskInstance& t : tasks) {
    const PolicyKey key{t.family, mode.value_or(t.think_mode)};
    const std::vector<double> pi = probabilities(params.at(key));
    for (std::size_t b = 0; b < pi.size(); ++b) {
      const double p = correctness_probability(env, t.family, b, t.difficulty);
      const std::int64_t len = env.bucket_tokens[b];
      out.push_back({true, len, pi[b] * p});
      out.push_back({false, len, pi[b] * (1.0 - p)});
    }
  }
  return out;
}

// Tasks visited by n evaluation rollouts: rollout r uses task r mod H.
inline std::vector<TaskInstance> rollout_tasks(std::span<const TaskInstance> tasks,
                                               std::int64_t n) {
  std::vector<TaskInstance> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t r = 0; r < n; ++r)
    out.push_back(tasks[static_cast<std::size_t>(r) % tasks.size()]);
  return out;
}

// Samples n full rollouts (response text included) in the given mode and
// judges each with the provider.
inline std::vector<EvalResult> sample_results(
    std::span<const TaskInstance> tasks, const PolicyParams& params,
    const EnvModel& env, bool mode, std::int64_t n, std::uint64_t root_seed,
    RewardProvider& provider, const SynthesisOptions& synth = {}) {
  if (tasks.empty()) throw InvalidArgument("sample_results: no tasks");
  constexpr std::int64_t kBatch = 64;
  std::vector<EvalResult> out;
  out.reserve(static_cast<std::size_t>(n));
  std::vector<ProviderRequest> batch;
  std::vector<std::int64_t> lengths;
  auto flush = [&] {
    if (batch.empty()) return;
    const auto replies = provider.score(batch);
    if (replies.size() != batch.size())
      throw ProviderError("provider returned a short batch");
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (replies[i].id != batch[i].id) throw ProviderError("provider id mismatch");
      out.push_back({replies[i].components.answer_reward == 1.0, lengths[i], 1.0});
    }
    batch.clear();
    lengths.clear();
  };
  for (std::int64_t r = 0; r < n; ++r) {
    TaskInstance t = tasks[static_cast<std::size_t>(r) % tasks.size()];
    t.think_mode = mode;
    const std::vector<double> pi = probabilities(params.at(policy_key(t)));
    Stream rng = derive_stream(root_seed, StreamPurpose::kEvaluation,
                               {mode ? 1u : 0u, static_cast<std::uint64_t>(r)});
    const std::size_t b = sample_categorical(rng, pi);
    const bool correct =
        bernoulli(rng, correctness_probability(env, t.family, b, t.difficulty));
    std::string text = synthesize_response(t, env, b, correct, rng, synth);
    lengths.push_back(count_tokens(text));
    batch.push_back({t.id + "@" + std::to_string(r), t.family, std::move(text),
                     t.ground_truth});
    if (static_cast<std::int64_t>(batch.size()) == kBatch) flush();
  }
  flush();
  return out;
}

// ---------------------------------------------------------------------------
// Training

class Trainer {
 public:
  Trainer(TrainConfig cfg, std::unique_ptr<RewardProvider> provider)
      : cfg_(std::move(cfg)), provider_(std::move(provider)) {
    cfg_.validate();
    state_.hyper = cfg_.hyper;
    state_.params = initial_params(cfg_);
    state_.reference = state_.params;
    penalty_ = cfg_.penalty;
    init_tasks();
  }

  Trainer(Checkpoint ck, std::unique_ptr<RewardProvider> provider)
      : cfg_(std::move(ck.config)),
        state_(std::move(ck.state)),
        penalty_(ck.penalty),
        provider_(std::move(provider)) {
    init_tasks();
  }

  const TrainConfig& config() const { return cfg_; }
  TrainConfig& mutable_config() { return cfg_; }
  const OptimizerState& state() const { return state_; }
  const LengthPenaltyOptions& penalty() const { return penalty_; }
  const std::vector<TaskInstance>& tasks() const { return tasks_; }
  const std::vector<TaskInstance>& heldout() const { return heldout_; }
  Checkpoint checkpoint() const { return {cfg_, state_, penalty_}; }

  void reset(const ResumeOverrides& o) {
    state_ = reset_and_resume(state_, o);
    apply_penalty_overrides(o, penalty_);
    cfg_.hyper = state_.hyper;
    cfg_.penalty = penalty_;
  }

  // Groups for 1-based step `step`, scored under the current state.
  std::vector<RolloutGroup> sample_groups(std::int64_t step) const {
    const auto s = static_cast<std::uint64_t>(step);
    const SynthesisOptions synth{cfg_.verifier.min_reasoning_tokens};
    std::vector<RolloutGroup> groups;
    groups.reserve(static_cast<std::size_t>(cfg_.groups_per_step));
    for (std::int64_t g = 0; g < cfg_.groups_per_step; ++g) {
      const auto gi = static_cast<std::uint64_t>(g);
      Stream pick = derive_stream(cfg_.seed, StreamPurpose::kGroupTask, {s, gi});
      RolloutGroup group;
      group.task = tasks_[uniform_index(pick, tasks_.size())];
      const PolicyKey key = rollout_key(group.task, cfg_.think_template);
      group.task.think_mode = key.think_mode;
      const PolicyEntry& entry = state_.params.at(key);
      const std::vector<double> logp = log_softmax(entry.logits, entry.temperature);
      std::vector<double> pi(logp.size());
      for (std::size_t j = 0; j < pi.size(); ++j) pi[j] = std::exp(logp[j]);

      Stream rng = derive_stream(cfg_.seed, StreamPurpose::kSample, {s, gi});
      std::vector<std::string> texts;
      texts.reserve(static_cast<std::size_t>(cfg_.group_size));
      for (std::int64_t i = 0; i < cfg_.group_size; ++i) {
        ResponseSample r;
        r.bucket_index = sample_categorical(rng, pi);
        const double p = correctness_probability(
            cfg_.env, group.task.family, r.bucket_index, group.task.difficulty);
        const bool correct = bernoulli(rng, p);
        texts.push_back(synthesize_response(group.task, cfg_.env,
                                            r.bucket_index, correct, rng, synth));
        r.token_length = cfg_.env.bucket_tokens[r.bucket_index];
        r.log_prob = logp[r.bucket_index];
        group.samples.push_back(std::move(r));
      }
      ScoredGroup scored =
          score_group(group.task, texts, *provider_, penalty_, state_.step);
      for (std::size_t i = 0; i < texts.size(); ++i) {
        group.samples[i].is_correct = scored.breakdowns[i].answer_reward == 1.0;
        group.samples[i].text = std::move(texts[i]);
      }
      group.breakdowns = std::move(scored.breakdowns);
      group.stats = scored.stats;
      groups.push_back(std::move(group));
    }
    return groups;
  }

  // Runs one optimizer step and returns its run-log record.
  nlohmann::json run_step() {
    const std::int64_t s = state_.step + 1;
    const double scheduled = alpha_at_step(penalty_.schedule, state_.step);
    std::vector<RolloutGroup> groups = sample_groups(s);
    state_ = step(state_, groups);
    return make_record(s, groups, scheduled);
  }

  RunMetrics heldout_metrics(std::optional<bool> mode = std::nullopt) const {
    const auto results = expected_results(heldout_, state_.params, cfg_.env, mode);
    return run_metrics(results, state_.step);
  }

  double mean_kl() const {
    double total = 0.0;
    for (const auto& [key, entry] : state_.params.entries)
      total += exact_kl(entry.logits, state_.reference.at(key).logits,
                        entry.temperature);
    return total / static_cast<double>(state_.params.entries.size());
  }

 private:
  void init_tasks() {
    tasks_ = training_tasks(cfg_);
    heldout_ = heldout_tasks(cfg_);
    started_ = std::chrono::steady_clock::now();
  }

  nlohmann::json make_record(std::int64_t s, const std::vector<RolloutGroup>& groups,
                             double scheduled) const {
    std::map<TaskFamily, std::pair<double, std::int64_t>> fam;
    double len = 0.0, correct = 0.0, alpha = 0.0;
    std::int64_t n = 0;
    for (const RolloutGroup& g : groups) {
      for (std::size_t i = 0; i < g.samples.size(); ++i) {
        auto& [sum, count] = fam[g.task.family];
        sum += g.breakdowns[i].total;
        ++count;
        len += static_cast<double>(g.samples[i].token_length);
        correct += g.samples[i].is_correct ? 1.0 : 0.0;
        alpha += g.breakdowns[i].alpha_eff;
        ++n;
      }
    }
    nlohmann::json mean_reward = nlohmann::json::object();
    for (TaskFamily f : kAllFamilies) {
      const auto it = fam.find(f);
      mean_reward[std::string(family_name(f))] =
          it == fam.end() ? nlohmann::json(nullptr)
                          : nlohmann::json(it->second.first /
                                           static_cast<double>(it->second.second));
    }
    const double dn = static_cast<double>(n);
    nlohmann::json rec = {
        {"step", s},
        {"mean_reward", mean_reward},
        {"mean_length", len / dn},
        {"accuracy", correct / dn},
        {"kl_to_reference", mean_kl()},
        {"alpha_eff", {{"scheduled", scheduled}, {"mean", alpha / dn}}},
        {"eval", metrics_to_json(heldout_metrics())},
    };
    if (cfg_.log_wall_time)
      rec["wall_time"] = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - started_)
                             .count();
    return rec;
  }

  TrainConfig cfg_;
  OptimizerState state_;
  LengthPenaltyOptions penalty_;
  std::unique_ptr<RewardProvider> provider_;
  std::vector<TaskInstance> tasks_;
  std::vector<TaskInstance> heldout_;
  std::chrono::steady_clock::time_point started_;
};

// ---------------------------------------------------------------------------
// Artifacts

struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path log() const { return dir / "run_log.jsonl"; }
  std::filesystem::path checkpoint() const { return dir / "checkpoint.json"; }
  std::filesystem::path checkpoint_at(std::int64_t step) const {
    return dir / ("checkpoint_step" + std::to_string(step) + ".json");
  }
  std::filesystem::path final_metrics() const { return dir / "final_metrics.json"; }
};

inline nlohmann::json final_metrics_json(const Trainer& t) {
  return {{"step", t.state().step},
          {"overall", metrics_to_json(t.heldout_metrics())},
          {"thinking", metrics_to_json(t.heldout_metrics(true))},
          {"non_thinking", metrics_to_json(t.heldout_metrics(false))}};
}

// Runs until the state reaches `target_step`. The first record may carry an
// annotation (used for reset events). A provider failure saves the last good
// state before propagating.
inline void run_training(Trainer& t, std::int64_t target_step, bool fresh_log,
                         const nlohmann::json& first_note = nullptr) {
  const RunPaths paths{t.config().output.dir};
  std::filesystem::create_directories(paths.dir);
  std::ofstream log(paths.log(), fresh_log ? std::ios::trunc : std::ios::app);
  if (!log) throw InvalidConfig("cannot open run log " + paths.log().string());
  bool first = true;
  while (t.state().step < target_step) {
    nlohmann::json rec;
    try {
      rec = t.run_step();
    } catch (const ProviderError&) {
      save_checkpoint(paths.checkpoint().string(), t.checkpoint());
      throw;
    }
    if (first && !first_note.is_null()) rec["reset"] = first_note;
    first = false;
    log << rec.dump() << '\n';
    log.flush();
    const std::int64_t interval = t.config().output.checkpoint_interval;
    if (interval > 0 && t.state().step % interval == 0) {
      save_checkpoint(paths.checkpoint_at(t.state().step).string(), t.checkpoint());
      save_checkpoint(paths.checkpoint().string(), t.checkpoint());
    }
  }
  save_checkpoint(paths.checkpoint().string(), t.checkpoint());
  std::ofstream fm(paths.final_metrics(), std::ios::trunc);
  fm << final_metrics_json(t).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Commands

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const InvalidConfig& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ProviderError& e) {
    err << "provider error: " << e.what() << '\n';
    return kExitProvider;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

inline int cmd_train(const std::string& config_path,
                     std::optional<std::uint64_t> seed,
                     const std::map<std::string, std::string>& env,
                     std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    TrainConfig cfg = load_config(config_path, env);
    if (seed) cfg.seed = *seed;
    Trainer t(cfg, make_provider(cfg));
    run_training(t, cfg.steps, true);
    const RunMetrics m = t.heldout_metrics();
    out << "trained " << t.state().step << " steps; held-out accuracy "
        << m.overall_accuracy << ", mean length " << m.mean_length << "; wrote "
        << cfg.output.dir << '\n';
    return kExitOk;
  });
}

struct ResumeRequest {
  std::string checkpoint;
  std::map<std::string, std::string> overrides;  // --set key=value
  bool force_reset = false;
  std::optional<std::int64_t> extra_steps;
};

// Without overrides (or with only steps / output.dir) resuming is a pure
// continuation: the reference stays where it was. Hyperparameter overrides,
// or --reset, apply reset_and_resume and re-anchor the reference.
inline int cmd_resume(const ResumeRequest& req, std::ostream& out,
                      std::ostream& err) {
  return guarded(err, [&] {
    Checkpoint ck = load_checkpoint(req.checkpoint);
    std::map<std::string, std::string> hyper = req.overrides;
    std::optional<std::int64_t> target;
    if (auto it = hyper.find("steps"); it != hyper.end()) {
      try {
        std::size_t used = 0;
        target = std::stoll(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("steps");
      } catch (const std::exception&) {
        throw InvalidArgument("override steps: not an integer");
      }
      hyper.erase(it);
    }
    if (auto it = hyper.find("output.dir"); it != hyper.end()) {
      ck.config.output.dir = it->second;
      hyper.erase(it);
    }
    const ResumeOverrides o = parse_resume_overrides(hyper);
    const std::int64_t at = ck.state.step;
    if (req.extra_steps) target = at + *req.extra_steps;
    if (!target) target = ck.config.steps > at ? ck.config.steps : at + ck.config.steps;
    if (*target <= at) throw InvalidArgument("resume target step must exceed the checkpoint step");
    ck.config.steps = *target;

    TrainConfig cfg = ck.config;
    Trainer t(std::move(ck), make_provider(cfg));
    nlohmann::json note = nullptr;
    if (req.force_reset || !o.empty()) {
      t.reset(o);
      note = {{"from_step", at}, {"overrides", nlohmann::json::object()}};
      for (const auto& [k, v] : hyper) {
        nlohmann::json val = nlohmann::json::parse(v, nullptr, false);
        note["overrides"][k] = val.is_discarded() ? nlohmann::json(v) : val;
      }
    }
    run_training(t, *target, false, note);
    out << "resumed at step " << at << ", now at step " << t.state().step << '\n';
    return kExitOk;
  });
}

inline std::string curve_path(const std::string& out, std::string_view mode) {
  std::string base = out;
  if (base.size() > 4 && base.compare(base.size() - 4, 4, ".csv") == 0)
    base.resize(base.size() - 4);
  return base + "_" + std::string(mode) + ".csv";
}

inline int cmd_eval_budget(const std::string& checkpoint_path,
                           const std::string& config_path,
                           const std::string& out_path,
                           const std::map<std::string, std::string>& env,
                           std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const TrainConfig cfg = load_config(config_path, env);
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    if (ck.config.env.bucket_count() != cfg.env.bucket_count())
      throw InvalidConfig("config bucket count differs from the checkpoint policy");
    const auto heldout = heldout_tasks(cfg);
    auto provider = make_provider(cfg);
    const SynthesisOptions synth{cfg.verifier.min_reasoning_tokens};
    for (bool mode : {true, false}) {
      const auto sampled = sample_results(heldout, ck.state.params, cfg.env, mode,
                                          cfg.eval_rollouts, cfg.seed, *provider, synth);
      const BudgetCurve curve = budget_curve(sampled, cfg.budgets);
      const auto visited = rollout_tasks(heldout, cfg.eval_rollouts);
      const BudgetCurve exact = budget_curve(
          expected_results(visited, ck.state.params, cfg.env, mode), cfg.budgets);
      const std::string path =
          curve_path(out_path, mode_name(mode ? ThinkMode::kThinking : ThinkMode::kNonThinking));
      const std::filesystem::path p(path);
      if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
      std::ofstream f(path, std::ios::trunc);
      if (!f) throw InvalidConfig("cannot write " + path);
      write_curve_csv(f, curve);
      double dev = 0.0;
      for (std::size_t i = 0; i < curve.accuracy.size(); ++i)
        dev = std::max(dev, std::abs(curve.accuracy[i] - exact.accuracy[i]));
      out << path << ": " << cfg.eval_rollouts << " rollouts, max |sampled - exact| = "
          << dev << '\n';
    }
    return kExitOk;
  });
}

// Paired long2short run: trains the config with the length penalty on and
// off under one seed, reports held-out length and accuracy for both, and
// writes budget curves for the penalty-on policy.
inline int cmd_demo(const std::string& config_path, const std::string& out_dir,
                    const std::map<std::string, std::string>& env,
                    std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const TrainConfig base = load_config(config_path, env);
    const std::filesystem::path root(out_dir.empty() ? base.output.dir : out_dir);
    nlohmann::json summary = nlohmann::json::object();
    for (bool penalty : {true, false}) {
      TrainConfig cfg = base;
      cfg.penalty.enabled = penalty;
      const std::string name = penalty ? "penalty_on" : "penalty_off";
      cfg.output.dir = (root / name).string();
      Trainer t(cfg, make_provider(cfg));
      run_training(t, cfg.steps, true);
      summary[name] = final_metrics_json(t);
    }
    const auto& on = summary["penalty_on"]["overall"];
    const auto& off = summary["penalty_off"]["overall"];
    const double len_on = on["mean_length"].get<double>();
    const double len_off = off["mean_length"].get<double>();
    summary["length_reduction"] = 1.0 - len_on / len_off;
    summary["accuracy_gap"] =
        off["overall_accuracy"].get<double>() - on["overall_accuracy"].get<double>();
    std::ofstream(root / "summary.json", std::ios::trunc) << summary.dump(2) << '\n';

    const Checkpoint ck = load_checkpoint(RunPaths{root / "penalty_on"}.checkpoint().string());
    for (bool mode : {true, false}) {
      const auto visited = rollout_tasks(heldout_tasks(base), base.eval_rollouts);
      const BudgetCurve curve = budget_curve(
          expected_results(visited, ck.state.params, base.env, mode), base.budgets);
      std::ofstream f(root / ("budget_" +
                              std::string(mode_name(mode ? ThinkMode::kThinking
                                                         : ThinkMode::kNonThinking)) +
                              ".csv"),
                      std::ios::trunc);
      write_curve_csv(f, curve);
    }
    out << "penalty on : mean length " << len_on << ", accuracy "
        << on["overall_accuracy"].get<double>() << '\n'
        << "penalty off: mean length " << len_off << ", accuracy "
        << off["overall_accuracy"].get<double>() << '\n'
        << "length reduction " << summary["length_reduction"].get<double>() * 100.0
        << "%; wrote " << root.string() << '\n';
    return kExitOk;
  });
}

// One JSON object per input line: {id, response_text, ground_truth}. Each
// output line echoes the input and adds the three rule components and their
// product; a bad line yields {"line", "error"} and processing continues.
inline nlohmann::json reward_check_line(const std::string& line, std::size_t line_no,
                                        const VerifierConfig& vcfg) {
  nlohmann::json in = nlohmann::json::parse(line, nullptr, false);
  auto fail = [&](const std::string& msg) {
    nlohmann::json e = {{"line", line_no}, {"error", msg}};
    if (in.is_object() && in.contains("id")) e["id"] = in["id"];
    return e;
  };
  if (in.is_discarded()) return fail("unparseable JSON");
  if (!in.is_object()) return fail("line must be a JSON object");
  if (!in.contains("response_text") || !in["response_text"].is_string())
    return fail("missing string field 'response_text'");
  if (!in.contains("ground_truth")) return fail("missing field 'ground_truth'");
  try {
    const GroundTruth truth = ground_truth_from_json(in["ground_truth"]);
    const RuleComponents c =
        verify_components(in["response_text"].get<std::string>(), truth, vcfg);
    nlohmann::json outj = in;
    outj["answer_reward"] = c.answer_reward;
    outj["format_coef"] = c.format_coef;
    outj["repetition_coef"] = c.repetition_coef;
    outj["rule_reward"] = compose_rule_reward(c);
    return outj;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

inline int cmd_reward_check(const std::string& in_path, const std::string& out_path,
                            const VerifierConfig& vcfg, std::ostream& out,
                            std::ostream& err) {
  return guarded(err, [&] {
    std::ifstream in(in_path);
    if (!in) throw InvalidConfig("cannot open " + in_path);
    std::ofstream o(out_path, std::ios::trunc);
    if (!o) throw InvalidConfig("cannot write " + out_path);
    std::string line;
    std::size_t line_no = 0, errors = 0, lines = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (count_tokens(line) == 0) continue;
      const nlohmann::json r = reward_check_line(line, line_no, vcfg);
      if (r.contains("error")) ++errors;
      ++lines;
      o << r.dump() << '\n';
    }
    out << lines << " lines scored, " << errors << " errors\n";
    return kExitOk;
  });
}

}  // namespace rlvr
