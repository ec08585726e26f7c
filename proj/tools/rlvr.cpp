// Command-line front end. Exit codes: 0 ok, 2 config, 3 provider,
// 4 checkpoint, 1 anything else.

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rlvr/harness.hpp"

extern char** environ;

namespace {

int serve_provider(const std::string& config_path, const std::string& host,
                   int port) {
  return rlvr::guarded(std::cerr, [&] {
    rlvr::VerifierConfig vcfg;
    if (!config_path.empty())
      vcfg = rlvr::load_config(config_path, rlvr::rlvr_environment(environ)).verifier;
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    rlvr::ProviderServer server(vcfg);
    const auto bound = server.start(static_cast<std::uint16_t>(port), host);
    std::cout << "listening on " << host << ":" << bound << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
    return static_cast<int>(rlvr::kExitOk);
  });
}

int render_prompts(const std::string& in_path, const std::string& out_path) {
  return rlvr::guarded(std::cerr, [&] {
    std::ifstream in(in_path);
    if (!in) throw rlvr::InvalidConfig("cannot open " + in_path);
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw rlvr::InvalidConfig("cannot write " + out_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (rlvr::count_tokens(line) == 0) continue;
      nlohmann::json rec;
      try {
        const auto j = nlohmann::json::parse(line);
        const auto a = rlvr::build_prompt(rlvr::turns_from_json(j));
        nlohmann::json spans = nlohmann::json::array();
        for (const auto& s : a.control_token_spans) spans.push_back({s.begin, s.end});
        rec = {{"rendered", a.rendered},
               {"mode", rlvr::mode_name(a.mode)},
               {"control_token_spans", spans}};
      } catch (const std::exception& e) {
        rec = {{"line", line_no}, {"error", e.what()}};
      }
      out << rec.dump() << '\n';
    }
    return static_cast<int>(rlvr::kExitOk);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Verifiable-reward GRPO simulator with length-penalty shaping"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "run GRPO training from a config");
  std::string train_config;
  std::optional<std::uint64_t> train_seed;
  train->add_option("--config", train_config, "config file (JSON)")->required();
  train->add_option("--seed", train_seed, "override the root seed");

  auto* eval = app.add_subcommand("eval-budget", "token-budget accuracy curves");
  std::string eval_ckpt, eval_config, eval_out;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--config", eval_config)->required();
  eval->add_option("--out", eval_out, "writes OUT_thinking.csv and OUT_non_thinking.csv")
      ->required();

  auto* check = app.add_subcommand("reward-check", "score a JSONL batch of responses");
  std::string check_in, check_out, check_config;
  check->add_option("--in", check_in)->required();
  check->add_option("--out", check_out)->required();
  check->add_option("--config", check_config, "take verifier thresholds from a config");

  auto* resume = app.add_subcommand("resume", "continue training from a checkpoint");
  rlvr::ResumeRequest resume_req;
  std::vector<std::string> resume_sets;
  std::optional<std::int64_t> resume_steps;
  resume->add_option("--checkpoint", resume_req.checkpoint)->required();
  resume->add_option("--set", resume_sets,
                     "key=value; learning_rate, kl_coefficient, clip_epsilon, "
                     "penalty.*, steps, output.dir");
  resume->add_flag("--reset", resume_req.force_reset,
                   "re-anchor the reference policy even without overrides");
  resume->add_option("--steps", resume_steps, "number of additional steps");

  auto* demo = app.add_subcommand("demo", "paired penalty on/off run with budget curves");
  std::string demo_config, demo_out;
  demo->add_option("--config", demo_config)->required();
  demo->add_option("--out", demo_out, "output directory (default: output.dir)");

  auto* serve = app.add_subcommand("serve-provider", "run the NDJSON reward provider");
  std::string serve_config, serve_host = "127.0.0.1";
  int serve_port = 7070;
  serve->add_option("--config", serve_config, "take verifier thresholds from a config");
  serve->add_option("--host", serve_host);
  serve->add_option("--port", serve_port, "0 picks a free port");

  auto* render = app.add_subcommand("render-prompt", "render JSONL conversations");
  std::string render_in, render_out;
  render->add_option("--in", render_in)->required();
  render->add_option("--out", render_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : rlvr::kExitConfig;
  }

  const auto env = rlvr::rlvr_environment(environ);
  if (*train) return rlvr::cmd_train(train_config, train_seed, env, std::cout, std::cerr);
  if (*eval)
    return rlvr::cmd_eval_budget(eval_ckpt, eval_config, eval_out, env, std::cout,
                                 std::cerr);
  if (*check) {
    rlvr::VerifierConfig vcfg;
    if (!check_config.empty()) {
      const int rc = rlvr::guarded(std::cerr, [&] {
        vcfg = rlvr::load_config(check_config, env).verifier;
        return static_cast<int>(rlvr::kExitOk);
      });
      if (rc != 0) return rc;
    }
    return rlvr::cmd_reward_check(check_in, check_out, vcfg, std::cout, std::cerr);
  }
  if (*resume) {
    for (const std::string& kv : resume_sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) {
        std::cerr << "config error: --set expects key=value, got '" << kv << "'\n";
        return rlvr::kExitConfig;
      }
      resume_req.overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    resume_req.extra_steps = resume_steps;
    return rlvr::cmd_resume(resume_req, std::cout, std::cerr);
  }
  if (*demo) return rlvr::cmd_demo(demo_config, demo_out, env, std::cout, std::cerr);
  if (*serve) return serve_provider(serve_config, serve_host, serve_port);
  if (*render) return render_prompts(render_in, render_out);
  return rlvr::kExitFailure;
}
