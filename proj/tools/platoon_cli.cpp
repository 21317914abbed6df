// SPDX-License-Identifier: Apache-2.0
//
// platoon: train, evaluate and compare groupcast resource allocation policies.
//
//   platoon train   --config desk.cfg --algo vdn --out-dir runs/vdn
//   platoon eval    --config desk.cfg --checkpoint runs/vdn/checkpoint.bin --algo random
//   platoon compare --config desk.cfg --out-dir runs/cmp
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error.
// Log verbosity follows SPDLOG_LEVEL (e.g. SPDLOG_LEVEL=debug).

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <optional>

#include "platoon/harness.hpp"

namespace fs = std::filesystem;
using namespace platoon;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Scenario config file")->required();
  cmd->add_option("--seed", c.seed, "Run seed (default: rng_seed from the config)");
  cmd->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
}

std::vector<double> default_multiples() {
  std::vector<double> m;
  for (int i = 1; i <= 10; ++i) m.push_back(i);
  return m;
}

std::string tau_dir(double tau) { return fmt::format("tau_{}", tau); }

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_st("platoon"));
  spdlog::cfg::load_env_levels();

  CLI::App app{"Multi-platoon groupcast resource allocation with cooperative Q-learning"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  Common train_c;
  std::string train_algo = "vdn";
  std::optional<std::size_t> train_episodes;
  std::vector<double> train_taus;
  CLI::App* train = app.add_subcommand("train", "Train VDN or the fingerprint MARL baseline");
  add_common(train, train_c);
  train->add_option("--algo", train_algo, "vdn | marl")
      ->check(CLI::IsMember({"vdn", "marl"}))
      ->capture_default_str();
  train->add_option("--episodes", train_episodes, "Training episodes (default: train_episodes)");
  train->add_option("--tau", train_taus, "Completion bonus coefficient(s); several values "
                                         "train one run per value under tau_<v>/")
      ->delimiter(',');

  Common eval_c;
  std::vector<std::string> eval_checkpoints;
  std::string eval_algo;
  std::vector<double> eval_multiples = default_multiples();
  std::size_t eval_episodes = 500;
  std::optional<double> eval_tau;
  CLI::App* eval = app.add_subcommand("eval", "Greedy evaluation over a payload sweep");
  add_common(eval, eval_c);
  eval->add_option("--checkpoint", eval_checkpoints, "Checkpoint file(s) to evaluate");
  eval->add_option("--algo", eval_algo, "Set to 'random' to include the random policy")
      ->check(CLI::IsMember({"random"}));
  eval->add_option("--payload-multiples", eval_multiples, "Payload sizes in units of 1200 bytes")
      ->delimiter(',');
  eval->add_option("--episodes", eval_episodes, "Episodes per payload point")
      ->capture_default_str();
  eval->add_option("--tau", eval_tau, "Override tau");

  Common cmp_c;
  std::optional<std::size_t> cmp_train_episodes;
  std::vector<double> cmp_multiples = default_multiples();
  std::size_t cmp_episodes = 500;
  std::optional<double> cmp_tau;
  CLI::App* compare =
      app.add_subcommand("compare", "Train VDN and MARL, then evaluate them against Random");
  add_common(compare, cmp_c);
  compare->add_option("--train-episodes", cmp_train_episodes, "Training episodes per algorithm");
  compare->add_option("--payload-multiples", cmp_multiples, "Payload sizes in units of 1200 bytes")
      ->delimiter(',');
  compare->add_option("--episodes", cmp_episodes, "Evaluation episodes per payload point")
      ->capture_default_str();
  compare->add_option("--tau", cmp_tau, "Override tau");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) {
      ScenarioConfig cfg = load_config(train_c.config);
      const std::uint64_t seed = train_c.seed.value_or(cfg.rng_seed);
      const std::size_t episodes = train_episodes.value_or(cfg.learning.train_episodes);
      if (train_taus.size() <= 1) {
        if (!train_taus.empty()) cfg.learning.tau = train_taus.front();
        validate(cfg);
        train_run(cfg, train_algo, seed, episodes, train_c.out_dir);
      } else {
        for (double tau : train_taus) {
          ScenarioConfig c = cfg;
          c.learning.tau = tau;
          validate(c);
          train_run(c, train_algo, seed, episodes, fs::path(train_c.out_dir) / tau_dir(tau));
        }
      }
    } else if (*eval) {
      ScenarioConfig cfg = load_config(eval_c.config);
      if (eval_tau) cfg.learning.tau = *eval_tau;
      validate(cfg);
      std::vector<Policy> policies;
      for (const std::string& path : eval_checkpoints) {
        policies.push_back(policy_from_checkpoint(load_checkpoint(path), cfg));
      }
      if (eval_algo == "random") policies.push_back(random_policy_spec());
      if (policies.empty()) {
        throw ConfigError("nothing to evaluate: pass --checkpoint and/or --algo random");
      }
      eval_run(cfg, policies, eval_multiples,
               {eval_episodes, eval_c.seed.value_or(cfg.rng_seed)}, eval_c.out_dir);
    } else if (*compare) {
      ScenarioConfig cfg = load_config(cmp_c.config);
      if (cmp_tau) cfg.learning.tau = *cmp_tau;
      validate(cfg);
      const std::uint64_t seed = cmp_c.seed.value_or(cfg.rng_seed);
      const std::size_t episodes = cmp_train_episodes.value_or(cfg.learning.train_episodes);
      const fs::path out = cmp_c.out_dir;
      std::vector<Policy> policies;
      for (const std::string algo : {"vdn", "marl"}) {
        TrainRunResult r = train_run(cfg, algo, seed, episodes, out / algo);
        policies.push_back(policy_from_checkpoint(r.checkpoint, cfg));
      }
      policies.push_back(random_policy_spec());
      eval_run(cfg, policies, cmp_multiples, {cmp_episodes, seed}, out / "eval");
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
