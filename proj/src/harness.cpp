// SPDX-License-Identifier: Apache-2.0
#include "platoon/harness.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <random>

#ifndef PLATOON_VERSION
#define PLATOON_VERSION "0.0.0"
#endif

namespace platoon {

namespace fs = std::filesystem;

std::string version_string() { return PLATOON_VERSION; }

std::unique_ptr<Controller> Policy::make_controller(const ScenarioConfig& cfg) const {
  if (algo == "random") return std::make_unique<RandomController>(cfg.n_actions());
  if (algo == "vdn") return std::make_unique<SharedQController>(nets.at(0), InputLayout::shared(cfg));
  if (algo == "marl") {
    return std::make_unique<IndependentQController>(nets, InputLayout::independent(cfg));
  }
  throw std::invalid_argument(fmt::format("unknown algorithm '{}'", algo));
}

Policy random_policy_spec() { return Policy{"random", {}, 0.0, 0.0}; }

Policy policy_from_checkpoint(const Checkpoint& ckpt, const ScenarioConfig& cfg) {
  const std::uint64_t expected = scenario_hash(cfg);
  if (ckpt.scenario_hash != expected) {
    throw ConfigError(fmt::format(
        "checkpoint was trained for scenario {:016x} but the config describes {:016x}; "
        "the physical scenario or network size differs",
        ckpt.scenario_hash, expected));
  }
  InputLayout layout;
  std::size_t n_nets = 0;
  if (ckpt.algo == "vdn") {
    layout = InputLayout::shared(cfg);
    n_nets = 1;
  } else if (ckpt.algo == "marl") {
    layout = InputLayout::independent(cfg);
    n_nets = cfg.n_platoons;
  } else {
    throw ConfigError(fmt::format("checkpoint algorithm '{}' is not evaluable", ckpt.algo));
  }
  const QNetShape shape{layout.input_dim(), cfg.learning.hidden_units, cfg.n_actions()};
  if (ckpt.nets.size() != n_nets) {
    throw ConfigError(fmt::format("{} checkpoint holds {} networks, expected {}", ckpt.algo,
                                  ckpt.nets.size(), n_nets));
  }
  for (const QNetParams& p : ckpt.nets) {
    if (!(p.shape == shape)) throw ConfigError("checkpoint network shape does not match config");
  }

  Policy policy{ckpt.algo, ckpt.nets, 0.0, 1.0};
  const auto meta = nlohmann::json::parse(ckpt.metadata_json, nullptr, false);
  if (meta.is_object()) {
    policy.fp_epsilon = meta.value("fp_epsilon", policy.fp_epsilon);
    policy.fp_progress = meta.value("fp_progress", policy.fp_progress);
  }
  return policy;
}

std::unique_ptr<Learner> make_learner(const ScenarioConfig& cfg, const std::string& algo,
                                      std::uint64_t seed) {
  if (algo == "vdn") return std::make_unique<VdnLearner>(cfg, seed);
  if (algo == "marl") return std::make_unique<MarlLearner>(cfg, seed);
  throw ConfigError(fmt::format("unknown training algorithm '{}' (expected vdn or marl)", algo),
                    "algo");
}

std::uint64_t eval_env_seed(std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::kEvaluation, 0);
  return rng();
}

std::size_t trace_episode_index(std::uint64_t seed, std::size_t episodes) {
  if (episodes == 0) return 0;
  Rng rng = make_rng(seed, Stream::kEvaluation, 2);
  return std::uniform_int_distribution<std::size_t>(0, episodes - 1)(rng);
}

EvalResult evaluate(const ScenarioConfig& cfg, const Policy& policy, double payload_multiple,
                    const EvalOptions& opts, std::ostream* trace) {
  if (opts.episodes == 0) throw std::invalid_argument("evaluation needs at least one episode");
  if (!(payload_multiple >= 0.0)) throw std::invalid_argument("payload multiple must be >= 0");
  ScenarioConfig c = cfg;
  c.payload_bytes =
      static_cast<std::size_t>(std::llround(payload_multiple * static_cast<double>(kPayloadUnitBytes)));

  Env env(c, eval_env_seed(opts.seed));
  env.set_full_period(true);
  const std::unique_ptr<Controller> controller = policy.make_controller(c);
  Rng rng = make_rng(opts.seed, Stream::kEvaluation, 1);

  EvalResult res;
  res.trace_episode = trace_episode_index(opts.seed, opts.episodes);
  double reward = 0.0;
  double completion = 0.0;
  for (std::size_t e = 0; e < opts.episodes; ++e) {
    RolloutOptions ro;
    ro.epsilon = 0.0;
    ro.fp_epsilon = policy.fp_epsilon;
    ro.fp_progress = policy.fp_progress;
    ro.trace = e == res.trace_episode ? trace : nullptr;
    EpisodeOutcome out = run_episode(env, e, *controller, rng, ro);
    reward += out.total_reward;
    completion += static_cast<double>(out.completion_slot);
    res.delivered.push_back(out.delivered);
    res.outcomes.push_back(std::move(out));
  }

  MetricsRow& row = res.row;
  row.algo = policy.algo;
  row.payload_multiple = payload_multiple;
  row.payload_bytes = c.payload_bytes;
  row.episodes = opts.episodes;
  row.delivery_probability = delivery_probability(res.delivered);
  row.all_delivered_probability = all_delivered_probability(res.delivered);
  row.mean_reward = reward / static_cast<double>(opts.episodes);
  row.mean_completion_slot = completion / static_cast<double>(opts.episodes);
  return res;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json RunManifest::to_json() const {
  return {{"command", command},   {"algo", algo},         {"seed", seed},
          {"version", version},   {"config", config_text}, {"outputs", outputs},
          {"started", started},   {"finished", finished},  {"extra", extra}};
}

void RunManifest::write(const fs::path& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  os << to_json().dump(2) << '\n';
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  return os;
}

}  // namespace

TrainRunResult train_run(const ScenarioConfig& cfg, const std::string& algo, std::uint64_t seed,
                         std::size_t episodes, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  TrainRunResult res;
  res.manifest.command = "train";
  res.manifest.algo = algo;
  res.manifest.seed = seed;
  res.manifest.config_text = serialize_config(cfg);
  res.manifest.version = version_string();
  res.manifest.started = utc_timestamp();

  std::unique_ptr<Learner> learner = make_learner(cfg, algo, seed);
  spdlog::info("training {} for {} episodes (seed {}, tau {})", algo, episodes, seed,
               cfg.learning.tau);
  res.log = learner->train(episodes, [&](const TrainLogRow& row) {
    if ((row.episode + 1) % 100 == 0) {
      spdlog::info("{} episode {:>5}  eps {:.3f}  reward {:8.2f}  loss {:.4g}", algo,
                   row.episode + 1, row.epsilon, row.total_reward, row.loss);
    }
  });
  res.checkpoint = learner->checkpoint();
  if (learner->clip_events() > 0) {
    spdlog::info("{}: gradient clipping triggered in {} of {} updates", algo,
                 learner->clip_events(), learner->updates());
  }

  save_checkpoint(out_dir / "checkpoint.bin", res.checkpoint);
  {
    auto os = open_out(out_dir / "train_log.csv");
    write_train_log_csv(os, res.log);
  }
  {
    auto os = open_out(out_dir / "reward_curve.csv");
    write_reward_curve_csv(os, res.log);
  }
  res.manifest.outputs = {"checkpoint.bin", "train_log.csv", "reward_curve.csv"};
  res.manifest.extra = {{"episodes", episodes},
                        {"updates", learner->updates()},
                        {"clip_events", learner->clip_events()},
                        {"tau", cfg.learning.tau}};
  res.manifest.finished = utc_timestamp();
  res.manifest.write(out_dir / "manifest.json");
  return res;
}

std::vector<MetricsRow> eval_run(const ScenarioConfig& cfg, const std::vector<Policy>& policies,
                                 const std::vector<double>& payload_multiples,
                                 const EvalOptions& opts, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  RunManifest manifest;
  manifest.command = "eval";
  manifest.seed = opts.seed;
  manifest.config_text = serialize_config(cfg);
  manifest.version = version_string();
  manifest.started = utc_timestamp();
  for (const Policy& p : policies) {
    manifest.algo += (manifest.algo.empty() ? "" : ",") + p.algo;
  }

  std::vector<MetricsRow> rows;
  for (const Policy& p : policies) {
    for (double m : payload_multiples) {
      const std::string trace_name = fmt::format("trace_{}_x{}.jsonl", p.algo, m);
      auto trace = open_out(out_dir / trace_name);
      EvalResult r = evaluate(cfg, p, m, opts, &trace);
      r.row.trace = trace_name;
      spdlog::info("{} x{}: delivery {:.3f} (all {:.3f}), reward {:.2f}", p.algo, m,
                   r.row.delivery_probability, r.row.all_delivered_probability,
                   r.row.mean_reward);
      rows.push_back(r.row);
      manifest.outputs.push_back(trace_name);
    }
  }
  {
    auto os = open_out(out_dir / "metrics.csv");
    write_metrics_csv(os, rows);
  }
  manifest.outputs.insert(manifest.outputs.begin(), "metrics.csv");
  manifest.extra = {{"episodes", opts.episodes},
                    {"eval_env_seed", eval_env_seed(opts.seed)},
                    {"trace_episode", trace_episode_index(opts.seed, opts.episodes)},
                    {"payload_unit_bytes", kPayloadUnitBytes},
                    {"payload_multiples", payload_multiples}};
  manifest.finished = utc_timestamp();
  manifest.write(out_dir / "manifest.json");
  return rows;
}

}  // namespace platoon
