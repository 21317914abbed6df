// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "platoon/baselines.hpp"
#include "platoon/checkpoint.hpp"
#include "platoon/metrics.hpp"
#include "platoon/vdn.hpp"

namespace platoon {

/// Payload sweeps are expressed in multiples of this size.
inline constexpr std::size_t kPayloadUnitBytes = 1200;

std::string version_string();

/// A frozen decision rule: trained networks or the random baseline.
struct Policy {
  std::string algo;  // vdn | marl | random
  std::vector<QNetParams> nets;
  // Fingerprint shown to fingerprinted networks during evaluation.
  double fp_epsilon = 0.0;
  double fp_progress = 1.0;

  /// The controller refers to `nets`; keep the policy alive while using it.
  std::unique_ptr<Controller> make_controller(const ScenarioConfig& cfg) const;
};

Policy random_policy_spec();

/// Rejects checkpoints whose scenario hash, algorithm or shapes do not match
/// `cfg` with ConfigError.
Policy policy_from_checkpoint(const Checkpoint& ckpt, const ScenarioConfig& cfg);

std::unique_ptr<Learner> make_learner(const ScenarioConfig& cfg, const std::string& algo,
                                      std::uint64_t seed);

struct EvalOptions {
  std::size_t episodes = 500;
  std::uint64_t seed = 1;
};

struct EvalResult {
  MetricsRow row;
  std::vector<std::vector<bool>> delivered;  // per episode, per platoon
  std::vector<EpisodeOutcome> outcomes;
  std::size_t trace_episode = 0;
};

/// Environment seed used by evaluation, derived from the evaluation seed so
/// that it never coincides with a training stream.
std::uint64_t eval_env_seed(std::uint64_t seed);
/// Episode whose per-slot trace is written, drawn from the evaluation seed.
std::size_t trace_episode_index(std::uint64_t seed, std::size_t episodes);

/// Greedy (ε = 0) rollouts over the whole period at payload
/// `payload_multiple` x kPayloadUnitBytes. Every policy evaluated with the
/// same seed sees the same episodes.
EvalResult evaluate(const ScenarioConfig& cfg, const Policy& policy, double payload_multiple,
                    const EvalOptions& opts, std::ostream* trace = nullptr);

struct RunManifest {
  std::string command;
  std::string algo;
  std::uint64_t seed = 0;
  std::string config_text;
  std::string version;
  std::vector<std::string> outputs;
  std::string started;
  std::string finished;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

std::string utc_timestamp();

struct TrainRunResult {
  std::vector<TrainLogRow> log;
  Checkpoint checkpoint;
  RunManifest manifest;
};

/// Trains `algo` for `episodes` episodes and writes checkpoint.bin,
/// train_log.csv, reward_curve.csv and manifest.json into out_dir.
TrainRunResult train_run(const ScenarioConfig& cfg, const std::string& algo, std::uint64_t seed,
                         std::size_t episodes, const std::filesystem::path& out_dir);

/// Evaluates each policy at each payload multiple; writes metrics.csv, one
/// JSONL trace per (policy, multiple) and manifest.json into out_dir.
std::vector<MetricsRow> eval_run(const ScenarioConfig& cfg, const std::vector<Policy>& policies,
                                 const std::vector<double>& payload_multiples,
                                 const EvalOptions& opts, const std::filesystem::path& out_dir);

}  // namespace platoon
