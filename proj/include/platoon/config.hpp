// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace platoon {

/// Raised for malformed or inconsistent configuration. `key()` names the
/// offending entry when there is one.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what, std::string key = {})
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Training diverged or produced non-finite values.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LanePlacement { kAligned, kStaggered };
enum class PathlossModel { kFreeSpace, kWinnerB1Los };
enum class TargetMode { kStandard, kLiteral, kDouble };

struct LearningParams {
  double tau = 0.5;
  // Multiplies rewards before they enter TD targets; logged rewards are raw.
  double reward_scale = 0.01;
  double discount = 0.9;
  double learning_rate = 1e-3;
  double epsilon_delta = 1e-3;
  double epsilon_min = 0.03;
  std::size_t batch_episodes = 32;
  std::size_t replay_capacity = 2000;
  std::size_t target_sync_updates = 100;
  double grad_clip_norm = 10.0;
  std::size_t hidden_units = 64;
  std::size_t train_episodes = 3000;
  TargetMode target_mode = TargetMode::kStandard;
};

/// Every physical, protocol and learning parameter of a run.
struct ScenarioConfig {
  std::size_t n_platoons = 4;
  std::size_t platoon_len = 5;  // leader + followers
  double head_to_tail_m = 75.0;
  std::size_t n_subchannels = 2;
  double subchannel_bw_hz = 180e3;
  double carrier_hz = 5.9e9;
  std::vector<double> power_levels_dbm{23.0, 15.0, 10.0, -114.0};
  double noise_dbm = -112.4473;
  double antenna_gain_db = 3.0;
  double shadow_std_db = 3.0;
  double slot_ms = 1.0;
  double period_ms = 100.0;
  std::size_t payload_bytes = 2400;
  double lane_width_m = 4.0;
  LanePlacement lane_spacing_scheme = LanePlacement::kAligned;
  double head_spacing_m = 150.0;
  double head_jitter_m = 10.0;
  PathlossModel pathloss_model = PathlossModel::kFreeSpace;
  double interference_floor_dbm = -114.0;
  double interference_ceiling_dbm = -30.0;
  std::uint64_t rng_seed = 1;
  LearningParams learning;

  std::size_t followers() const { return platoon_len - 1; }
  std::size_t n_power_levels() const { return power_levels_dbm.size(); }
  std::size_t n_actions() const { return n_subchannels * power_levels_dbm.size(); }
  std::size_t slots_per_period() const;
  double payload_bits() const { return 8.0 * static_cast<double>(payload_bytes); }
};

/// Checks the invariants a config file must satisfy. Throws ConfigError.
void validate(const ScenarioConfig& cfg);

/// Parses the flat `key = value` format. Every key is required; unknown keys
/// are rejected. `#` starts a comment.
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Inverse of parse_config; output parses back to an identical config.
std::string serialize_config(const ScenarioConfig& cfg);

/// Stable 64-bit hash of the fields that fix the physical scenario and the
/// network input layout. Payload size, seeds and learning hyperparameters are
/// excluded so one checkpoint can be evaluated across payload sweeps.
std::uint64_t scenario_hash(const ScenarioConfig& cfg);

std::vector<std::string> config_keys();

std::string to_string(LanePlacement p);
std::string to_string(PathlossModel m);
std::string to_string(TargetMode m);

}  // namespace platoon
