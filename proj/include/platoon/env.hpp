// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "platoon/channel_model.hpp"
#include "platoon/config.hpp"
#include "platoon/rng.hpp"

namespace platoon {

/// One leader's resource choice for a slot.
struct Action {
  std::size_t subchannel = 0;
  std::size_t power_level = 0;
  bool operator==(const Action&) const = default;
};

/// flat id = subchannel * H + power_level. Throws std::domain_error when the
/// action lies outside the K x H grid.
std::size_t action_encode(const Action& a, std::size_t n_subchannels, std::size_t n_power_levels);
Action action_decode(std::size_t flat_id, std::size_t n_subchannels, std::size_t n_power_levels);

/// Local view of one platoon leader. Every component lies in [0, 1].
struct Observation {
  std::vector<double> interference;  // per subchannel, normalized dBm at own tail
  double remaining_bits_norm = 0.0;
  double remaining_slots_norm = 0.0;

  /// interference ⊕ remaining bits ⊕ remaining slots, length K + 2.
  std::vector<double> features() const;
  static std::size_t size(std::size_t n_subchannels) { return n_subchannels + 2; }
};

struct EnvState {
  std::size_t slot = 0;
  std::vector<double> remaining_bits;
  Topology topology;
  LinkMatrix alpha_db;
  LinkMatrix h;
  // [platoon][subchannel], dBm measured at the platoon's tail during the last slot.
  std::vector<std::vector<double>> last_interference_dbm;
  // Slot count at which the last payload finished; empty while any remains.
  std::optional<std::size_t> completion_slot;
  bool done = false;
};

struct StepResult {
  std::vector<Observation> observations;
  double reward = 0.0;
  bool done = false;
  std::vector<double> rates;           // bits/s/Hz per platoon, 0 when silent
  std::vector<double> delivered_bits;  // this slot
  std::vector<int> subchannels;        // per platoon, -1 when silent
};

/// Team reward for one slot. While any payload remains, the sum of the rates
/// achieved by still-unfinished platoons (callers pass 0 for finished ones);
/// once every payload is delivered, tau times the remaining slot count.
double reward_fn(std::span<const double> rates, std::span<const double> remaining_bits,
                 std::size_t remaining_slots, double tau);

/// Multi-platoon groupcast Markov game. One instance is single-writer.
///
/// Each episode draws fresh positions and shadowing from a generator keyed
/// by (seed, episode index); Rayleigh fading is redrawn every slot from the
/// same episode generator, so an episode is fully reproducible from its key.
class Env {
 public:
  /// Accepts payload_bytes == 0 (an empty payload is delivered at reset).
  Env(ScenarioConfig cfg, std::uint64_t seed);

  std::vector<Observation> reset(std::uint64_t episode_index);

  /// When set, an episode always lasts the whole period: slots after the
  /// last delivery keep every platoon silent and pay no reward. Training
  /// episodes end at the last delivery instead.
  void set_full_period(bool on) { full_period_ = on; }
  bool full_period() const { return full_period_; }

  /// Advances one slot. Throws std::logic_error once the episode is done and
  /// std::invalid_argument for a malformed joint action.
  StepResult step(std::span<const std::size_t> joint_action);

  std::vector<Observation> observe() const;
  Observation observe(std::size_t platoon) const;

  const EnvState& state() const { return state_; }
  /// Direct state access for tests that pin down fading or payload counters.
  EnvState& mutable_state() { return state_; }
  const ScenarioConfig& config() const { return cfg_; }

  std::size_t n_agents() const { return cfg_.n_platoons; }
  std::size_t n_actions() const { return cfg_.n_actions(); }
  std::size_t slots() const { return slots_; }
  double noise_w() const { return noise_w_; }
  double bits_per_rate_unit() const { return cfg_.subchannel_bw_hz * cfg_.slot_ms * 1e-3; }

 private:
  ScenarioConfig cfg_;
  std::uint64_t seed_;
  std::size_t slots_;
  double noise_w_;
  std::vector<double> power_w_;
  Rng rng_;
  bool full_period_ = false;
  EnvState state_;
};

}  // namespace platoon
