// SPDX-License-Identifier: Apache-2.0
#include "platoon/env.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <stdexcept>

namespace platoon {

std::size_t action_encode(const Action& a, std::size_t n_subchannels,
                          std::size_t n_power_levels) {
  if (a.subchannel >= n_subchannels || a.power_level >= n_power_levels) {
    throw std::domain_error(fmt::format("action ({}, {}) outside the {}x{} grid", a.subchannel,
                                        a.power_level, n_subchannels, n_power_levels));
  }
  return a.subchannel * n_power_levels + a.power_level;
}

Action action_decode(std::size_t flat_id, std::size_t n_subchannels,
                     std::size_t n_power_levels) {
  if (flat_id >= n_subchannels * n_power_levels) {
    throw std::domain_error(fmt::format("action id {} outside [0, {})", flat_id,
                                        n_subchannels * n_power_levels));
  }
  return {flat_id / n_power_levels, flat_id % n_power_levels};
}

std::vector<double> Observation::features() const {
  std::vector<double> out(interference);
  out.push_back(remaining_bits_norm);
  out.push_back(remaining_slots_norm);
  return out;
}

double reward_fn(std::span<const double> rates, std::span<const double> remaining_bits,
                 std::size_t remaining_slots, double tau) {
  const bool all_delivered =
      std::all_of(remaining_bits.begin(), remaining_bits.end(), [](double b) { return b <= 0; });
  if (all_delivered) return tau * static_cast<double>(remaining_slots);
  double sum = 0.0;
  for (double r : rates) sum += r;
  return sum;
}

Env::Env(ScenarioConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), seed_(seed), slots_(cfg_.slots_per_period()),
      noise_w_(dbm_to_watt(cfg_.noise_dbm)) {
  ScenarioConfig check = cfg_;
  check.payload_bytes = std::max<std::size_t>(check.payload_bytes, 1);
  validate(check);
  for (double p : cfg_.power_levels_dbm) power_w_.push_back(dbm_to_watt(p));
}

std::vector<Observation> Env::reset(std::uint64_t episode_index) {
  rng_ = make_rng(seed_, Stream::kEnvironment, episode_index);
  const std::size_t n = cfg_.n_platoons;
  state_ = EnvState{};
  state_.topology = build_topology(cfg_, rng_);
  state_.alpha_db = update_large_scale(state_.topology, cfg_, rng_);
  state_.h = LinkMatrix(n, cfg_.followers(), 1.0);
  state_.remaining_bits.assign(n, cfg_.payload_bits());
  state_.last_interference_dbm.assign(n, std::vector<double>(cfg_.n_subchannels, cfg_.noise_dbm));
  state_.completion_slot.reset();
  if (cfg_.payload_bytes == 0) state_.completion_slot = 0;
  state_.done = state_.completion_slot.has_value() && !full_period_;
  return observe();
}

Observation Env::observe(std::size_t p) const {
  Observation o;
  const double lo = cfg_.interference_floor_dbm;
  const double span = cfg_.interference_ceiling_dbm - lo;
  for (double dbm : state_.last_interference_dbm[p]) {
    o.interference.push_back(std::clamp((dbm - lo) / span, 0.0, 1.0));
  }
  const double total = cfg_.payload_bits();
  o.remaining_bits_norm = total > 0 ? state_.remaining_bits[p] / total : 0.0;
  o.remaining_slots_norm =
      static_cast<double>(slots_ - state_.slot) / static_cast<double>(slots_);
  return o;
}

std::vector<Observation> Env::observe() const {
  std::vector<Observation> out;
  out.reserve(cfg_.n_platoons);
  for (std::size_t p = 0; p < cfg_.n_platoons; ++p) out.push_back(observe(p));
  return out;
}

StepResult Env::step(std::span<const std::size_t> joint_action) {
  if (state_.done) throw std::logic_error("Env::step called on a finished episode");
  const std::size_t n = cfg_.n_platoons;
  if (joint_action.size() != n) {
    throw std::invalid_argument(
        fmt::format("expected {} actions, got {}", n, joint_action.size()));
  }

  update_small_scale(state_.h, rng_);
  const LinkMatrix gains = channel_gains(state_.alpha_db, state_.h);

  std::vector<Transmission> tx(n);
  StepResult out;
  out.subchannels.assign(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    const Action a = action_decode(joint_action[p], cfg_.n_subchannels, power_w_.size());
    if (state_.remaining_bits[p] <= 0) continue;  // delivered platoons stay silent
    tx[p] = {static_cast<int>(a.subchannel), power_w_[a.power_level]};
    out.subchannels[p] = tx[p].subchannel;
  }

  out.rates.assign(n, 0.0);
  out.delivered_bits.assign(n, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    out.rates[p] = groupcast_rate(gains, tx, p, noise_w_);
    const double capacity = out.rates[p] * bits_per_rate_unit();
    out.delivered_bits[p] = std::min(capacity, state_.remaining_bits[p]);
    state_.remaining_bits[p] = std::max(0.0, state_.remaining_bits[p] - capacity);
  }

  const std::size_t tail = cfg_.followers() - 1;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t k = 0; k < cfg_.n_subchannels; ++k) {
      state_.last_interference_dbm[p][k] =
          watt_to_dbm(interference_plus_noise_w(gains, tx, p, tail, k, noise_w_));
    }
  }

  const bool was_complete = state_.completion_slot.has_value();
  ++state_.slot;
  out.reward = was_complete ? 0.0
                            : reward_fn(out.rates, state_.remaining_bits, slots_ - state_.slot,
                                        cfg_.learning.tau);
  const bool all_delivered = std::all_of(state_.remaining_bits.begin(),
                                         state_.remaining_bits.end(),
                                         [](double b) { return b <= 0; });
  if (all_delivered && !was_complete) state_.completion_slot = state_.slot;
  state_.done = (all_delivered && !full_period_) || state_.slot == slots_;
  out.done = state_.done;
  out.observations = observe();
  return out;
}

}  // namespace platoon
