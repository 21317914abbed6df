// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "platoon/nn.hpp"
#include "platoon/rng.hpp"

namespace platoon {

/// One full episode as collected, in slot order.
struct EpisodeRecord {
  std::uint64_t index = 0;
  double epsilon = 1.0;
  double progress = 0.0;  // index / planned episodes, for fingerprints
  std::vector<Tensor2> observations;  // per slot: agents x features, seen before acting
  std::vector<std::vector<std::size_t>> actions;  // per slot, per agent
  std::vector<double> rewards;
  std::vector<bool> dones;
  // Q-values seen while acting (agents x actions per slot); only kept on request.
  std::vector<Tensor2> q_values;

  std::size_t length() const { return rewards.size(); }
  std::size_t n_agents() const { return observations.empty() ? 0 : observations[0].rows(); }
  std::optional<std::size_t> previous_action(std::size_t slot, std::size_t agent) const;

  /// Throws std::logic_error unless exactly the final slot is terminal and all
  /// per-slot arrays agree in length.
  void check() const;
};

/// ε(e) = max(1 - delta * e, floor).
struct EpsilonSchedule {
  double delta = 1e-3;
  double floor = 0.03;

  double at(std::uint64_t episode) const;
};

/// FIFO ring of whole episodes.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  void push(EpisodeRecord episode);
  /// Draws `count` distinct episodes uniformly at random. Pointers stay valid
  /// until the next push.
  std::vector<const EpisodeRecord*> sample(std::size_t count, Rng& rng) const;

  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  const EpisodeRecord& at(std::size_t i) const { return episodes_.at(i); }

 private:
  std::size_t capacity_;
  std::deque<EpisodeRecord> episodes_;
};

}  // namespace platoon
