// SPDX-License-Identifier: Apache-2.0
#include "platoon/replay.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace platoon {

std::optional<std::size_t> EpisodeRecord::previous_action(std::size_t slot,
                                                          std::size_t agent) const {
  if (slot == 0) return std::nullopt;
  return actions.at(slot - 1).at(agent);
}

void EpisodeRecord::check() const {
  const std::size_t n = length();
  if (n == 0) throw std::logic_error("episode record is empty");
  if (observations.size() != n || actions.size() != n || dones.size() != n) {
    throw std::logic_error(fmt::format("episode {}: per-slot arrays disagree in length", index));
  }
  for (std::size_t t = 0; t + 1 < n; ++t) {
    if (dones[t]) throw std::logic_error(fmt::format("episode {}: done before slot {}", index, t));
  }
  if (!dones.back()) throw std::logic_error(fmt::format("episode {}: final slot not done", index));
}

double EpsilonSchedule::at(std::uint64_t episode) const {
  return std::max(1.0 - delta * static_cast<double>(episode), floor);
}

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayMemory::push(EpisodeRecord episode) {
  episode.check();
  if (episodes_.size() == capacity_) episodes_.pop_front();
  episodes_.push_back(std::move(episode));
}

std::vector<const EpisodeRecord*> ReplayMemory::sample(std::size_t count, Rng& rng) const {
  if (count > episodes_.size()) {
    throw std::invalid_argument(
        fmt::format("cannot sample {} episodes from {}", count, episodes_.size()));
  }
  std::vector<std::size_t> idx(episodes_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates keeps the draw order tied to the generator alone.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::vector<const EpisodeRecord*> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(&episodes_[idx[i]]);
  return out;
}

}  // namespace platoon
