// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "platoon/vdn.hpp"

namespace platoon {

/// One i.i.d. uniform flat action per agent.
std::vector<std::size_t> random_policy(Rng& rng, std::size_t n_agents, std::size_t n_actions);

class RandomController : public Controller {
 public:
  explicit RandomController(std::size_t n_actions) : n_actions_(n_actions) {}
  std::string name() const override { return "random"; }
  void begin_episode(double, double) override {}
  std::vector<std::size_t> act(const std::vector<Observation>& obs, double epsilon, Rng& rng,
                               Tensor2* q_out) override;

 private:
  std::size_t n_actions_;
};

/// Independent Q-networks, one per agent, with the training-progress
/// fingerprint (ε, e/E) appended to each observation.
class IndependentQController : public Controller {
 public:
  IndependentQController(const std::vector<QNetParams>& nets, InputLayout layout);
  std::string name() const override { return "marl"; }
  void begin_episode(double epsilon, double progress) override;
  std::vector<std::size_t> act(const std::vector<Observation>& obs, double epsilon, Rng& rng,
                               Tensor2* q_out) override;

 private:
  const std::vector<QNetParams>& nets_;
  InputLayout layout_;
  double fp_epsilon_ = 1.0;
  double fp_progress_ = 0.0;
  std::vector<Tensor2> hidden_;
  std::vector<std::optional<std::size_t>> prev_;
};

/// Fingerprint MARL: same network, optimizer and replay as VdnLearner, but N
/// separate parameter sets each fitted to y_i = r + η·max Q'_i.
class MarlLearner : public Learner {
 public:
  MarlLearner(const ScenarioConfig& cfg, std::uint64_t seed);

  Controller& controller() override { return controller_; }
  void sync_target() override;
  Checkpoint checkpoint() const override;

  const std::vector<QNetParams>& nets() const { return nets_; }
  const std::vector<QNetParams>& targets() const { return targets_; }
  const InputLayout& layout() const { return layout_; }

 protected:
  UpdateStats update(std::span<const EpisodeRecord* const> batch) override;

 private:
  InputLayout layout_;
  std::vector<QNetParams> nets_;
  std::vector<QNetParams> targets_;
  std::vector<AdamState> adams_;
  IndependentQController controller_;
};

}  // namespace platoon
