// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "platoon/checkpoint.hpp"
#include "platoon/config.hpp"
#include "platoon/env.hpp"
#include "platoon/nn.hpp"
#include "platoon/replay.hpp"
#include "platoon/rollout.hpp"

namespace platoon {

struct ActionChoice {
  std::vector<std::size_t> actions;  // one per input row
  Tensor2 hidden;
  Tensor2 q;
};

/// ε-greedy over a batch of input rows. The forward pass always runs so the
/// recurrent state advances on exploratory steps too. For each row, one
/// uniform draw decides exploration and a second picks the random action.
ActionChoice select_actions(const QNetParams& params, const Tensor2& inputs, const Tensor2& hidden,
                            double epsilon, Rng& rng);

/// Single-agent form: builds the input from (obs, prev action, agent id).
ActionChoice select_action(std::size_t agent, const Observation& obs,
                           std::optional<std::size_t> prev_action, const Tensor2& hidden,
                           const QNetParams& params, const InputLayout& layout, double epsilon,
                           Rng& rng);

/// Additive mixer: Q_tot = Σ_i Q_i.
double mix(std::span<const double> q_chosen);

/// y = r + (done ? 0 : discount * Σ_i max_a Q'_i(o_i', a)); the team reward
/// is counted once.
double compute_target(double reward, bool done, std::span<const double> next_max, double discount);

struct LossResult {
  double loss = 0.0;
  QNetParams grads;
  std::size_t samples = 0;  // (episode, slot) pairs averaged over
};

struct TdSettings {
  double discount = 0.9;
  TargetMode mode = TargetMode::kStandard;
  double reward_scale = 1.0;
};

/// Mean over (episode, slot) of (Q_tot - y_tot)^2 with hidden states rolled
/// from zero over each full episode for both networks. Gradients are taken
/// with respect to `online` only, by backpropagation through time.
LossResult vdn_loss(std::span<const EpisodeRecord* const> batch, const QNetParams& online,
                    const QNetParams& target, const InputLayout& layout, const TdSettings& td);

/// TD targets y_tot per slot for each episode of `batch`, in batch order.
std::vector<std::vector<double>> vdn_targets(std::span<const EpisodeRecord* const> batch,
                                             const QNetParams& online, const QNetParams& target,
                                             const InputLayout& layout, const TdSettings& td);

/// Single-agent TD loss for independent learners: agent `agent`'s network,
/// fingerprinted inputs, y = r + discount * max_a Q'(o', a).
LossResult independent_loss(std::span<const EpisodeRecord* const> batch, std::size_t agent,
                            const QNetParams& online, const QNetParams& target,
                            const InputLayout& layout, const TdSettings& td);

/// Per-slot Q-values (agents x actions) obtained by replaying a stored
/// episode through `params` from a zero hidden state.
std::vector<Tensor2> replay_q_values(const EpisodeRecord& episode, const QNetParams& params,
                                     const InputLayout& layout);

/// Controller for the shared network: every agent runs the same parameters,
/// told apart by the agent-id one-hot.
class SharedQController : public Controller {
 public:
  SharedQController(const QNetParams& params, InputLayout layout);
  std::string name() const override { return "vdn"; }
  void begin_episode(double epsilon, double progress) override;
  std::vector<std::size_t> act(const std::vector<Observation>& obs, double epsilon, Rng& rng,
                               Tensor2* q_out) override;

 private:
  const QNetParams& params_;
  InputLayout layout_;
  Tensor2 hidden_;
  std::vector<std::optional<std::size_t>> prev_;
};

struct TrainLogRow {
  std::size_t episode = 0;
  double epsilon = 1.0;
  double total_reward = 0.0;
  double loss = std::numeric_limits<double>::quiet_NaN();  // NaN before the first update
  double grad_norm = std::numeric_limits<double>::quiet_NaN();
  bool clipped = false;
  std::size_t completion_slot = 0;
  std::size_t delivered = 0;
  double wall_ms = 0.0;
};

struct UpdateStats {
  double loss = 0.0;
  double grad_norm = 0.0;
  bool clipped = false;
};

/// Episode loop shared by the VDN and independent learners: ε schedule,
/// rollout, replay storage, one gradient step per episode once the memory
/// holds a batch, and target sync every target_sync_updates steps.
class Learner {
 public:
  Learner(const ScenarioConfig& cfg, std::uint64_t seed, std::string algo);
  virtual ~Learner() = default;
  Learner(const Learner&) = delete;
  Learner& operator=(const Learner&) = delete;

  /// Runs the next episode. `planned` sets the fingerprint progress scale.
  TrainLogRow run_episode(std::size_t planned);
  std::vector<TrainLogRow> train(std::size_t episodes,
                                 const std::function<void(const TrainLogRow&)>& on_episode = {});

  virtual Controller& controller() = 0;
  virtual void sync_target() = 0;
  virtual Checkpoint checkpoint() const = 0;

  const std::string& algo() const { return algo_; }
  const ScenarioConfig& config() const { return cfg_; }
  const ReplayMemory& memory() const { return memory_; }
  const EpsilonSchedule& schedule() const { return schedule_; }
  std::size_t episodes_done() const { return episode_; }
  std::size_t updates() const { return updates_; }
  std::size_t clip_events() const { return clip_events_; }
  double last_fp_epsilon() const { return last_fp_epsilon_; }
  double last_fp_progress() const { return last_fp_progress_; }

 protected:
  virtual UpdateStats update(std::span<const EpisodeRecord* const> batch) = 0;
  std::string checkpoint_metadata() const;
  TdSettings td_settings() const;

  ScenarioConfig cfg_;
  std::uint64_t seed_;
  std::string algo_;
  Env env_;
  ReplayMemory memory_;
  EpsilonSchedule schedule_;
  Rng explore_rng_;
  Rng replay_rng_;
  std::size_t episode_ = 0;
  std::size_t updates_ = 0;
  std::size_t clip_events_ = 0;
  double last_fp_epsilon_ = 1.0;
  double last_fp_progress_ = 0.0;
};

/// VDN: one shared network ω, its target ω', and Adam state.
class VdnLearner : public Learner {
 public:
  VdnLearner(const ScenarioConfig& cfg, std::uint64_t seed);

  Controller& controller() override { return controller_; }
  void sync_target() override;
  Checkpoint checkpoint() const override;

  const QNetParams& params() const { return params_; }
  const QNetParams& target() const { return target_; }
  const InputLayout& layout() const { return layout_; }

 protected:
  UpdateStats update(std::span<const EpisodeRecord* const> batch) override;

 private:
  InputLayout layout_;
  QNetParams params_;
  QNetParams target_;
  AdamState adam_;
  SharedQController controller_;
};

}  // namespace platoon
