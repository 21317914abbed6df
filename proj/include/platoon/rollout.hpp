// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "platoon/env.hpp"
#include "platoon/nn.hpp"
#include "platoon/replay.hpp"

namespace platoon {

/// Network input = observation ⊕ [fingerprint] ⊕ previous-action one-hot
/// ⊕ [agent-id one-hot].
struct InputLayout {
  std::size_t obs_dim = 0;
  std::size_t n_actions = 0;
  std::size_t n_agents = 0;
  bool agent_id = true;
  bool fingerprint = false;

  std::size_t input_dim() const {
    return obs_dim + (fingerprint ? 2 : 0) + n_actions + (agent_id ? n_agents : 0);
  }

  static InputLayout shared(const ScenarioConfig& cfg);       // VDN
  static InputLayout independent(const ScenarioConfig& cfg);  // fingerprint MARL
};

/// Writes one input row. `prev_action` is empty at the first slot.
void fill_input(const InputLayout& layout, const double* obs, std::optional<std::size_t> prev_action,
                std::size_t agent, double fp_epsilon, double fp_progress,
                Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax(const Eigen::Ref<const Eigen::RowVectorXd>& q);

/// Decision-maker for all platoons. Implementations keep any recurrent state
/// between act() calls; begin_episode() clears it.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  /// `epsilon` and `progress` are the training-progress fingerprint.
  virtual void begin_episode(double epsilon, double progress) = 0;
  /// One joint action. Q-values of the step are written to `q_out` when the
  /// controller has any and q_out is non-null.
  virtual std::vector<std::size_t> act(const std::vector<Observation>& obs, double epsilon,
                                       Rng& rng, Tensor2* q_out) = 0;
};

struct EpisodeOutcome {
  double total_reward = 0.0;
  std::size_t slots = 0;               // slots elapsed when the episode ended
  std::size_t completion_slot = 0;     // slot of the last delivery, or slots if incomplete
  std::vector<bool> delivered;         // per platoon
  std::vector<double> slot_total_rate; // sum of platoon rates per slot
  bool all_delivered() const;
};

struct RolloutOptions {
  double epsilon = 0.0;  // exploration rate used to act
  // Training-progress fingerprint handed to the controller and the record.
  double fp_epsilon = 0.0;
  double fp_progress = 0.0;
  EpisodeRecord* record = nullptr;  // filled when non-null
  bool record_q = false;
  std::ostream* trace = nullptr;    // JSONL, one line per slot
};

/// Plays one episode of `env` from reset(episode_index) to termination.
EpisodeOutcome run_episode(Env& env, std::uint64_t episode_index, Controller& controller, Rng& rng,
                           const RolloutOptions& opts = {});

}  // namespace platoon
