// SPDX-License-Identifier: Apache-2.0
#include "platoon/rollout.hpp"

#include <json.hpp>

#include <algorithm>

namespace platoon {

InputLayout InputLayout::shared(const ScenarioConfig& cfg) {
  return {Observation::size(cfg.n_subchannels), cfg.n_actions(), cfg.n_platoons, true, false};
}

InputLayout InputLayout::independent(const ScenarioConfig& cfg) {
  return {Observation::size(cfg.n_subchannels), cfg.n_actions(), cfg.n_platoons, false, true};
}

void fill_input(const InputLayout& layout, const double* obs, std::optional<std::size_t> prev_action,
                std::size_t agent, double fp_epsilon, double fp_progress,
                Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  row.setZero();
  Eigen::Index c = 0;
  for (std::size_t i = 0; i < layout.obs_dim; ++i) row(c++) = obs[i];
  if (layout.fingerprint) {
    row(c++) = fp_epsilon;
    row(c++) = fp_progress;
  }
  if (prev_action) row(c + static_cast<Eigen::Index>(*prev_action)) = 1.0;
  c += static_cast<Eigen::Index>(layout.n_actions);
  if (layout.agent_id) row(c + static_cast<Eigen::Index>(agent)) = 1.0;
}

std::size_t argmax(const Eigen::Ref<const Eigen::RowVectorXd>& q) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < q.size(); ++i) {
    if (q(i) > q(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  }
  return best;
}

bool EpisodeOutcome::all_delivered() const {
  return std::all_of(delivered.begin(), delivered.end(), [](bool d) { return d; });
}

EpisodeOutcome run_episode(Env& env, std::uint64_t episode_index, Controller& controller, Rng& rng,
                           const RolloutOptions& opts) {
  std::vector<Observation> obs = env.reset(episode_index);
  controller.begin_episode(opts.fp_epsilon, opts.fp_progress);

  EpisodeRecord* rec = opts.record;
  if (rec != nullptr) {
    *rec = EpisodeRecord{};
    rec->index = episode_index;
    rec->epsilon = opts.fp_epsilon;
    rec->progress = opts.fp_progress;
  }

  EpisodeOutcome out;
  const std::size_t n = env.n_agents();
  while (!env.state().done) {
    Tensor2 q;
    const auto actions = controller.act(obs, opts.epsilon, rng, opts.record_q ? &q : nullptr);
    StepResult step = env.step(actions);

    if (rec != nullptr) {
      Tensor2 feats(static_cast<Eigen::Index>(n),
                    static_cast<Eigen::Index>(Observation::size(env.config().n_subchannels)));
      for (std::size_t i = 0; i < n; ++i) {
        const auto f = obs[i].features();
        for (std::size_t j = 0; j < f.size(); ++j) {
          feats(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[j];
        }
      }
      rec->observations.push_back(std::move(feats));
      rec->actions.push_back(actions);
      rec->rewards.push_back(step.reward);
      rec->dones.push_back(step.done);
      if (opts.record_q) rec->q_values.push_back(std::move(q));
    }

    double total_rate = 0.0;
    for (double r : step.rates) total_rate += r;
    out.slot_total_rate.push_back(total_rate);
    out.total_reward += step.reward;

    if (opts.trace != nullptr) {
      nlohmann::json line = {{"episode", episode_index},
                             {"slot", env.state().slot - 1},
                             {"actions", actions},
                             {"subchannels", step.subchannels},
                             {"rates", step.rates},
                             {"total_rate", total_rate},
                             {"reward", step.reward},
                             {"remaining_bits", env.state().remaining_bits},
                             {"done", step.done}};
      *opts.trace << line.dump() << '\n';
    }
    obs = std::move(step.observations);
  }

  out.slots = env.state().slot;
  out.completion_slot = env.state().completion_slot.value_or(out.slots);
  for (double b : env.state().remaining_bits) out.delivered.push_back(b <= 0);
  return out;
}

}  // namespace platoon
