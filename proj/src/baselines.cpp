// SPDX-License-Identifier: Apache-2.0
#include "platoon/baselines.hpp"

#include <algorithm>
#include <random>

namespace platoon {

std::vector<std::size_t> random_policy(Rng& rng, std::size_t n_agents, std::size_t n_actions) {
  std::uniform_int_distribution<std::size_t> pick(0, n_actions - 1);
  std::vector<std::size_t> a(n_agents);
  for (auto& x : a) x = pick(rng);
  return a;
}

std::vector<std::size_t> RandomController::act(const std::vector<Observation>& obs, double,
                                               Rng& rng, Tensor2*) {
  return random_policy(rng, obs.size(), n_actions_);
}

IndependentQController::IndependentQController(const std::vector<QNetParams>& nets,
                                               InputLayout layout)
    : nets_(nets), layout_(layout) {
  begin_episode(1.0, 0.0);
}

void IndependentQController::begin_episode(double epsilon, double progress) {
  fp_epsilon_ = epsilon;
  fp_progress_ = progress;
  hidden_.clear();
  for (const QNetParams& p : nets_) {
    hidden_.push_back(Tensor2::Zero(1, static_cast<Eigen::Index>(p.shape.hidden)));
  }
  prev_.assign(nets_.size(), std::nullopt);
}

std::vector<std::size_t> IndependentQController::act(const std::vector<Observation>& obs,
                                                      double epsilon, Rng& rng, Tensor2* q_out) {
  if (obs.size() != nets_.size()) {
    throw std::invalid_argument("one observation per independent network expected");
  }
  std::vector<std::size_t> actions(obs.size());
  if (q_out != nullptr) {
    q_out->resize(static_cast<Eigen::Index>(obs.size()),
                  static_cast<Eigen::Index>(layout_.n_actions));
  }
  Tensor2 x(1, static_cast<Eigen::Index>(layout_.input_dim()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto f = obs[i].features();
    fill_input(layout_, f.data(), prev_[i], i, fp_epsilon_, fp_progress_, x.row(0));
    ActionChoice c = select_actions(nets_[i], x, hidden_[i], epsilon, rng);
    actions[i] = c.actions[0];
    prev_[i] = actions[i];
    hidden_[i] = std::move(c.hidden);
    if (q_out != nullptr) q_out->row(static_cast<Eigen::Index>(i)) = c.q.row(0);
  }
  return actions;
}

MarlLearner::MarlLearner(const ScenarioConfig& cfg, std::uint64_t seed)
    : Learner(cfg, seed, "marl"),
      layout_(InputLayout::independent(cfg)),
      nets_([&] {
        std::vector<QNetParams> nets;
        for (std::size_t i = 0; i < cfg.n_platoons; ++i) {
          Rng rng = make_rng(seed, Stream::kInit, i);
          nets.push_back(QNetParams::init(
              {layout_.input_dim(), cfg.learning.hidden_units, cfg.n_actions()}, rng));
        }
        return nets;
      }()),
      targets_(nets_),
      controller_(nets_, layout_) {
  for (const QNetParams& p : nets_) {
    adams_.push_back(AdamState::for_params(p, cfg.learning.learning_rate));
  }
}

void MarlLearner::sync_target() { targets_ = nets_; }

UpdateStats MarlLearner::update(std::span<const EpisodeRecord* const> batch) {
  UpdateStats s;
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    LossResult res = independent_loss(batch, i, nets_[i], targets_[i], layout_, td_settings());
    const double norm = clip_global_norm(res.grads, cfg_.learning.grad_clip_norm);
    optimizer_step(nets_[i], res.grads, adams_[i]);
    s.loss += res.loss / static_cast<double>(nets_.size());
    s.grad_norm = std::max(s.grad_norm, norm);
    s.clipped = s.clipped || norm > cfg_.learning.grad_clip_norm;
  }
  return s;
}

Checkpoint MarlLearner::checkpoint() const {
  return {algo_, scenario_hash(cfg_), checkpoint_metadata(), nets_};
}

}  // namespace platoon
