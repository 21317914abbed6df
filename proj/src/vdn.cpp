// SPDX-License-Identifier: Apache-2.0
#include "platoon/vdn.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace platoon {

ActionChoice select_actions(const QNetParams& params, const Tensor2& inputs, const Tensor2& hidden,
                            double epsilon, Rng& rng) {
  QNetOutput out = qnet_forward(params, inputs, hidden);
  const auto n_actions = static_cast<std::size_t>(out.q.cols());
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, n_actions - 1);

  ActionChoice choice;
  choice.actions.resize(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    const double u = coin(rng);
    choice.actions[static_cast<std::size_t>(r)] = u < epsilon ? pick(rng) : argmax(out.q.row(r));
  }
  choice.hidden = std::move(out.hidden);
  choice.q = std::move(out.q);
  return choice;
}

ActionChoice select_action(std::size_t agent, const Observation& obs,
                           std::optional<std::size_t> prev_action, const Tensor2& hidden,
                           const QNetParams& params, const InputLayout& layout, double epsilon,
                           Rng& rng) {
  Tensor2 x(1, static_cast<Eigen::Index>(layout.input_dim()));
  const auto f = obs.features();
  fill_input(layout, f.data(), prev_action, agent, 0.0, 0.0, x.row(0));
  return select_actions(params, x, hidden, epsilon, rng);
}

double mix(std::span<const double> q_chosen) {
  return std::accumulate(q_chosen.begin(), q_chosen.end(), 0.0);
}

double compute_target(double reward, bool done, std::span<const double> next_max,
                      double discount) {
  if (done) return reward;
  return reward + discount * mix(next_max);
}

namespace {

// Rolls `params` over every episode of the batch at once. Episodes are sorted
// by length (longest first) so the rows still running at slot t are always a
// prefix; each episode contributes one row per entry of `agents`.
struct Unroll {
  std::vector<const EpisodeRecord*> episodes;  // sorted
  std::vector<std::size_t> agents;
  std::vector<std::size_t> active;  // active episodes per slot
  std::size_t max_len = 0;
};

Unroll make_unroll(std::span<const EpisodeRecord* const> batch, std::vector<std::size_t> agents) {
  if (batch.empty()) throw std::invalid_argument("TD loss needs a nonempty batch");
  Unroll u;
  u.episodes.assign(batch.begin(), batch.end());
  std::stable_sort(u.episodes.begin(), u.episodes.end(),
                   [](const EpisodeRecord* a, const EpisodeRecord* b) {
                     return a->length() > b->length();
                   });
  u.agents = std::move(agents);
  u.max_len = u.episodes.front()->length();
  u.active.resize(u.max_len);
  for (std::size_t t = 0; t < u.max_len; ++t) {
    u.active[t] = static_cast<std::size_t>(
        std::count_if(u.episodes.begin(), u.episodes.end(),
                      [t](const EpisodeRecord* e) { return e->length() > t; }));
  }
  return u;
}

Tensor2 step_inputs(const Unroll& u, const InputLayout& layout, std::size_t t) {
  const std::size_t g = u.agents.size();
  Tensor2 x(static_cast<Eigen::Index>(u.active[t] * g),
            static_cast<Eigen::Index>(layout.input_dim()));
  Eigen::RowVectorXd obs;
  for (std::size_t b = 0; b < u.active[t]; ++b) {
    const EpisodeRecord& ep = *u.episodes[b];
    for (std::size_t j = 0; j < g; ++j) {
      const std::size_t agent = u.agents[j];
      obs = ep.observations[t].row(static_cast<Eigen::Index>(agent));
      fill_input(layout, obs.data(), ep.previous_action(t, agent), agent, ep.epsilon, ep.progress,
                 x.row(static_cast<Eigen::Index>(b * g + j)));
    }
  }
  return x;
}

// Q-values per slot for the active prefix; fills caches when non-null.
std::vector<Tensor2> forward_all(const Unroll& u, const QNetParams& params,
                                 const InputLayout& layout, std::vector<QNetCache>* caches) {
  const auto rows = static_cast<Eigen::Index>(u.episodes.size() * u.agents.size());
  Tensor2 h = Tensor2::Zero(rows, static_cast<Eigen::Index>(params.shape.hidden));
  std::vector<Tensor2> qs(u.max_len);
  if (caches != nullptr) caches->assign(u.max_len, QNetCache{});
  for (std::size_t t = 0; t < u.max_len; ++t) {
    const auto n = static_cast<Eigen::Index>(u.active[t] * u.agents.size());
    QNetOutput out = qnet_forward(params, step_inputs(u, layout, t), h.topRows(n),
                                  caches != nullptr ? &(*caches)[t] : nullptr);
    h.topRows(n) = out.hidden;
    qs[t] = std::move(out.q);
  }
  return qs;
}

// y per (slot, sorted episode) from online Q-values `q` and target Q-values
// `q_next` of the same unroll.
std::vector<std::vector<double>> targets(const Unroll& u, const std::vector<Tensor2>& q,
                                         const std::vector<Tensor2>& q_next,
                                         const TdSettings& td) {
  const std::size_t g = u.agents.size();
  std::vector<std::vector<double>> y(u.max_len);
  for (std::size_t t = 0; t < u.max_len; ++t) {
    y[t].resize(u.active[t]);
    for (std::size_t b = 0; b < u.active[t]; ++b) {
      const EpisodeRecord& ep = *u.episodes[b];
      const double r = td.reward_scale * ep.rewards[t];
      const bool done = ep.dones[t];
      double bootstrap = 0.0;
      for (std::size_t j = 0; j < g && !done; ++j) {
        const auto row = static_cast<Eigen::Index>(b * g + j);
        const auto a = static_cast<Eigen::Index>(ep.actions[t][u.agents[j]]);
        switch (td.mode) {
          case TargetMode::kStandard:
            bootstrap += q_next[t + 1].row(row).maxCoeff();
            break;
          case TargetMode::kLiteral:
            bootstrap += q_next[t + 1](row, a);
            break;
          case TargetMode::kDouble:
            // Online network picks the next action, target network scores it.
            bootstrap += q_next[t + 1](row, static_cast<Eigen::Index>(argmax(q[t + 1].row(row))));
            break;
        }
      }
      const double reward = td.mode == TargetMode::kLiteral ? static_cast<double>(g) * r : r;
      y[t][b] = done ? reward : reward + td.discount * bootstrap;
    }
  }
  return y;
}

LossResult td_loss(std::span<const EpisodeRecord* const> batch, std::vector<std::size_t> agents,
                   const QNetParams& online, const QNetParams& target, const InputLayout& layout,
                   const TdSettings& td) {
  const Unroll u = make_unroll(batch, std::move(agents));
  const std::size_t g = u.agents.size();

  std::vector<QNetCache> caches;
  const std::vector<Tensor2> q = forward_all(u, online, layout, &caches);
  const std::vector<Tensor2> q_next = forward_all(u, target, layout, nullptr);
  const std::vector<std::vector<double>> y = targets(u, q, q_next, td);

  std::size_t samples = 0;
  for (const EpisodeRecord* e : u.episodes) samples += e->length();

  // dL/dQ_tot per (episode, slot); every chosen per-agent Q shares it.
  std::vector<std::vector<double>> err(u.max_len);
  double loss = 0.0;
  for (std::size_t t = 0; t < u.max_len; ++t) {
    err[t].resize(u.active[t]);
    for (std::size_t b = 0; b < u.active[t]; ++b) {
      const EpisodeRecord& ep = *u.episodes[b];
      double q_tot = 0.0;
      for (std::size_t j = 0; j < g; ++j) {
        q_tot += q[t](static_cast<Eigen::Index>(b * g + j),
                      static_cast<Eigen::Index>(ep.actions[t][u.agents[j]]));
      }
      const double d = q_tot - y[t][b];
      loss += d * d;
      err[t][b] = 2.0 * d / static_cast<double>(samples);
    }
  }
  loss /= static_cast<double>(samples);

  if (!std::isfinite(loss)) {
    double q_abs = 0.0;
    for (const Tensor2& m : q) q_abs = std::max(q_abs, m.cwiseAbs().maxCoeff());
    std::string ids;
    for (const EpisodeRecord* e : u.episodes) ids += fmt::format(" {}", e->index);
    throw TrainingError(fmt::format("non-finite TD loss (max |Q| = {}, episodes:{})", q_abs, ids));
  }

  LossResult res;
  res.loss = loss;
  res.samples = samples;
  res.grads = QNetParams::zeros(online.shape);
  const auto rows = static_cast<Eigen::Index>(u.episodes.size() * g);
  Tensor2 dh = Tensor2::Zero(rows, static_cast<Eigen::Index>(online.shape.hidden));
  for (std::size_t t = u.max_len; t-- > 0;) {
    const auto n = static_cast<Eigen::Index>(u.active[t] * g);
    Tensor2 grad_q = Tensor2::Zero(n, static_cast<Eigen::Index>(online.shape.n_actions));
    for (std::size_t b = 0; b < u.active[t]; ++b) {
      for (std::size_t j = 0; j < g; ++j) {
        const auto a = static_cast<Eigen::Index>(u.episodes[b]->actions[t][u.agents[j]]);
        grad_q(static_cast<Eigen::Index>(b * g + j), a) = err[t][b];
      }
    }
    Tensor2 dh_next = dh.topRows(n);
    dh.topRows(n) = qnet_backward(online, caches[t], grad_q, dh_next, res.grads);
  }
  return res;
}

std::vector<std::size_t> all_agents(std::span<const EpisodeRecord* const> batch) {
  if (batch.empty()) throw std::invalid_argument("TD loss needs a nonempty batch");
  std::vector<std::size_t> agents(batch.front()->n_agents());
  std::iota(agents.begin(), agents.end(), std::size_t{0});
  return agents;
}

}  // namespace

LossResult vdn_loss(std::span<const EpisodeRecord* const> batch, const QNetParams& online,
                    const QNetParams& target, const InputLayout& layout, const TdSettings& td) {
  return td_loss(batch, all_agents(batch), online, target, layout, td);
}

std::vector<std::vector<double>> vdn_targets(std::span<const EpisodeRecord* const> batch,
                                             const QNetParams& online, const QNetParams& target,
                                             const InputLayout& layout, const TdSettings& td) {
  const Unroll u = make_unroll(batch, all_agents(batch));
  const std::vector<std::vector<double>> y =
      targets(u, forward_all(u, online, layout, nullptr), forward_all(u, target, layout, nullptr), td);
  std::vector<std::vector<double>> out;
  std::vector<bool> used(u.episodes.size(), false);
  for (const EpisodeRecord* e : batch) {
    // Map back to batch order; duplicates take successive sorted slots.
    std::size_t b = 0;
    while (used[b] || u.episodes[b] != e) ++b;
    used[b] = true;
    std::vector<double> col(e->length());
    for (std::size_t t = 0; t < col.size(); ++t) col[t] = y[t][b];
    out.push_back(std::move(col));
  }
  return out;
}

LossResult independent_loss(std::span<const EpisodeRecord* const> batch, std::size_t agent,
                            const QNetParams& online, const QNetParams& target,
                            const InputLayout& layout, const TdSettings& td) {
  return td_loss(batch, {agent}, online, target, layout, td);
}

std::vector<Tensor2> replay_q_values(const EpisodeRecord& episode, const QNetParams& params,
                                     const InputLayout& layout) {
  const EpisodeRecord* one[] = {&episode};
  const Unroll u = make_unroll(one, all_agents(one));
  return forward_all(u, params, layout, nullptr);
}

SharedQController::SharedQController(const QNetParams& params, InputLayout layout)
    : params_(params), layout_(layout) {
  begin_episode(0.0, 0.0);
}

void SharedQController::begin_episode(double, double) {
  hidden_ = Tensor2::Zero(static_cast<Eigen::Index>(layout_.n_agents),
                          static_cast<Eigen::Index>(params_.shape.hidden));
  prev_.assign(layout_.n_agents, std::nullopt);
}

std::vector<std::size_t> SharedQController::act(const std::vector<Observation>& obs,
                                                 double epsilon, Rng& rng, Tensor2* q_out) {
  Tensor2 x(static_cast<Eigen::Index>(obs.size()), static_cast<Eigen::Index>(layout_.input_dim()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto f = obs[i].features();
    fill_input(layout_, f.data(), prev_[i], i, 0.0, 0.0, x.row(static_cast<Eigen::Index>(i)));
  }
  ActionChoice c = select_actions(params_, x, hidden_, epsilon, rng);
  hidden_ = std::move(c.hidden);
  for (std::size_t i = 0; i < obs.size(); ++i) prev_[i] = c.actions[i];
  if (q_out != nullptr) *q_out = std::move(c.q);
  return c.actions;
}

Learner::Learner(const ScenarioConfig& cfg, std::uint64_t seed, std::string algo)
    : cfg_(cfg),
      seed_(seed),
      algo_(std::move(algo)),
      env_(cfg, seed),
      memory_(cfg.learning.replay_capacity),
      schedule_{cfg.learning.epsilon_delta, cfg.learning.epsilon_min},
      explore_rng_(make_rng(seed, Stream::kExploration)),
      replay_rng_(make_rng(seed, Stream::kReplay)) {
  validate(cfg_);
}

TdSettings Learner::td_settings() const {
  return {cfg_.learning.discount, cfg_.learning.target_mode, cfg_.learning.reward_scale};
}

TrainLogRow Learner::run_episode(std::size_t planned) {
  const auto start = std::chrono::steady_clock::now();
  TrainLogRow row;
  row.episode = episode_;
  row.epsilon = schedule_.at(episode_);
  const double progress =
      planned == 0 ? 0.0
                   : std::min(1.0, static_cast<double>(episode_) / static_cast<double>(planned));

  EpisodeRecord rec;
  RolloutOptions opts;
  opts.epsilon = row.epsilon;
  opts.fp_epsilon = row.epsilon;
  opts.fp_progress = progress;
  opts.record = &rec;
  const EpisodeOutcome out = platoon::run_episode(env_, episode_, controller(), explore_rng_, opts);
  last_fp_epsilon_ = row.epsilon;
  last_fp_progress_ = progress;
  memory_.push(std::move(rec));

  row.total_reward = out.total_reward;
  row.completion_slot = out.completion_slot;
  row.delivered = static_cast<std::size_t>(
      std::count(out.delivered.begin(), out.delivered.end(), true));

  if (memory_.size() >= cfg_.learning.batch_episodes) {
    const auto batch = memory_.sample(cfg_.learning.batch_episodes, replay_rng_);
    UpdateStats stats;
    try {
      stats = update(batch);
    } catch (const TrainingError& e) {
      throw TrainingError(fmt::format("{} training failed at episode {} (update {}, epsilon {}): {}",
                                      algo_, episode_, updates_, row.epsilon, e.what()));
    }
    ++updates_;
    row.loss = stats.loss;
    row.grad_norm = stats.grad_norm;
    row.clipped = stats.clipped;
    if (stats.clipped) {
      ++clip_events_;
      spdlog::debug("{}: gradient norm {:.3g} clipped at episode {}", algo_, stats.grad_norm,
                    episode_);
    }
    if (updates_ % cfg_.learning.target_sync_updates == 0) sync_target();
  }
  ++episode_;
  row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                    .count();
  return row;
}

std::vector<TrainLogRow> Learner::train(std::size_t episodes,
                                        const std::function<void(const TrainLogRow&)>& on_episode) {
  const std::size_t planned = episode_ + episodes;
  std::vector<TrainLogRow> log;
  log.reserve(episodes);
  for (std::size_t i = 0; i < episodes; ++i) {
    log.push_back(run_episode(planned));
    if (on_episode) on_episode(log.back());
  }
  return log;
}

std::string Learner::checkpoint_metadata() const {
  nlohmann::json meta = {{"algo", algo_},
                         {"seed", seed_},
                         {"episodes", episode_},
                         {"updates", updates_},
                         {"fp_epsilon", last_fp_epsilon_},
                         {"fp_progress", last_fp_progress_},
                         {"config", serialize_config(cfg_)}};
  return meta.dump();
}

VdnLearner::VdnLearner(const ScenarioConfig& cfg, std::uint64_t seed)
    : Learner(cfg, seed, "vdn"),
      layout_(InputLayout::shared(cfg)),
      params_([&] {
        Rng rng = make_rng(seed, Stream::kInit);
        return QNetParams::init({layout_.input_dim(), cfg.learning.hidden_units, cfg.n_actions()},
                                rng);
      }()),
      target_(params_),
      adam_(AdamState::for_params(params_, cfg.learning.learning_rate)),
      controller_(params_, layout_) {}

void VdnLearner::sync_target() { target_ = params_; }

UpdateStats VdnLearner::update(std::span<const EpisodeRecord* const> batch) {
  LossResult res = vdn_loss(batch, params_, target_, layout_, td_settings());
  UpdateStats s;
  s.loss = res.loss;
  s.grad_norm = clip_global_norm(res.grads, cfg_.learning.grad_clip_norm);
  s.clipped = s.grad_norm > cfg_.learning.grad_clip_norm;
  optimizer_step(params_, res.grads, adam_);
  return s;
}

Checkpoint VdnLearner::checkpoint() const {
  return {algo_, scenario_hash(cfg_), checkpoint_metadata(), {params_}};
}

}  // namespace platoon
