// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <array>

#include "platoon/baselines.hpp"
#include "platoon/harness.hpp"
#include "platoon/vdn.hpp"
#include "test_util.hpp"

using namespace platoon;

namespace {

ScenarioConfig tiny_config() {
  ScenarioConfig c;
  c.n_platoons = 2;
  c.payload_bytes = 1200;
  c.learning.hidden_units = 8;
  c.learning.batch_episodes = 4;
  c.learning.replay_capacity = 50;
  c.learning.target_sync_updates = 5;
  return c;
}

}  // namespace

TEST_CASE("mixer sums agent values") {
  const std::array<double, 3> q{1.5, -0.5, 2.0};
  CHECK(mix(q) == doctest::Approx(3.0));
  const std::array<double, 1> one{-4.25};
  CHECK(mix(one) == -4.25);
}

TEST_CASE("TD target") {
  const std::array<double, 2> next{4.0, 6.0};
  CHECK(compute_target(20.0, true, next, 0.99) == 20.0);
  CHECK(compute_target(2.0, false, next, 0.99) == doctest::Approx(11.9));
  CHECK(compute_target(2.0, false, next, 0.0) == 2.0);
}

TEST_CASE("argmax prefers the lowest id on ties") {
  Eigen::RowVectorXd q(4);
  q << 1.0, 3.0, 3.0, 0.0;
  CHECK(argmax(q) == 1);
  q.setZero();
  CHECK(argmax(q) == 0);
}

TEST_CASE("greedy selection follows the network and exploration is uniform") {
  const ScenarioConfig c = tiny_config();
  const InputLayout layout = InputLayout::shared(c);
  Rng init = make_rng(1, Stream::kInit);
  const QNetParams p = QNetParams::init({layout.input_dim(), 8, 8}, init);
  std::mt19937_64 gen(4);

  Tensor2 x = Tensor2::Random(64, static_cast<Eigen::Index>(layout.input_dim()));
  const Tensor2 h = Tensor2::Zero(64, 8);
  Rng rng = make_rng(2, Stream::kExploration);
  const ActionChoice greedy = select_actions(p, x, h, 0.0, rng);
  const QNetOutput ref = qnet_forward(p, x, h);
  for (Eigen::Index r = 0; r < 64; ++r) {
    CHECK(greedy.actions[static_cast<std::size_t>(r)] == argmax(ref.q.row(r)));
  }
  CHECK(greedy.hidden == ref.hidden);

  // Random branch still advances the recurrent state.
  const ActionChoice explore = select_actions(p, x, h, 1.0, rng);
  CHECK(explore.hidden == ref.hidden);

  std::array<std::size_t, 8> counts{};
  const Tensor2 xs = Tensor2::Zero(1000, static_cast<Eigen::Index>(layout.input_dim()));
  const Tensor2 hs = Tensor2::Zero(1000, 8);
  for (int rep = 0; rep < 1000; ++rep) {
    for (std::size_t a : select_actions(p, xs, hs, 1.0, rng).actions) ++counts[a];
  }
  for (std::size_t n : counts) CHECK(std::abs(static_cast<double>(n) / 1e6 - 0.125) < 0.00125);

  Observation obs{{0.1, 0.2}, 0.5, 0.5};
  const ActionChoice single = select_action(1, obs, std::size_t{3}, Tensor2::Zero(1, 8), p, layout,
                                            0.0, rng);
  Tensor2 xi(1, static_cast<Eigen::Index>(layout.input_dim()));
  const auto f = obs.features();
  fill_input(layout, f.data(), std::size_t{3}, 1, 0.0, 0.0, xi.row(0));
  CHECK(single.actions[0] == argmax(qnet_forward(p, xi, Tensor2::Zero(1, 8)).q.row(0)));
}

TEST_CASE("input layout") {
  const ScenarioConfig c;
  const InputLayout s = InputLayout::shared(c);
  CHECK(s.input_dim() == 4 + 8 + 4);
  const InputLayout m = InputLayout::independent(c);
  CHECK(m.input_dim() == 4 + 2 + 8);
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(s.input_dim()));
  const double obs[4] = {0.1, 0.2, 0.3, 0.4};
  fill_input(s, obs, std::size_t{5}, 2, 0.7, 0.8, row);
  CHECK(row(3) == 0.4);
  CHECK(row(4 + 5) == 1.0);
  CHECK(row.segment(4, 8).sum() == 1.0);
  CHECK(row(12 + 2) == 1.0);
  CHECK(row.tail(4).sum() == 1.0);
  Eigen::RowVectorXd fp(static_cast<Eigen::Index>(m.input_dim()));
  fill_input(m, obs, std::nullopt, 2, 0.7, 0.8, fp);
  CHECK(fp(4) == 0.7);
  CHECK(fp(5) == 0.8);
  CHECK(fp.tail(8).isZero());
}

TEST_CASE("decentralized argmax equals the joint argmax of the sum") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + trial % 4;
    std::vector<Eigen::RowVectorXd> q(n, Eigen::RowVectorXd(8));
    for (auto& row : q) {
      for (Eigen::Index a = 0; a < 8; ++a) row(a) = nd(gen);
    }
    std::vector<std::size_t> joint(n, 0), best(n, 0);
    double best_val = -1e300;
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= 8;
    for (std::size_t code = 0; code < total; ++code) {
      std::size_t rest = code;
      std::vector<double> chosen(n);
      for (std::size_t i = 0; i < n; ++i) {
        joint[i] = rest % 8;
        rest /= 8;
        chosen[i] = q[i](static_cast<Eigen::Index>(joint[i]));
      }
      const double v = mix(chosen);
      if (v > best_val) {
        best_val = v;
        best = joint;
      }
    }
    for (std::size_t i = 0; i < n; ++i) CHECK(best[i] == argmax(q[i]));
  }
}

TEST_CASE("loss is zero at a self-consistent fixed point") {
  std::mt19937_64 gen(5);
  const ScenarioConfig c = tiny_config();
  const InputLayout layout = InputLayout::shared(c);
  Rng init = make_rng(5, Stream::kInit);
  const QNetParams p = QNetParams::init({layout.input_dim(), 8, 8}, init);
  EpisodeRecord ep = testing::random_episode(gen, 2, 6, layout.obs_dim, 8);
  const std::vector<Tensor2> q = replay_q_values(ep, p, layout);
  for (std::size_t t = 0; t < ep.length(); ++t) {
    ep.rewards[t] = q[t](0, static_cast<Eigen::Index>(ep.actions[t][0])) +
                    q[t](1, static_cast<Eigen::Index>(ep.actions[t][1]));
  }
  const EpisodeRecord* batch[] = {&ep};
  const LossResult r = vdn_loss(batch, p, p, layout, {0.0, TargetMode::kStandard, 1.0});
  CHECK(r.loss == doctest::Approx(0.0).epsilon(1e-20));
  CHECK(r.samples == 6);
  CHECK(std::sqrt(r.grads.squared_norm()) < 1e-12);
}

TEST_CASE("duplicating an episode leaves the mean loss unchanged") {
  std::mt19937_64 gen(6);
  const ScenarioConfig c = tiny_config();
  const InputLayout layout = InputLayout::shared(c);
  Rng init = make_rng(6, Stream::kInit);
  const QNetParams p = QNetParams::init({layout.input_dim(), 8, 8}, init);
  const EpisodeRecord ep = testing::random_episode(gen, 2, 5, layout.obs_dim, 8);
  const EpisodeRecord* one[] = {&ep};
  const EpisodeRecord* two[] = {&ep, &ep};
  const TdSettings td{0.99, TargetMode::kStandard, 0.1};
  const LossResult a = vdn_loss(one, p, p, layout, td);
  const LossResult b = vdn_loss(two, p, p, layout, td);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
  CHECK(a.grads.fc_in.w.isApprox(b.grads.fc_in.w, 1e-10));
}

TEST_CASE("terminal slots never bootstrap") {
  std::mt19937_64 gen(7);
  const ScenarioConfig c = tiny_config();
  const InputLayout layout = InputLayout::shared(c);
  Rng init = make_rng(7, Stream::kInit);
  const QNetParams p = QNetParams::init({layout.input_dim(), 8, 8}, init);
  QNetParams wild = p;
  wild.fc_out.b.setConstant(1e6);
  const EpisodeRecord ep = testing::random_episode(gen, 2, 1, layout.obs_dim, 8);
  const EpisodeRecord* batch[] = {&ep};
  for (TargetMode mode : {TargetMode::kStandard, TargetMode::kLiteral}) {
    const TdSettings td{0.99, mode, 1.0};
    CHECK(vdn_loss(batch, p, p, layout, td).loss == vdn_loss(batch, p, wild, layout, td).loss);
  }
  const auto q = replay_q_values(ep, p, layout);
  const double q_tot = q[0](0, static_cast<Eigen::Index>(ep.actions[0][0])) +
                       q[0](1, static_cast<Eigen::Index>(ep.actions[0][1]));
  const double d = q_tot - ep.rewards[0];
  CHECK(vdn_loss(batch, p, wild, layout, {0.99, TargetMode::kStandard, 1.0}).loss ==
        doctest::Approx(d * d));
}

TEST_CASE("unrolled loss gradient matches finite differences") {
  std::mt19937_64 gen(8);
  const ScenarioConfig c = tiny_config();
  const InputLayout layout = InputLayout::shared(c);
  Rng init = make_rng(8, Stream::kInit);
  QNetParams p = QNetParams::init({layout.input_dim(), 8, 8}, init);
  testing::perturb(p, gen, 0.2);
  QNetParams target = p;
  testing::perturb(target, gen, 0.2);
  const EpisodeRecord e1 = testing::random_episode(gen, 2, 3, layout.obs_dim, 8);
  const EpisodeRecord e2 = testing::random_episode(gen, 2, 2, layout.obs_dim, 8);
  const EpisodeRecord* batch[] = {&e2, &e1};
  for (TargetMode mode : {TargetMode::kStandard, TargetMode::kLiteral}) {
    const TdSettings td{0.9, mode, 0.3};
    const double err = testing::max_fd_error(
        p, [&](const QNetParams& w) { return vdn_loss(batch, w, target, layout, td); });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("one agent: shared and independent losses coincide") {
  std::mt19937_64 gen(9);
  ScenarioConfig c = tiny_config();
  c.n_platoons = 1;
  const InputLayout layout = InputLayout::independent(c);
  Rng init = make_rng(9, Stream::kInit);
  const QNetParams p = QNetParams::init({layout.input_dim(), 8, 8}, init);
  QNetParams target = p;
  testing::perturb(target, gen, 0.1);
  const EpisodeRecord ep = testing::random_episode(gen, 1, 4, layout.obs_dim, 8);
  const EpisodeRecord* batch[] = {&ep};
  const TdSettings td{0.99, TargetMode::kStandard, 1.0};
  CHECK(vdn_loss(batch, p, target, layout, td).loss ==
        independent_loss(batch, 0, p, target, layout, td).loss);
}

TEST_CASE("recorded Q-values are reproduced from replay") {
  const ScenarioConfig c = tiny_config();
  VdnLearner learner(c, 3);
  Env env(c, 3);
  EpisodeRecord rec;
  RolloutOptions opts;
  opts.epsilon = 0.3;
  opts.record = &rec;
  opts.record_q = true;
  Rng rng = make_rng(3, Stream::kExploration);
  run_episode(env, 0, learner.controller(), rng, opts);
  REQUIRE(rec.q_values.size() == rec.length());
  const auto q = replay_q_values(rec, learner.params(), learner.layout());
  for (std::size_t t = 0; t < rec.length(); ++t) CHECK(q[t].isApprox(rec.q_values[t], 1e-12));
}

TEST_CASE("learner loop: schedule, updates and target sync") {
  const ScenarioConfig c = tiny_config();
  VdnLearner learner(c, 4);
  const QNetParams initial = learner.params();
  const auto log = learner.train(3);
  CHECK(learner.updates() == 0);
  for (const TrainLogRow& r : log) CHECK(std::isnan(r.loss));
  CHECK(log[0].epsilon == 1.0);
  CHECK(learner.params().fc_in.w == initial.fc_in.w);

  const auto more = learner.train(5);
  CHECK(learner.updates() == 5);
  CHECK(std::isfinite(more.back().loss));
  CHECK_FALSE(learner.params().fc_in.w == initial.fc_in.w);
  // Sync happened at update 5: target equals params bit for bit.
  CHECK(learner.target().fc_in.w == learner.params().fc_in.w);
  CHECK(encode_checkpoint({"vdn", 0, "{}", {learner.target()}}) ==
        encode_checkpoint({"vdn", 0, "{}", {learner.params()}}));

  learner.train(1);
  CHECK_FALSE(learner.target().fc_in.w == learner.params().fc_in.w);
  const QNetParams snapshot = learner.target();
  learner.sync_target();
  learner.sync_target();
  CHECK(learner.target().fc_in.w == learner.params().fc_in.w);
  CHECK_FALSE(snapshot.fc_in.w == learner.target().fc_in.w);

  for (std::size_t i = 0; i < learner.memory().size(); ++i) {
    CHECK(learner.memory().at(i).epsilon == learner.schedule().at(learner.memory().at(i).index));
  }
}

TEST_CASE("training is deterministic per seed") {
  const ScenarioConfig c = tiny_config();
  VdnLearner a(c, 12);
  VdnLearner b(c, 12);
  const auto la = a.train(8);
  const auto lb = b.train(8);
  for (std::size_t i = 0; i < la.size(); ++i) {
    CHECK(la[i].total_reward == lb[i].total_reward);
    CHECK((la[i].loss == lb[i].loss || (std::isnan(la[i].loss) && std::isnan(lb[i].loss))));
  }
  CHECK(a.params().fc_out.w == b.params().fc_out.w);
}

TEST_CASE("a diverged network aborts training with diagnostics") {
  ScenarioConfig c = tiny_config();
  c.learning.batch_episodes = 1;
  VdnLearner learner(c, 5);
  auto& params = const_cast<QNetParams&>(learner.params());
  params.fc_out.b(0, 0) = std::numeric_limits<double>::infinity();
  try {
    learner.train(1);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("episode 0") != std::string::npos);
    CHECK(msg.find("non-finite") != std::string::npos);
  }
}

TEST_CASE("smoke scenario: training improves the greedy policy") {
  ScenarioConfig c;
  c.n_platoons = 2;
  c.payload_bytes = 1200;
  VdnLearner learner(c, 1);
  const EvalOptions opts{200, 1};
  const EvalResult before = evaluate(c, policy_from_checkpoint(learner.checkpoint(), c), 4.0, opts);
  learner.train(300);
  const EvalResult after = evaluate(c, policy_from_checkpoint(learner.checkpoint(), c), 4.0, opts);
  MESSAGE("delivery " << before.row.delivery_probability << " -> "
                      << after.row.delivery_probability);
  CHECK(after.row.delivery_probability > before.row.delivery_probability);
  CHECK(after.row.mean_reward > before.row.mean_reward);
}
