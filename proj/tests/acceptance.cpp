// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Training artifacts land under --out-dir.

#include <CLI11.hpp>
#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "platoon/channel_model.hpp"
#include "platoon/harness.hpp"
#include "test_util.hpp"

using namespace platoon;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::vector<double> rewards_of(const std::vector<TrainLogRow>& log) {
  std::vector<double> r;
  r.reserve(log.size());
  for (const auto& row : log) r.push_back(row.total_reward);
  return r;
}

double first_window(const std::vector<TrainLogRow>& log) {
  return window_mean(rewards_of(log), 0, 200);
}

double final_window(const std::vector<TrainLogRow>& log) {
  const std::size_t n = log.size();
  return window_mean(rewards_of(log), n > 200 ? n - 200 : 0, 200);
}

class Acceptance {
 public:
  Acceptance(ScenarioConfig desk, fs::path out) : desk_(std::move(desk)), out_(std::move(out)) {
    fs::create_directories(out_);
  }

  Verdict gradients();
  Verdict sinr_oracle();
  Verdict mixer_argmax();
  Verdict convergence();
  Verdict ordering();
  Verdict silence();
  Verdict tau_sensitivity();
  Verdict determinism();
  Verdict replay_schedule();

 private:
  struct Trained {
    TrainRunResult run;
    fs::path dir;
  };
  struct Sweep {
    std::vector<MetricsRow> rows;
    fs::path dir;
  };

  const Trained& trained(const std::string& algo, std::uint64_t seed, double tau);
  const Sweep& desk_sweep();
  double desk_multiple() const {
    return static_cast<double>(desk_.payload_bytes) / static_cast<double>(kPayloadUnitBytes);
  }
  std::uint64_t seed() const { return desk_.rng_seed; }
  std::vector<double> sweep_multiples() const {
    std::vector<double> m;
    for (int i = 1; i <= 10; ++i) m.push_back(i);
    return m;
  }
  Policy policy_of(const Trained& t) const { return policy_from_checkpoint(t.run.checkpoint, desk_); }

  ScenarioConfig desk_;
  fs::path out_;
  std::map<std::tuple<std::string, std::uint64_t, double>, Trained> runs_;
  std::optional<Sweep> sweep_;
};

const Acceptance::Trained& Acceptance::trained(const std::string& algo, std::uint64_t seed,
                                               double tau) {
  const auto key = std::make_tuple(algo, seed, tau);
  if (auto it = runs_.find(key); it != runs_.end()) return it->second;
  ScenarioConfig cfg = desk_;
  cfg.learning.tau = tau;
  const fs::path dir = out_ / fmt::format("train_{}_seed{}_tau{}", algo, seed, tau);
  spdlog::info("training {} (seed {}, tau {}) into {}", algo, seed, tau, dir.string());
  Trained t{train_run(cfg, algo, seed, cfg.learning.train_episodes, dir), dir};
  return runs_.emplace(key, std::move(t)).first->second;
}

const Acceptance::Sweep& Acceptance::desk_sweep() {
  if (sweep_) return *sweep_;
  const double tau = desk_.learning.tau;
  const std::vector<Policy> policies{policy_of(trained("vdn", seed(), tau)),
                                     policy_of(trained("marl", seed(), tau)),
                                     random_policy_spec()};
  const fs::path dir = out_ / "eval_desk";
  sweep_ = Sweep{eval_run(desk_, policies, sweep_multiples(), {500, seed()}, dir), dir};
  return *sweep_;
}

// 1. Analytic gradients of the unrolled loss against central differences.
Verdict Acceptance::gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(20240601);
  const TargetMode modes[] = {TargetMode::kStandard, TargetMode::kLiteral, TargetMode::kDouble};
  double worst = 0.0;
  std::size_t instances = 0;
  for (std::size_t trial = 0; trial < 24; ++trial) {
    ScenarioConfig c;
    c.n_platoons = 1 + gen() % 4;
    c.n_subchannels = 1 + gen() % 2;
    c.power_levels_dbm = {23.0, -114.0};
    const InputLayout layout = InputLayout::shared(c);
    const std::size_t hidden = 2 + gen() % 7;
    Rng init = make_rng(trial, Stream::kInit);
    QNetParams online = QNetParams::init({layout.input_dim(), hidden, c.n_actions()}, init);
    testing::perturb(online, gen, 0.3);
    QNetParams target = online;
    testing::perturb(target, gen, 0.3);
    std::vector<EpisodeRecord> eps;
    const std::size_t batch = 1 + gen() % 3;
    for (std::size_t b = 0; b < batch; ++b) {
      eps.push_back(testing::random_episode(gen, c.n_platoons, 1 + gen() % 5, layout.obs_dim,
                                            c.n_actions(), b));
    }
    std::vector<const EpisodeRecord*> ptrs;
    for (const auto& e : eps) ptrs.push_back(&e);
    const TdSettings td{0.99, modes[trial % 3], 0.5};
    // Gradients below 1e-6 are under the resolution of the differences.
    worst = std::max(worst, testing::max_fd_error(
                                online,
                                [&](const QNetParams& w) {
                                  return vdn_loss(ptrs, w, target, layout, td);
                                },
                                1e-4, 1e-6));
    ++instances;
  }
  const double secs = seconds_since(t0);
  return {instances >= 20 && worst < 1e-4 && secs < 60.0,
          fmt::format("{} instances, max relative error {:.2e}, {:.1f} s", instances, worst, secs)};
}

// 2. sinr / effective_rate against a term-by-term re-summation.
Verdict Acceptance::sinr_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  std::size_t configs = 0;
  for (; configs < 10000; ++configs) {
    const std::size_t n = 1 + gen() % 4;
    const std::size_t k = 1 + gen() % 3;
    const std::size_t m = 1 + gen() % 4;
    LinkMatrix g(n, m, 0.0);
    for (double& v : g.values()) v = std::pow(10.0, -5.0 - 8.0 * u(gen));
    std::vector<Transmission> tx(n);
    for (auto& t : tx) {
      t.subchannel = static_cast<int>(gen() % (k + 1)) - 1;
      t.power_w = std::pow(10.0, (-144.0 + 167.0 * u(gen)) / 10.0) * 1e-3;
    }
    const double noise = std::pow(10.0, -11.24473) * 1e-3;
    for (std::size_t rx = 0; rx < n; ++rx) {
      double min_rate = std::numeric_limits<double>::infinity();
      for (std::size_t f = 0; f < m; ++f) {
        for (std::size_t ch = 0; ch < k; ++ch) {
          double signal = 0.0;
          double others = noise;
          for (std::size_t i = 0; i < n; ++i) {
            if (tx[i].subchannel != static_cast<int>(ch)) continue;
            if (i == rx) {
              signal = tx[i].power_w * g(i, rx, f);
            } else {
              others += tx[i].power_w * g(i, rx, f);
            }
          }
          const double ref = signal / others;
          const double got = sinr(g, tx, rx, f, ch, noise);
          worst = std::max(worst, std::abs(got - ref) / std::max(std::abs(ref), 1e-300));
          if (tx[rx].subchannel == static_cast<int>(ch)) {
            min_rate = std::min(min_rate, std::log(1.0 + ref) / std::numbers::ln2);
          }
        }
      }
      const double ref_rate = tx[rx].subchannel < 0 ? 0.0 : min_rate;
      const double got_rate = groupcast_rate(g, tx, rx, noise);
      worst = std::max(worst, std::abs(got_rate - ref_rate) / std::max(std::abs(ref_rate), 1e-300));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 10.0,
          fmt::format("{} configurations, max relative error {:.2e}, {:.2f} s", configs, worst,
                      secs)};
}

// 3. Joint argmax of the mixed value equals the per-agent argmaxes.
Verdict Acceptance::mixer_argmax() {
  const auto t0 = Clock::now();
  constexpr std::size_t kN = 4;
  constexpr std::size_t kA = 8;
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  std::size_t mismatches = 0;
  std::size_t tables = 0;
  for (; tables < 1000; ++tables) {
    std::array<Eigen::RowVectorXd, kN> q;
    for (auto& row : q) {
      row.resize(kA);
      for (Eigen::Index a = 0; a < static_cast<Eigen::Index>(kA); ++a) row(a) = nd(gen);
    }
    std::array<std::size_t, kN> best{};
    double best_val = -std::numeric_limits<double>::infinity();
    std::array<double, kN> chosen{};
    for (std::size_t code = 0; code < kA * kA * kA * kA; ++code) {
      std::size_t rest = code;
      std::array<std::size_t, kN> joint{};
      for (std::size_t i = 0; i < kN; ++i) {
        joint[i] = rest % kA;
        rest /= kA;
        chosen[i] = q[i](static_cast<Eigen::Index>(joint[i]));
      }
      const double v = mix(chosen);
      if (v > best_val) {
        best_val = v;
        best = joint;
      }
    }
    for (std::size_t i = 0; i < kN; ++i) {
      if (best[i] != argmax(q[i])) {
        ++mismatches;
        break;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 1.0,
          fmt::format("{} tables, {} mismatches, {:.3f} s", tables, mismatches, secs)};
}

// 4. Desk-scale VDN reward curve rises and beats random by 20%.
Verdict Acceptance::convergence() {
  const auto t0 = Clock::now();
  const auto& log = trained("vdn", seed(), desk_.learning.tau).run.log;
  const double secs = seconds_since(t0);
  const double first = first_window(log);
  const double last = final_window(log);
  const EvalResult random = evaluate(desk_, random_policy_spec(), desk_multiple(), {200, seed()});
  const double rnd = random.row.mean_reward;
  const bool pass = last > first && last >= 1.2 * rnd && secs < 1800.0;
  return {pass, fmt::format("first window {:.2f}, final window {:.2f}, random {:.2f} "
                            "(final/random {:.3f}), {} episodes, {:.0f} s",
                            first, last, rnd, last / rnd, log.size(), secs)};
}

// 5. Delivery probability ordering VDN >= MARL >= Random.
Verdict Acceptance::ordering() {
  const Sweep& sweep = desk_sweep();
  const double desk_m = desk_multiple();
  auto lookup = [&](const std::vector<MetricsRow>& rows, const std::string& algo, double m) {
    for (const auto& r : rows) {
      if (r.algo == algo && r.payload_multiple == m) return r.delivery_probability;
    }
    throw std::logic_error("missing metrics row " + algo);
  };

  struct Triple {
    double vdn, marl, rnd;
    bool holds() const { return vdn >= marl && marl >= rnd; }
    bool tied() const { return std::abs(vdn - marl) <= 0.02 || std::abs(marl - rnd) <= 0.02; }
  };
  std::vector<Triple> per_seed{{lookup(sweep.rows, "vdn", desk_m),
                                lookup(sweep.rows, "marl", desk_m),
                                lookup(sweep.rows, "random", desk_m)}};
  if (per_seed[0].tied()) {
    const double tau = desk_.learning.tau;
    for (std::uint64_t s : {seed() + 1, seed() + 2}) {
      const std::vector<Policy> policies{policy_of(trained("vdn", s, tau)),
                                         policy_of(trained("marl", s, tau)),
                                         random_policy_spec()};
      const auto rows = eval_run(desk_, policies, {desk_m}, {500, s},
                                 out_ / fmt::format("eval_tie_seed{}", s));
      per_seed.push_back({lookup(rows, "vdn", desk_m), lookup(rows, "marl", desk_m),
                          lookup(rows, "random", desk_m)});
    }
  }
  std::size_t votes = 0;
  std::string seeds;
  for (const auto& t : per_seed) {
    votes += t.holds() ? 1 : 0;
    seeds += fmt::format(" [vdn {:.3f} marl {:.3f} random {:.3f}]", t.vdn, t.marl, t.rnd);
  }
  const bool order_ok = 2 * votes > per_seed.size();

  std::optional<double> largest;
  for (double m : sweep_multiples()) {
    if (lookup(sweep.rows, "vdn", m) >= 0.5) largest = m;
  }
  bool gap_ok = false;
  std::string gap;
  if (largest) {
    const double d = lookup(sweep.rows, "vdn", *largest) - lookup(sweep.rows, "random", *largest);
    gap_ok = d >= 0.1;
    gap = fmt::format("at {}x vdn - random = {:.3f}", *largest, d);
  } else {
    gap = "vdn never reaches 0.5";
  }
  return {order_ok && gap_ok,
          fmt::format("ordering at {}x held in {}/{} seeds:{}; {}", desk_m, votes, per_seed.size(),
                      seeds, gap)};
}

// 6. After the last payload completes, every platoon stays silent.
Verdict Acceptance::silence() {
  const Policy vdn = policy_of(trained("vdn", seed(), desk_.learning.tau));
  std::size_t completed = 0;
  std::size_t violations = 0;
  std::size_t checked_slots = 0;
  for (double m : sweep_multiples()) {
    const EvalResult r = evaluate(desk_, vdn, m, {500, seed()});
    for (const auto& o : r.outcomes) {
      if (!o.all_delivered() || o.completion_slot >= o.slot_total_rate.size()) continue;
      ++completed;
      for (std::size_t t = o.completion_slot; t < o.slot_total_rate.size(); ++t) {
        ++checked_slots;
        if (o.slot_total_rate[t] != 0.0) ++violations;
      }
    }
  }
  return {violations == 0,
          fmt::format("{} early-completing episodes, {} post-completion slots, {} nonzero", completed,
                      checked_slots, violations)};
}

// 7. Reward-coefficient sweep.
Verdict Acceptance::tau_sensitivity() {
  std::map<double, double> final_mean;
  std::string detail;
  bool finite = true;
  for (double tau : {0.3, 0.5, 0.8}) {
    const auto& log = trained("vdn", seed(), tau).run.log;
    for (const auto& row : log) finite = finite && std::isfinite(row.total_reward);
    final_mean[tau] = final_window(log);
    detail += fmt::format(" tau {}: first {:.2f} final {:.2f};", tau, first_window(log),
                          final_mean[tau]);
  }
  return {finite && final_mean[0.5] >= final_mean[0.3], "all runs finite;" + detail};
}

// 8. Byte-identical reruns and checkpoint round-trip.
Verdict Acceptance::determinism() {
  const Trained& a = trained("vdn", seed(), desk_.learning.tau);
  ScenarioConfig cfg = desk_;
  const fs::path rerun_dir = out_ / "train_vdn_rerun";
  const TrainRunResult b = train_run(cfg, "vdn", seed(), cfg.learning.train_episodes, rerun_dir);
  const bool curve_same =
      slurp(a.dir / "reward_curve.csv") == slurp(rerun_dir / "reward_curve.csv");
  const bool ckpt_same = slurp(a.dir / "checkpoint.bin") == slurp(rerun_dir / "checkpoint.bin");

  const Checkpoint loaded = load_checkpoint(a.dir / "checkpoint.bin");
  const bool roundtrip = encode_checkpoint(loaded) == encode_checkpoint(a.run.checkpoint);

  const Sweep& sweep = desk_sweep();
  const Checkpoint marl = load_checkpoint(trained("marl", seed(), desk_.learning.tau).dir /
                                          "checkpoint.bin");
  const std::vector<Policy> reloaded{policy_from_checkpoint(loaded, desk_),
                                     policy_from_checkpoint(marl, desk_), random_policy_spec()};
  const fs::path eval_dir = out_ / "eval_desk_reloaded";
  eval_run(desk_, reloaded, sweep_multiples(), {500, seed()}, eval_dir);
  const bool metrics_same = slurp(sweep.dir / "metrics.csv") == slurp(eval_dir / "metrics.csv");
  const bool trace_same =
      slurp(sweep.dir / "trace_vdn_x2.jsonl") == slurp(eval_dir / "trace_vdn_x2.jsonl");

  return {curve_same && ckpt_same && roundtrip && metrics_same && trace_same,
          fmt::format("reward_curve {}, checkpoint {}, round-trip {}, metrics.csv {}, trace {}",
                      curve_same ? "identical" : "differs", ckpt_same ? "identical" : "differs",
                      roundtrip ? "exact" : "differs", metrics_same ? "identical" : "differs",
                      trace_same ? "identical" : "differs")};
}

// 9. Replay keeps slot order, ε follows its schedule, terminals never bootstrap.
Verdict Acceptance::replay_schedule() {
  const auto& log = trained("vdn", seed(), desk_.learning.tau).run.log;
  const EpsilonSchedule sched{desk_.learning.epsilon_delta, desk_.learning.epsilon_min};
  std::size_t eps_bad = 0;
  for (const auto& row : log) {
    const double expected =
        std::max(1.0 - desk_.learning.epsilon_delta * static_cast<double>(row.episode),
                 desk_.learning.epsilon_min);
    if (row.epsilon != sched.at(row.episode) || std::abs(row.epsilon - expected) > 1e-12) ++eps_bad;
  }

  VdnLearner learner(desk_, seed());
  learner.train(400);
  Rng rng = make_rng(seed(), Stream::kReplay, 99);
  const auto batch = learner.memory().sample(desk_.learning.batch_episodes, rng);
  const auto col = static_cast<Eigen::Index>(desk_.n_subchannels + 1);  // remaining slots
  std::size_t order_bad = 0;
  std::set<std::uint64_t> indices;
  for (const EpisodeRecord* ep : batch) {
    indices.insert(ep->index);
    try {
      ep->check();
    } catch (const std::logic_error&) {
      ++order_bad;
      continue;
    }
    for (std::size_t t = 1; t < ep->length(); ++t) {
      for (Eigen::Index i = 0; i < ep->observations[t].rows(); ++i) {
        if (!(ep->observations[t](i, col) < ep->observations[t - 1](i, col))) ++order_bad;
      }
    }
  }

  QNetParams wild = learner.target();
  wild.fc_out.b.setConstant(1e6);
  TdSettings td{desk_.learning.discount, desk_.learning.target_mode, desk_.learning.reward_scale};
  std::size_t boot_bad = 0;
  for (TargetMode mode : {TargetMode::kStandard, TargetMode::kLiteral, TargetMode::kDouble}) {
    td.mode = mode;
    const auto y = vdn_targets(batch, learner.params(), wild, learner.layout(), td);
    const double n = mode == TargetMode::kLiteral ? static_cast<double>(desk_.n_platoons) : 1.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const EpisodeRecord& ep = *batch[b];
      for (std::size_t t = 0; t < ep.length(); ++t) {
        if (!ep.dones[t]) continue;
        if (y[b][t] != n * td.reward_scale * ep.rewards[t]) ++boot_bad;
      }
    }
  }
  return {eps_bad == 0 && order_bad == 0 && boot_bad == 0 && indices.size() == batch.size(),
          fmt::format("{} logged episodes ({} off schedule), {} sampled episodes ({} order "
                      "violations), {} bootstrapped terminals",
                      log.size(), eps_bad, batch.size(), order_bad, boot_bad)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  fs::path out_dir = "acceptance_runs";
  std::string config = std::string(PLATOON_SOURCE_DIR) + "/configs/desk.cfg";
  std::vector<int> only;
  app.add_option("--out-dir", out_dir, "Directory for training and evaluation artifacts");
  app.add_option("--config", config, "Desk scenario config")->check(CLI::ExistingFile);
  app.add_option("--criteria", only, "Run only these criteria (1-9)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  Acceptance acc(load_config(config), out_dir);
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient correctness", [&] { return acc.gradients(); }},
      {"SINR/rate oracle", [&] { return acc.sinr_oracle(); }},
      {"mixer argmax consistency", [&] { return acc.mixer_argmax(); }},
      {"convergence", [&] { return acc.convergence(); }},
      {"delivery ordering", [&] { return acc.ordering(); }},
      {"post-completion silence", [&] { return acc.silence(); }},
      {"tau sensitivity", [&] { return acc.tau_sensitivity(); }},
      {"determinism and persistence", [&] { return acc.determinism(); }},
      {"replay and schedule properties", [&] { return acc.replay_schedule(); }},
  };

  bool all = true;
  nlohmann::json summary = nlohmann::json::array();
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    all = all && v.pass;
    fmt::print("criterion {} {}: {} ({})\n", id, criteria[i].first, v.pass ? "PASS" : "FAIL",
               v.detail);
    std::fflush(stdout);
    summary.push_back({{"criterion", id},
                       {"name", criteria[i].first},
                       {"pass", v.pass},
                       {"detail", v.detail}});
  }
  std::ofstream(out_dir / "acceptance.json") << summary.dump(2) << "\n";
  return all ? 0 : 1;
}
