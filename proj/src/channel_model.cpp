// SPDX-License-Identifier: Apache-2.0
#include "platoon/channel_model.hpp"


#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace platoon {

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

Topology build_topology(const ScenarioConfig& cfg, Rng& rng) {
  if (cfg.n_platoons == 0) throw ConfigError("n_platoons must be at least 1", "n_platoons");
  if (cfg.platoon_len < 2) throw ConfigError("platoon_len must be at least 2", "platoon_len");
  if (!(cfg.head_to_tail_m > 0)) {
    throw ConfigError("head_to_tail_m must be positive", "head_to_tail_m");
  }
  if (!(cfg.head_spacing_m > 0)) {
    throw ConfigError("head_spacing_m must be positive", "head_spacing_m");
  }

  const std::size_t m = cfg.followers();
  const double gap = cfg.head_to_tail_m / static_cast<double>(m);
  std::uniform_real_distribution<double> jitter(-cfg.head_jitter_m, cfg.head_jitter_m);

  Topology topo;
  topo.positions.resize(cfg.n_platoons);
  for (std::size_t p = 0; p < cfg.n_platoons; ++p) {
    const std::size_t lane = p % 2;
    const std::size_t slot = p / 2;
    double head_x = static_cast<double>(slot) * cfg.head_spacing_m;
    if (lane == 1 && cfg.lane_spacing_scheme == LanePlacement::kStaggered) {
      head_x += 0.5 * cfg.head_spacing_m;
    }
    if (cfg.head_jitter_m > 0) head_x += jitter(rng);
    const double y = static_cast<double>(lane) * cfg.lane_width_m;
    auto& vehicles = topo.positions[p];
    vehicles.reserve(m + 1);
    for (std::size_t v = 0; v <= m; ++v) {
      // The tail sits exactly head_to_tail_m behind the head.
      const double x = v == m ? head_x - cfg.head_to_tail_m : head_x - gap * static_cast<double>(v);
      vehicles.push_back({x, y});
    }
  }
  return topo;
}

nlohmann::json topology_to_json(const Topology& topo) {
  nlohmann::json platoons = nlohmann::json::array();
  for (std::size_t p = 0; p < topo.n_platoons(); ++p) {
    nlohmann::json vehicles = nlohmann::json::array();
    for (const auto& v : topo.positions[p]) vehicles.push_back({{"x", v.x}, {"y", v.y}});
    platoons.push_back({{"platoon", p}, {"vehicles", vehicles}});
  }
  return {{"platoons", platoons}};
}

double pathloss_db(double d_m, double carrier_hz, PathlossModel model) {
  if (!(d_m > 0)) throw std::domain_error("pathloss_db: distance must be positive");
  switch (model) {
    case PathlossModel::kFreeSpace:
      return 20.0 * std::log10(4.0 * std::numbers::pi * d_m * carrier_hz / kSpeedOfLight);
    case PathlossModel::kWinnerB1Los:
      // LOS branch below the breakpoint distance, carrier in GHz.
      return 22.7 * std::log10(d_m) + 41.0 + 20.0 * std::log10(carrier_hz / 5e9);
  }
  throw std::domain_error("pathloss_db: unknown model");
}

double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double watt_to_dbm(double watt) { return 10.0 * std::log10(watt) + 30.0; }

LinkMatrix update_large_scale(const Topology& topo, const ScenarioConfig& cfg, Rng& rng) {
  const std::size_t n = topo.n_platoons();
  const std::size_t m = topo.followers();
  LinkMatrix alpha(n, m);
  std::normal_distribution<double> shadow(0.0, 1.0);
  for (std::size_t tx = 0; tx < n; ++tx) {
    for (std::size_t rx = 0; rx < n; ++rx) {
      for (std::size_t f = 0; f < m; ++f) {
        const double d = distance(topo.leader(tx), topo.positions[rx][f + 1]);
        const double sh = cfg.shadow_std_db * shadow(rng);
        alpha(tx, rx, f) =
            cfg.antenna_gain_db - pathloss_db(d, cfg.carrier_hz, cfg.pathloss_model) - sh;
      }
    }
  }
  return alpha;
}

void update_small_scale(LinkMatrix& h, Rng& rng) {
  std::exponential_distribution<double> rayleigh_power(1.0);
  for (double& v : h.values()) v = rayleigh_power(rng);
}

double channel_gain(const LinkState& link) {
  return std::pow(10.0, link.alpha_db / 10.0) * link.h;
}

LinkMatrix channel_gains(const LinkMatrix& alpha_db, const LinkMatrix& h) {
  LinkMatrix g(alpha_db.n_platoons(), alpha_db.followers());
  auto a = alpha_db.values();
  auto hv = h.values();
  auto out = g.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = channel_gain({a[i], hv[i]});
  return g;
}

double interference_plus_noise_w(const LinkMatrix& gains, std::span<const Transmission> tx,
                                 std::size_t rx, std::size_t follower, std::size_t k,
                                 double noise_w) {
  double total = noise_w;
  for (std::size_t other = 0; other < tx.size(); ++other) {
    if (other == rx || !tx[other].on(k)) continue;
    total += tx[other].power_w * gains(other, rx, follower);
  }
  return total;
}

double sinr(const LinkMatrix& gains, std::span<const Transmission> tx, std::size_t rx,
            std::size_t follower, std::size_t k, double noise_w) {
  if (!tx[rx].on(k)) return 0.0;
  const double signal = tx[rx].power_w * gains(rx, rx, follower);
  return signal / interference_plus_noise_w(gains, tx, rx, follower, k, noise_w);
}

double effective_rate(std::span<const double> member_sinrs) {
  double worst = std::numeric_limits<double>::infinity();
  for (double s : member_sinrs) worst = std::min(worst, std::log2(1.0 + s));
  return member_sinrs.empty() ? 0.0 : worst;
}

double groupcast_rate(const LinkMatrix& gains, std::span<const Transmission> tx, std::size_t p,
                      double noise_w, RateRule rule) {
  if (tx[p].subchannel < 0) return 0.0;
  const auto k = static_cast<std::size_t>(tx[p].subchannel);
  const std::size_t m = gains.followers();
  if (rule == RateRule::kTailOnly) {
    const double s = sinr(gains, tx, p, m - 1, k, noise_w);
    return effective_rate(std::span<const double>(&s, 1));
  }
  std::vector<double> sinrs(m);
  for (std::size_t f = 0; f < m; ++f) sinrs[f] = sinr(gains, tx, p, f, k, noise_w);
  return effective_rate(sinrs);
}

}  // namespace platoon
