// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "platoon/config.hpp"
#include "platoon/rng.hpp"

namespace platoon {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

double distance(Vec2 a, Vec2 b);

/// Vehicle placement. positions[p][0] is the leader of platoon p and
/// positions[p].back() its tail; followers trail the leader along -x.
struct Topology {
  std::vector<std::vector<Vec2>> positions;

  std::size_t n_platoons() const { return positions.size(); }
  std::size_t followers() const { return positions.empty() ? 0 : positions[0].size() - 1; }
  Vec2 leader(std::size_t p) const { return positions[p].front(); }
  Vec2 tail(std::size_t p) const { return positions[p].back(); }
};

/// Leaders evenly spaced along two adjacent lanes (platoon p in lane p % 2),
/// each head shifted by a uniform jitter drawn from `rng`.
Topology build_topology(const ScenarioConfig& cfg, Rng& rng);

nlohmann::json topology_to_json(const Topology& topo);

/// One value per (transmitting leader, receiving platoon, follower) triple.
/// Follower index f in [0, M) refers to vehicle f + 1 of the receiving
/// platoon; the tail is f = M - 1.
class LinkMatrix {
 public:
  LinkMatrix() = default;
  LinkMatrix(std::size_t n_platoons, std::size_t followers, double fill = 0.0)
      : n_(n_platoons), m_(followers), v_(n_platoons * n_platoons * followers, fill) {}

  double& operator()(std::size_t tx, std::size_t rx, std::size_t f) {
    return v_[(tx * n_ + rx) * m_ + f];
  }
  double operator()(std::size_t tx, std::size_t rx, std::size_t f) const {
    return v_[(tx * n_ + rx) * m_ + f];
  }
  std::size_t n_platoons() const { return n_; }
  std::size_t followers() const { return m_; }
  std::span<double> values() { return v_; }
  std::span<const double> values() const { return v_; }
  bool operator==(const LinkMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::vector<double> v_;
};

/// Fading state of one link: large-scale coefficient in dB and the
/// small-scale power coefficient h (unit-mean exponential).
struct LinkState {
  double alpha_db = 0.0;
  double h = 1.0;
};

/// Pathloss in dB. Throws std::domain_error for d <= 0.
double pathloss_db(double d_m, double carrier_hz,
                   PathlossModel model = PathlossModel::kFreeSpace);

inline constexpr double kSpeedOfLight = 299792458.0;

double dbm_to_watt(double dbm);
double watt_to_dbm(double watt);

/// alpha_dB = G - PL(d) - SH with SH ~ N(0, shadow_std_db^2) per link.
LinkMatrix update_large_scale(const Topology& topo, const ScenarioConfig& cfg, Rng& rng);

/// Overwrites every entry with a fresh unit-mean exponential draw.
void update_small_scale(LinkMatrix& h, Rng& rng);

double channel_gain(const LinkState& link);
LinkMatrix channel_gains(const LinkMatrix& alpha_db, const LinkMatrix& h);

/// What a leader does in one slot. A negative subchannel means silent.
struct Transmission {
  int subchannel = -1;
  double power_w = 0.0;

  bool on(std::size_t k) const { return subchannel == static_cast<int>(k); }
};

/// Noise plus the power received at (rx, follower) on subchannel k from every
/// leader other than rx's own.
double interference_plus_noise_w(const LinkMatrix& gains, std::span<const Transmission> tx,
                                 std::size_t rx, std::size_t follower, std::size_t k,
                                 double noise_w);

/// SINR of platoon rx's follower on subchannel k. Zero when rx's own leader
/// is not transmitting on k.
double sinr(const LinkMatrix& gains, std::span<const Transmission> tx, std::size_t rx,
            std::size_t follower, std::size_t k, double noise_w);

/// Groupcast rate in bits/s/Hz from member SINRs: min_j log2(1 + sinr_j).
double effective_rate(std::span<const double> member_sinrs);

enum class RateRule { kWorstFollower, kTailOnly };

/// Effective groupcast rate of platoon p on its chosen subchannel, or 0 when
/// it is silent.
double groupcast_rate(const LinkMatrix& gains, std::span<const Transmission> tx, std::size_t p,
                      double noise_w, RateRule rule = RateRule::kWorstFollower);

}  // namespace platoon
