// SPDX-License-Identifier: Apache-2.0
#include "platoon/config.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace platoon {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    throw ConfigError(fmt::format("key '{}': '{}' is not a finite number", key, v), key);
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(fmt::format("key '{}': '{}' is not a nonnegative integer", key, v),
                      key);
  }
  return out;
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  return out;
}

struct Field {
  std::string key;
  std::function<void(ScenarioConfig&, const std::string&)> read;
  std::function<std::string(const ScenarioConfig&)> write;
  std::string comment;
  bool scenario;  // participates in scenario_hash
};

template <typename T>
Field size_field(std::string key, T ScenarioConfig::*member, std::string comment,
                 bool scenario = true) {
  return {key,
          [member, key](ScenarioConfig& c, const std::string& v) {
            c.*member = static_cast<T>(parse_uint(key, v));
          },
          [member](const ScenarioConfig& c) { return fmt::format("{}", c.*member); },
          std::move(comment), scenario};
}

Field real_field(std::string key, double ScenarioConfig::*member, std::string comment,
                 bool scenario = true) {
  return {key,
          [member, key](ScenarioConfig& c, const std::string& v) {
            c.*member = parse_double(key, v);
          },
          [member](const ScenarioConfig& c) { return fmt::format("{}", c.*member); },
          std::move(comment), scenario};
}

template <typename T>
Field learn_size(std::string key, T LearningParams::*member, std::string comment) {
  return {key,
          [member, key](ScenarioConfig& c, const std::string& v) {
            c.learning.*member = static_cast<T>(parse_uint(key, v));
          },
          [member](const ScenarioConfig& c) { return fmt::format("{}", c.learning.*member); },
          std::move(comment), false};
}

Field learn_real(std::string key, double LearningParams::*member, std::string comment) {
  return {key,
          [member, key](ScenarioConfig& c, const std::string& v) {
            c.learning.*member = parse_double(key, v);
          },
          [member](const ScenarioConfig& c) { return fmt::format("{}", c.learning.*member); },
          std::move(comment), false};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      size_field("n_platoons", &ScenarioConfig::n_platoons, "count"),
      size_field("platoon_len", &ScenarioConfig::platoon_len,
                 "vehicles per platoon, leader included"),
      real_field("head_to_tail_m", &ScenarioConfig::head_to_tail_m, "meters"),
      size_field("n_subchannels", &ScenarioConfig::n_subchannels, "count"),
      real_field("subchannel_bw_hz", &ScenarioConfig::subchannel_bw_hz, "Hz"),
      real_field("carrier_hz", &ScenarioConfig::carrier_hz, "Hz"),
      {"power_levels_dbm",
       [](ScenarioConfig& c, const std::string& v) {
         c.power_levels_dbm = parse_list("power_levels_dbm", v);
       },
       [](const ScenarioConfig& c) { return fmt::format("{}", fmt::join(c.power_levels_dbm, ", ")); },
       "dBm, comma separated, strictly decreasing", true},
      real_field("noise_dbm", &ScenarioConfig::noise_dbm, "dBm over one subchannel"),
      real_field("antenna_gain_db", &ScenarioConfig::antenna_gain_db, "dB, tx+rx combined"),
      real_field("shadow_std_db", &ScenarioConfig::shadow_std_db, "dB"),
      real_field("slot_ms", &ScenarioConfig::slot_ms, "milliseconds"),
      real_field("period_ms", &ScenarioConfig::period_ms, "milliseconds"),
      size_field("payload_bytes", &ScenarioConfig::payload_bytes, "bytes", false),
      real_field("lane_width_m", &ScenarioConfig::lane_width_m, "meters"),
      {"lane_spacing_scheme",
       [](ScenarioConfig& c, const std::string& v) {
         if (v == "aligned") {
           c.lane_spacing_scheme = LanePlacement::kAligned;
         } else if (v == "staggered") {
           c.lane_spacing_scheme = LanePlacement::kStaggered;
         } else {
           throw ConfigError("key 'lane_spacing_scheme': expected aligned|staggered, got '" +
                                 v + "'",
                             "lane_spacing_scheme");
         }
       },
       [](const ScenarioConfig& c) { return to_string(c.lane_spacing_scheme); },
       "aligned | staggered", true},
      real_field("head_spacing_m", &ScenarioConfig::head_spacing_m,
                 "meters between consecutive leaders in one lane"),
      real_field("head_jitter_m", &ScenarioConfig::head_jitter_m,
                 "meters, uniform along-road jitter redrawn per episode"),
      {"pathloss_model",
       [](ScenarioConfig& c, const std::string& v) {
         if (v == "free_space") {
           c.pathloss_model = PathlossModel::kFreeSpace;
         } else if (v == "winner_b1_los") {
           c.pathloss_model = PathlossModel::kWinnerB1Los;
         } else {
           throw ConfigError(
               "key 'pathloss_model': expected free_space|winner_b1_los, got '" + v + "'",
               "pathloss_model");
         }
       },
       [](const ScenarioConfig& c) { return to_string(c.pathloss_model); },
       "free_space | winner_b1_los", true},
      real_field("interference_floor_dbm", &ScenarioConfig::interference_floor_dbm,
                 "dBm mapped to 0 in observations"),
      real_field("interference_ceiling_dbm", &ScenarioConfig::interference_ceiling_dbm,
                 "dBm mapped to 1 in observations"),
      size_field("rng_seed", &ScenarioConfig::rng_seed, "integer", false),
      learn_real("tau", &LearningParams::tau, "completion bonus per remaining slot"),
      learn_real("reward_scale", &LearningParams::reward_scale,
                 "reward multiplier inside TD targets"),
      learn_real("discount", &LearningParams::discount, "TD discount"),
      learn_real("learning_rate", &LearningParams::learning_rate, "Adam step size"),
      learn_real("epsilon_delta", &LearningParams::epsilon_delta, "per-episode decrement"),
      learn_real("epsilon_min", &LearningParams::epsilon_min, "exploration floor"),
      learn_size("batch_episodes", &LearningParams::batch_episodes,
                 "episodes per gradient step"),
      learn_size("replay_capacity", &LearningParams::replay_capacity, "episodes"),
      learn_size("target_sync_updates", &LearningParams::target_sync_updates,
                 "gradient steps between target syncs"),
      learn_real("grad_clip_norm", &LearningParams::grad_clip_norm, "global L2 norm"),
      {"hidden_units",
       [](ScenarioConfig& c, const std::string& v) {
         c.learning.hidden_units = parse_uint("hidden_units", v);
       },
       [](const ScenarioConfig& c) { return fmt::format("{}", c.learning.hidden_units); },
       "GRU width", true},
      learn_size("train_episodes", &LearningParams::train_episodes, "count"),
      {"target_mode",
       [](ScenarioConfig& c, const std::string& v) {
         if (v == "standard") {
           c.learning.target_mode = TargetMode::kStandard;
         } else if (v == "literal") {
           c.learning.target_mode = TargetMode::kLiteral;
         } else if (v == "double") {
           c.learning.target_mode = TargetMode::kDouble;
         } else {
           throw ConfigError("key 'target_mode': expected standard|literal|double, got '" + v + "'",
                             "target_mode");
         }
       },
       [](const ScenarioConfig& c) { return to_string(c.learning.target_mode); },
       "standard | literal | double", false},
  };
  return table;
}

}  // namespace

std::size_t ScenarioConfig::slots_per_period() const {
  return static_cast<std::size_t>(std::llround(period_ms / slot_ms));
}

void validate(const ScenarioConfig& c) {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError(fmt::format("key '{}': {}", key, why), key);
  };
  if (c.n_platoons == 0) fail("n_platoons", "must be at least 1");
  if (c.platoon_len < 2) fail("platoon_len", "needs a leader and at least one follower");
  if (!(c.head_to_tail_m > 0)) fail("head_to_tail_m", "must be positive");
  if (c.n_subchannels == 0) fail("n_subchannels", "must be at least 1");
  if (!(c.subchannel_bw_hz > 0)) fail("subchannel_bw_hz", "must be positive");
  if (!(c.carrier_hz > 0)) fail("carrier_hz", "must be positive");
  if (c.power_levels_dbm.empty()) fail("power_levels_dbm", "must not be empty");
  for (std::size_t i = 1; i < c.power_levels_dbm.size(); ++i) {
    if (!(c.power_levels_dbm[i] < c.power_levels_dbm[i - 1])) {
      fail("power_levels_dbm", "must be strictly decreasing");
    }
  }
  if (c.shadow_std_db < 0) fail("shadow_std_db", "must be nonnegative");
  if (!(c.slot_ms > 0)) fail("slot_ms", "must be positive");
  if (!(c.period_ms > 0)) fail("period_ms", "must be positive");
  const double ratio = c.period_ms / c.slot_ms;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1) {
    fail("period_ms", "must be a positive multiple of slot_ms");
  }
  if (c.payload_bytes == 0) fail("payload_bytes", "must be positive");
  if (c.lane_width_m < 0) fail("lane_width_m", "must be nonnegative");
  if (!(c.head_spacing_m > 0)) fail("head_spacing_m", "must be positive");
  if (c.head_jitter_m < 0) fail("head_jitter_m", "must be nonnegative");
  if (!(c.interference_ceiling_dbm > c.interference_floor_dbm)) {
    fail("interference_ceiling_dbm", "must exceed interference_floor_dbm");
  }
  const auto& l = c.learning;
  if (l.discount < 0 || l.discount > 1) fail("discount", "must lie in [0, 1]");
  if (!(l.reward_scale > 0)) fail("reward_scale", "must be positive");
  if (!(l.learning_rate > 0)) fail("learning_rate", "must be positive");
  if (l.epsilon_delta < 0) fail("epsilon_delta", "must be nonnegative");
  if (l.epsilon_min < 0 || l.epsilon_min > 1) fail("epsilon_min", "must lie in [0, 1]");
  if (l.batch_episodes == 0) fail("batch_episodes", "must be at least 1");
  if (l.replay_capacity < l.batch_episodes) fail("replay_capacity", "must hold one batch");
  if (l.target_sync_updates == 0) fail("target_sync_updates", "must be at least 1");
  if (!(l.grad_clip_norm > 0)) fail("grad_clip_norm", "must be positive");
  if (l.hidden_units == 0) fail("hidden_units", "must be at least 1");
}

ScenarioConfig parse_config(const std::string& text) {
  ScenarioConfig cfg;
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;

  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("line {}: expected 'key = value'", line_no));
    }
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    auto it = by_key.find(key);
    if (it == by_key.end()) {
      throw ConfigError(fmt::format("line {}: unknown key '{}'", line_no, key), key);
    }
    if (!seen.insert(key).second) {
      throw ConfigError(fmt::format("line {}: duplicate key '{}'", line_no, key), key);
    }
    it->second->read(cfg, value);
  }
  for (const auto& f : fields()) {
    if (!seen.contains(f.key)) {
      throw ConfigError(fmt::format("missing required key '{}'", f.key), f.key);
    }
  }
  validate(cfg);
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ScenarioConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    out += fmt::format("{} = {}  # {}\n", f.key, f.write(cfg), f.comment);
  }
  return out;
}

std::uint64_t scenario_hash(const ScenarioConfig& cfg) {
  // FNV-1a over the canonical text of the scenario fields.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : fields()) {
    if (!f.scenario) continue;
    for (char ch : f.key + "=" + f.write(cfg) + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

std::string to_string(LanePlacement p) {
  return p == LanePlacement::kAligned ? "aligned" : "staggered";
}
std::string to_string(PathlossModel m) {
  return m == PathlossModel::kFreeSpace ? "free_space" : "winner_b1_los";
}
std::string to_string(TargetMode m) {
  switch (m) {
    case TargetMode::kStandard:
      return "standard";
    case TargetMode::kLiteral:
      return "literal";
    case TargetMode::kDouble:
      return "double";
  }
  return "standard";
}

}  // namespace platoon
