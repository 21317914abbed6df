// SPDX-License-Identifier: Apache-2.0
#include "platoon/metrics.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace platoon {

double delivery_probability(const std::vector<std::vector<bool>>& delivered) {
  std::size_t total = 0;
  std::size_t ok = 0;
  for (const auto& ep : delivered) {
    total += ep.size();
    ok += static_cast<std::size_t>(std::count(ep.begin(), ep.end(), true));
  }
  if (total == 0) throw std::domain_error("delivery probability of an empty outcome set");
  return static_cast<double>(ok) / static_cast<double>(total);
}

double all_delivered_probability(const std::vector<std::vector<bool>>& delivered) {
  if (delivered.empty()) throw std::domain_error("delivery probability of an empty outcome set");
  const auto ok = std::count_if(delivered.begin(), delivered.end(), [](const auto& ep) {
    return std::all_of(ep.begin(), ep.end(), [](bool d) { return d; });
  });
  return static_cast<double>(ok) / static_cast<double>(delivered.size());
}

std::vector<double> moving_average(const std::vector<double>& values, std::size_t window) {
  if (window == 0) throw std::invalid_argument("moving average window must be positive");
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

double window_mean(const std::vector<double>& values, std::size_t begin, std::size_t window) {
  const std::size_t b = std::min(begin, values.size());
  const std::size_t e = std::min(values.size(), b + window);
  if (b == e) throw std::domain_error("mean over an empty window");
  double sum = 0.0;
  for (std::size_t i = b; i < e; ++i) sum += values[i];
  return sum / static_cast<double>(e - b);
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << "algo,payload_multiple,payload_bytes,episodes,delivery_probability,"
        "all_delivered_probability,mean_reward,mean_completion_slot,trace\n";
  for (const MetricsRow& r : rows) {
    fmt::print(os, "{},{},{},{},{},{},{},{},{}\n", r.algo, r.payload_multiple, r.payload_bytes,
               r.episodes, r.delivery_probability, r.all_delivered_probability, r.mean_reward,
               r.mean_completion_slot, r.trace);
  }
}

void write_train_log_csv(std::ostream& os, const std::vector<TrainLogRow>& rows) {
  os << "episode,epsilon,total_reward,loss,grad_norm,clipped,completion_slot,delivered,wall_ms\n";
  for (const TrainLogRow& r : rows) {
    fmt::print(os, "{},{},{},{},{},{},{},{},{:.3f}\n", r.episode, r.epsilon, r.total_reward,
               r.loss, r.grad_norm, r.clipped ? 1 : 0, r.completion_slot, r.delivered, r.wall_ms);
  }
}

void write_reward_curve_csv(std::ostream& os, const std::vector<TrainLogRow>& rows,
                            std::size_t window) {
  std::vector<double> rewards;
  rewards.reserve(rows.size());
  for (const TrainLogRow& r : rows) rewards.push_back(r.total_reward);
  const std::vector<double> avg = moving_average(rewards, window);
  os << "episode,epsilon,total_reward,moving_avg,loss,completion_slot,delivered\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const TrainLogRow& r = rows[i];
    fmt::print(os, "{},{},{},{},{},{},{}\n", r.episode, r.epsilon, r.total_reward, avg[i], r.loss,
               r.completion_slot, r.delivered);
  }
}

}  // namespace platoon
