// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "platoon/vdn.hpp"

namespace platoon {

/// Fraction of (episode, platoon) pairs whose payload was fully delivered.
/// Throws std::domain_error on empty input.
double delivery_probability(const std::vector<std::vector<bool>>& delivered);

/// Fraction of episodes in which every platoon delivered.
double all_delivered_probability(const std::vector<std::vector<bool>>& delivered);

/// Trailing mean over at most `window` values ending at each index.
std::vector<double> moving_average(const std::vector<double>& values, std::size_t window);

/// Mean of the `window` values starting at `begin` (clamped to the range).
double window_mean(const std::vector<double>& values, std::size_t begin, std::size_t window);

struct MetricsRow {
  std::string algo;
  double payload_multiple = 0.0;
  std::size_t payload_bytes = 0;
  std::size_t episodes = 0;
  double delivery_probability = 0.0;
  double all_delivered_probability = 0.0;
  double mean_reward = 0.0;
  double mean_completion_slot = 0.0;
  std::string trace;  // file holding the per-slot trace of the designated episode
};

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows);

/// Full training log, including wall-clock time per episode.
void write_train_log_csv(std::ostream& os, const std::vector<TrainLogRow>& rows);

/// Reproducible subset of the training log plus the 200-episode moving average.
void write_reward_curve_csv(std::ostream& os, const std::vector<TrainLogRow>& rows,
                            std::size_t window = 200);

}  // namespace platoon
