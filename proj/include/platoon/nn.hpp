// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string_view>

#include "platoon/rng.hpp"

namespace platoon {

/// Row-batched dense matrix; one row per sample.
using Tensor2 = Eigen::MatrixXd;

struct QNetShape {
  std::size_t input_dim = 0;
  std::size_t hidden = 64;
  std::size_t n_actions = 0;
  bool operator==(const QNetShape&) const = default;
};

struct Dense {
  Tensor2 w;  // in x out
  Tensor2 b;  // 1 x out
};

/// One GRU gate: input-to-hidden weights, hidden-to-hidden weights, bias.
struct GruGate {
  Tensor2 w_in;   // hidden x hidden (fed by the input FC layer)
  Tensor2 w_rec;  // hidden x hidden
  Tensor2 b;      // 1 x hidden
};

/// Q-network weights: ReLU FC -> GRU -> linear FC.
///
/// The same struct carries gradients and Adam moments, so every tensor-wise
/// operation goes through for_each().
struct QNetParams {
  QNetShape shape;
  Dense fc_in;
  GruGate update;
  GruGate reset;
  GruGate candidate;
  Dense fc_out;
  // Bumped on every in-place update; forward caches remember it.
  std::uint64_t version = 0;

  static QNetParams zeros(const QNetShape& shape);
  /// Weights uniform in +-1/sqrt(fan_in), biases zero.
  static QNetParams init(const QNetShape& shape, Rng& rng);

  void for_each(const std::function<void(std::string_view, Tensor2&)>& fn);
  void for_each(const std::function<void(std::string_view, const Tensor2&)>& fn) const;

  std::size_t parameter_count() const;
  void set_zero();
  QNetParams& operator+=(const QNetParams& other);
  QNetParams& operator*=(double s);
  double squared_norm() const;
  bool all_finite() const;
};

/// Activations kept by a forward pass for the matching backward pass.
struct QNetCache {
  Tensor2 x;
  Tensor2 fc_pre;
  Tensor2 fc_act;
  Tensor2 h_prev;
  Tensor2 z;
  Tensor2 r;
  Tensor2 rh;
  Tensor2 h_cand;
  Tensor2 h_next;
  std::uint64_t params_version = 0;
  const QNetParams* params = nullptr;
};

struct QNetOutput {
  Tensor2 q;       // rows x n_actions
  Tensor2 hidden;  // rows x hidden
};

/// Forward pass for a batch of rows:
///   a = relu(x W_in + b_in)
///   z = sigmoid(a W_z + h U_z + b_z),  r = sigmoid(a W_r + h U_r + b_r)
///   c = tanh(a W_c + (r ∘ h) U_c + b_c)
///   h' = (1 - z) ∘ h + z ∘ c,  q = h' W_out + b_out
/// Throws std::invalid_argument on shape mismatch. `cache` may be null.
QNetOutput qnet_forward(const QNetParams& params, const Tensor2& input, const Tensor2& hidden_prev,
                        QNetCache* cache = nullptr);

/// Reverse pass through one forward step. Parameter gradients are accumulated
/// into `grads`; the return value is dL/dh_prev so calls chain backwards in
/// time. Throws std::logic_error when `cache` came from different or since
/// modified parameters.
Tensor2 qnet_backward(const QNetParams& params, const QNetCache& cache, const Tensor2& grad_q,
                      const Tensor2& grad_hidden_next, QNetParams& grads);

struct AdamState {
  QNetParams m;
  QNetParams v;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const QNetParams& params, double learning_rate);
};

/// Bias-corrected Adam update. Throws TrainingError on non-finite gradients,
/// leaving params and state untouched.
void optimizer_step(QNetParams& params, const QNetParams& grads, AdamState& state);

/// Rescales grads so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_global_norm(QNetParams& grads, double max_norm);

}  // namespace platoon
