// SPDX-License-Identifier: Apache-2.0
#include "platoon/nn.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

#include "platoon/config.hpp"

namespace platoon {
namespace {

Tensor2 uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor2 m(rows, cols);
  // Column-major fill order is part of the seeded-init contract.
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  }
  return m;
}

Tensor2 sigmoid(const Tensor2& a) {
  return (1.0 + (-a.array()).exp()).inverse().matrix();
}

void expect_shape(const Tensor2& t, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (t.rows() != rows || t.cols() != cols) {
    throw std::invalid_argument(fmt::format("{}: expected {}x{}, got {}x{}", what, rows, cols,
                                            t.rows(), t.cols()));
  }
}

template <typename Params, typename Fn>
void visit(Params& p, Fn&& fn) {
  fn("fc_in.w", p.fc_in.w);
  fn("fc_in.b", p.fc_in.b);
  fn("update.w_in", p.update.w_in);
  fn("update.w_rec", p.update.w_rec);
  fn("update.b", p.update.b);
  fn("reset.w_in", p.reset.w_in);
  fn("reset.w_rec", p.reset.w_rec);
  fn("reset.b", p.reset.b);
  fn("candidate.w_in", p.candidate.w_in);
  fn("candidate.w_rec", p.candidate.w_rec);
  fn("candidate.b", p.candidate.b);
  fn("fc_out.w", p.fc_out.w);
  fn("fc_out.b", p.fc_out.b);
}

}  // namespace

QNetParams QNetParams::zeros(const QNetShape& s) {
  const auto in = static_cast<Eigen::Index>(s.input_dim);
  const auto hid = static_cast<Eigen::Index>(s.hidden);
  const auto out = static_cast<Eigen::Index>(s.n_actions);
  QNetParams p;
  p.shape = s;
  p.fc_in = {Tensor2::Zero(in, hid), Tensor2::Zero(1, hid)};
  for (GruGate* g : {&p.update, &p.reset, &p.candidate}) {
    *g = {Tensor2::Zero(hid, hid), Tensor2::Zero(hid, hid), Tensor2::Zero(1, hid)};
  }
  p.fc_out = {Tensor2::Zero(hid, out), Tensor2::Zero(1, out)};
  return p;
}

QNetParams QNetParams::init(const QNetShape& s, Rng& rng) {
  QNetParams p = zeros(s);
  p.fc_in.w = uniform(s.input_dim, s.hidden, rng);
  for (GruGate* g : {&p.update, &p.reset, &p.candidate}) {
    g->w_in = uniform(s.hidden, s.hidden, rng);
    g->w_rec = uniform(s.hidden, s.hidden, rng);
  }
  p.fc_out.w = uniform(s.hidden, s.n_actions, rng);
  return p;
}

void QNetParams::for_each(const std::function<void(std::string_view, Tensor2&)>& fn) {
  visit(*this, fn);
}

void QNetParams::for_each(
    const std::function<void(std::string_view, const Tensor2&)>& fn) const {
  visit(*this, fn);
}

std::size_t QNetParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](std::string_view, const Tensor2& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

void QNetParams::set_zero() {
  for_each([](std::string_view, Tensor2& t) { t.setZero(); });
}

QNetParams& QNetParams::operator+=(const QNetParams& other) {
  std::vector<const Tensor2*> rhs;
  other.for_each([&](std::string_view, const Tensor2& t) { rhs.push_back(&t); });
  std::size_t i = 0;
  for_each([&](std::string_view, Tensor2& t) { t += *rhs[i++]; });
  return *this;
}

QNetParams& QNetParams::operator*=(double s) {
  for_each([s](std::string_view, Tensor2& t) { t *= s; });
  return *this;
}

double QNetParams::squared_norm() const {
  double total = 0.0;
  for_each([&](std::string_view, const Tensor2& t) { total += t.squaredNorm(); });
  return total;
}

bool QNetParams::all_finite() const {
  bool ok = true;
  for_each([&](std::string_view, const Tensor2& t) { ok = ok && t.allFinite(); });
  return ok;
}

QNetOutput qnet_forward(const QNetParams& p, const Tensor2& x, const Tensor2& h,
                        QNetCache* cache) {
  const auto rows = x.rows();
  const auto hid = static_cast<Eigen::Index>(p.shape.hidden);
  expect_shape(x, rows, static_cast<Eigen::Index>(p.shape.input_dim), "qnet_forward input");
  expect_shape(h, rows, hid, "qnet_forward hidden");

  Tensor2 fc_pre = x * p.fc_in.w;
  fc_pre.rowwise() += p.fc_in.b.row(0);
  Tensor2 a = fc_pre.cwiseMax(0.0);

  Tensor2 z_pre = a * p.update.w_in + h * p.update.w_rec;
  z_pre.rowwise() += p.update.b.row(0);
  Tensor2 r_pre = a * p.reset.w_in + h * p.reset.w_rec;
  r_pre.rowwise() += p.reset.b.row(0);
  Tensor2 z = sigmoid(z_pre);
  Tensor2 r = sigmoid(r_pre);
  Tensor2 rh = r.cwiseProduct(h);
  Tensor2 c_pre = a * p.candidate.w_in + rh * p.candidate.w_rec;
  c_pre.rowwise() += p.candidate.b.row(0);
  Tensor2 c = c_pre.array().tanh().matrix();

  QNetOutput out;
  out.hidden = (h.array() + z.array() * (c.array() - h.array())).matrix();
  out.q = out.hidden * p.fc_out.w;
  out.q.rowwise() += p.fc_out.b.row(0);

  if (cache != nullptr) {
    cache->x = x;
    cache->fc_pre = std::move(fc_pre);
    cache->fc_act = std::move(a);
    cache->h_prev = h;
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->rh = std::move(rh);
    cache->h_cand = std::move(c);
    cache->h_next = out.hidden;
    cache->params_version = p.version;
    cache->params = &p;
  }
  return out;
}

Tensor2 qnet_backward(const QNetParams& p, const QNetCache& cache, const Tensor2& grad_q,
                      const Tensor2& grad_hidden_next, QNetParams& g) {
  if (cache.params != &p || cache.params_version != p.version) {
    throw std::logic_error("qnet_backward: cache does not belong to these parameters");
  }
  const auto rows = cache.x.rows();
  expect_shape(grad_q, rows, static_cast<Eigen::Index>(p.shape.n_actions), "grad_q");
  expect_shape(grad_hidden_next, rows, static_cast<Eigen::Index>(p.shape.hidden),
               "grad_hidden_next");

  g.fc_out.w.noalias() += cache.h_next.transpose() * grad_q;
  g.fc_out.b += grad_q.colwise().sum();
  Tensor2 dh = grad_hidden_next;
  dh.noalias() += grad_q * p.fc_out.w.transpose();

  // h' = h + z ∘ (c - h)
  const auto z = cache.z.array();
  const auto c = cache.h_cand.array();
  const auto h = cache.h_prev.array();
  Tensor2 dz_pre = (dh.array() * (c - h) * z * (1.0 - z)).matrix();
  Tensor2 dc_pre = (dh.array() * z * (1.0 - c.square())).matrix();
  Tensor2 dh_prev = (dh.array() * (1.0 - z)).matrix();

  g.candidate.w_in.noalias() += cache.fc_act.transpose() * dc_pre;
  g.candidate.w_rec.noalias() += cache.rh.transpose() * dc_pre;
  g.candidate.b += dc_pre.colwise().sum();
  const Tensor2 drh = dc_pre * p.candidate.w_rec.transpose();
  const auto r = cache.r.array();
  Tensor2 dr_pre = (drh.array() * h * r * (1.0 - r)).matrix();
  dh_prev.array() += drh.array() * r;

  g.update.w_in.noalias() += cache.fc_act.transpose() * dz_pre;
  g.update.w_rec.noalias() += cache.h_prev.transpose() * dz_pre;
  g.update.b += dz_pre.colwise().sum();
  g.reset.w_in.noalias() += cache.fc_act.transpose() * dr_pre;
  g.reset.w_rec.noalias() += cache.h_prev.transpose() * dr_pre;
  g.reset.b += dr_pre.colwise().sum();
  dh_prev.noalias() += dz_pre * p.update.w_rec.transpose();
  dh_prev.noalias() += dr_pre * p.reset.w_rec.transpose();

  Tensor2 da = dc_pre * p.candidate.w_in.transpose();
  da.noalias() += dz_pre * p.update.w_in.transpose();
  da.noalias() += dr_pre * p.reset.w_in.transpose();
  Tensor2 dfc = (da.array() * (cache.fc_pre.array() > 0.0).cast<double>()).matrix();
  g.fc_in.w.noalias() += cache.x.transpose() * dfc;
  g.fc_in.b += dfc.colwise().sum();
  return dh_prev;
}

AdamState AdamState::for_params(const QNetParams& params, double learning_rate) {
  AdamState s;
  s.m = QNetParams::zeros(params.shape);
  s.v = QNetParams::zeros(params.shape);
  s.learning_rate = learning_rate;
  return s;
}

void optimizer_step(QNetParams& params, const QNetParams& grads, AdamState& st) {
  if (!grads.all_finite()) throw TrainingError("optimizer_step: non-finite gradient");
  if (!(params.shape == grads.shape) || !(params.shape == st.m.shape)) {
    throw std::invalid_argument("optimizer_step: shape mismatch");
  }
  ++st.step;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(st.beta1, t);
  const double c2 = 1.0 - std::pow(st.beta2, t);

  std::vector<const Tensor2*> gs;
  grads.for_each([&](std::string_view, const Tensor2& x) { gs.push_back(&x); });
  std::vector<Tensor2*> ms;
  std::vector<Tensor2*> vs;
  st.m.for_each([&](std::string_view, Tensor2& x) { ms.push_back(&x); });
  st.v.for_each([&](std::string_view, Tensor2& x) { vs.push_back(&x); });

  std::size_t i = 0;
  params.for_each([&](std::string_view, Tensor2& w) {
    const Tensor2& gr = *gs[i];
    Tensor2& m = *ms[i];
    Tensor2& v = *vs[i];
    m = st.beta1 * m + (1.0 - st.beta1) * gr;
    v = st.beta2 * v + (1.0 - st.beta2) * gr.cwiseAbs2();
    w.array() -= st.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + st.eps);
    ++i;
  });
  ++params.version;
}

double clip_global_norm(QNetParams& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm) grads *= max_norm / norm;
  return norm;
}

}  // namespace platoon
