#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace bilevel {

using Vector = Eigen::VectorXd;

namespace detail {
inline void require_finite(const Vector& x, const char* who) {
  if (!x.allFinite()) throw std::invalid_argument(std::string(who) + ": non-finite input");
}
inline void require_nonneg(double t, const char* who) {
  if (!(t >= 0.0)) throw std::invalid_argument(std::string(who) + ": negative threshold");
}
}  // namespace detail

//! Soft threshold: argmin_y t|y|_1 + 1/2 |y-x|^2, componentwise
//! sign(x_i) max(|x_i|-t, 0). Coordinates with |x_i| == t map to 0.
inline Vector prox_l1(const Vector& x, double t) {
  detail::require_finite(x, "prox_l1");
  detail::require_nonneg(t, "prox_l1");
  Vector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double a = std::fabs(x[i]) - t;
    out[i] = a > 0.0 ? (x[i] > 0.0 ? a : -a) : 0.0;
  }
  return out;
}

//! Componentwise clamp onto the l-infinity ball of radius t.
inline Vector proj_linf_ball(const Vector& x, double t) {
  detail::require_finite(x, "proj_linf_ball");
  detail::require_nonneg(t, "proj_linf_ball");
  return x.cwiseMax(-t).cwiseMin(t);
}

//! Radial projection onto the l2 ball of radius t; the zero vector is fixed.
inline Vector proj_l2_ball(const Vector& x, double t) {
  detail::require_finite(x, "proj_l2_ball");
  detail::require_nonneg(t, "proj_l2_ball");
  const double nx = x.norm();
  if (nx <= t || nx == 0.0) return x;
  return (t / nx) * x;
}

//! Block soft threshold: x - proj_l2_ball(x, t). Zero inside the ball.
inline Vector prox_l2(const Vector& x, double t) {
  detail::require_finite(x, "prox_l2");
  detail::require_nonneg(t, "prox_l2");
  const double nx = x.norm();
  if (nx <= t) return Vector::Zero(x.size());
  return (1.0 - t / nx) * x;
}

//! Euclidean projection onto the unit simplex by the descending-sort
//! threshold rule: largest k with x_(k) - (sum_{i<=k} x_(i) - 1)/k > 0.
inline Vector proj_simplex(const Vector& x) {
  detail::require_finite(x, "proj_simplex");
  if (x.size() < 1) throw std::invalid_argument("proj_simplex: empty input");
  std::vector<double> u(x.data(), x.data() + x.size());
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, tau = 0.0;
  int k = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    css += u[i];
    const double cand = (css - 1.0) / static_cast<double>(i + 1);
    if (u[i] - cand > 0.0) {
      tau = cand;
      k = static_cast<int>(i + 1);
    }
  }
  (void)k;
  return (x.array() - tau).max(0.0).matrix();
}

//! Projection onto the l1 ball of radius t: identity inside the ball, else
//! t P proj_simplex(P x / t) with P = diag(sign(x)).
inline Vector proj_l1_ball(const Vector& x, double t) {
  detail::require_finite(x, "proj_l1_ball");
  if (!(t > 0.0)) throw std::invalid_argument("proj_l1_ball: radius must be positive");
  if (x.lpNorm<1>() <= t) return x;
  Vector s = x.cwiseAbs() / t;
  Vector p = proj_simplex(s);
  for (Eigen::Index i = 0; i < x.size(); ++i) p[i] = (x[i] < 0.0 ? -p[i] : p[i]) * t;
  return p;
}

//! prox of t |.|_inf: x - proj_l1_ball(x, t). Collapses to zero when
//! |x|_1 <= t.
inline Vector prox_linf(const Vector& x, double t) {
  detail::require_finite(x, "prox_linf");
  detail::require_nonneg(t, "prox_linf");
  if (t == 0.0) return x;
  if (x.lpNorm<1>() <= t) return Vector::Zero(x.size());
  return x - proj_l1_ball(x, t);
}

//! prox of tau1 |.|_1 + (tau2/2) |.|_2^2: soft threshold then shrink by
//! 1/(1+tau2).
inline Vector prox_en_composite(const Vector& v, double tau1, double tau2) {
  detail::require_finite(v, "prox_en_composite");
  detail::require_nonneg(tau1, "prox_en_composite");
  detail::require_nonneg(tau2, "prox_en_composite");
  Vector out(v.size());
  const double scale = 1.0 / (1.0 + tau2);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::fabs(v[i]) - tau1;
    out[i] = a > 0.0 ? (v[i] > 0.0 ? a : -a) * scale : 0.0;
  }
  return out;
}

//! Componentwise clamp onto the box [lo, hi].
inline Vector proj_box(const Vector& x, const Vector& lo, const Vector& hi) {
  detail::require_finite(x, "proj_box");
  if (lo.size() != x.size() || hi.size() != x.size())
    throw std::invalid_argument("proj_box: bound dimensions disagree");
  if ((lo.array() > hi.array()).any())
    throw std::invalid_argument("proj_box: lo exceeds hi");
  return x.cwiseMax(lo).cwiseMin(hi);
}

//! Uniform box [-r, r]^n.
inline Vector proj_box(const Vector& x, double r) {
  detail::require_finite(x, "proj_box");
  detail::require_nonneg(r, "proj_box");
  return x.cwiseMax(-r).cwiseMin(r);
}

}  // namespace bilevel
