#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>

#include "bilevel/prox.hpp"

namespace bilevel {

using Matrix = Eigen::MatrixXd;

//! lambda = (lambda1, lambda2), both >= 0: l1 weight and squared-l2 weight.
struct HyperParams {
  double lambda1 = 0.0;
  double lambda2 = 0.0;

  HyperParams() = default;
  HyperParams(double l1, double l2) : lambda1(l1), lambda2(l2) {
    if (!(l1 >= 0.0) || !(l2 >= 0.0))
      throw std::invalid_argument("HyperParams: negative entry");
  }

  Eigen::Vector2d as_vector() const { return {lambda1, lambda2}; }
};

enum class ModelKind { ElasticNet, GeneralizedElasticNet };

//! Loss norm q for the generalized model; ignored by the elastic net.
enum class LossNorm { L1, L2, Linf };

inline double norm_q(const Vector& v, LossNorm q) {
  switch (q) {
    case LossNorm::L1: return v.lpNorm<1>();
    case LossNorm::L2: return v.norm();
    case LossNorm::Linf: return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
  }
  return 0.0;
}

//! Training-side problem: data fit Q(Ax - b) plus the two-term penalty.
struct LowerLevelModel {
  ModelKind kind = ModelKind::ElasticNet;
  LossNorm q = LossNorm::L2;
  Matrix train_matrix;   // m x n, rows are samples
  Vector train_target;   // m

  int samples() const { return static_cast<int>(train_matrix.rows()); }
  int features() const { return static_cast<int>(train_matrix.cols()); }

  void check() const {
    if (train_matrix.rows() != train_target.size())
      throw std::invalid_argument("LowerLevelModel: matrix/target size mismatch");
  }
};

//! Validation-side objective F(x) = (1/2m) |Ax - b|^2.
struct UpperLevelObjective {
  Matrix val_matrix;   // m_v x n
  Vector val_target;   // m_v

  int samples() const { return static_cast<int>(val_matrix.rows()); }

  void check() const {
    if (val_matrix.rows() != val_target.size())
      throw std::invalid_argument("UpperLevelObjective: matrix/target size mismatch");
  }
};

inline double ul_value(const Vector& x, const UpperLevelObjective& ul) {
  if (x.size() != ul.val_matrix.cols())
    throw std::invalid_argument("ul_value: dimension mismatch");
  const double m = static_cast<double>(ul.val_matrix.rows());
  return (ul.val_matrix * x - ul.val_target).squaredNorm() / (2.0 * m);
}

inline Vector ul_grad_x(const Vector& x, const UpperLevelObjective& ul) {
  if (x.size() != ul.val_matrix.cols())
    throw std::invalid_argument("ul_grad_x: dimension mismatch");
  const double m = static_cast<double>(ul.val_matrix.rows());
  return ul.val_matrix.transpose() * (ul.val_matrix * x - ul.val_target) / m;
}

inline double ll_objective(const Vector& x, const LowerLevelModel& model,
                           const HyperParams& lam) {
  if (x.size() != model.train_matrix.cols())
    throw std::invalid_argument("ll_objective: dimension mismatch");
  const Vector r = model.train_matrix * x - model.train_target;
  const double fit = model.kind == ModelKind::ElasticNet ? 0.5 * r.squaredNorm()
                                                         : norm_q(r, model.q);
  return fit + lam.lambda1 * x.lpNorm<1>() + 0.5 * lam.lambda2 * x.squaredNorm();
}

//! Power-iteration estimate of lambda_max(A^T A).
struct SpectralEstimate {
  double lambda_max = 0.0;
  bool zero_matrix = false;
  int iterations = 0;
};

inline SpectralEstimate largest_gram_eigenvalue(const Matrix& A,
                                                double rel_tol = 1e-8,
                                                int max_iter = 10000) {
  SpectralEstimate est;
  if (A.size() == 0 || A.norm() == 0.0) {
    est.zero_matrix = true;
    return est;
  }
  const Eigen::Index n = A.cols();
  // deterministic start with a mild ramp so it is never orthogonal to the
  // leading eigenvector by symmetry
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 1.0 + 1e-3 * static_cast<double>(i % 7);
  v /= v.norm();
  double prev = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    Vector w = A.transpose() * (A * v);
    const double nw = w.norm();
    if (nw == 0.0) {  // v landed in the null space; restart shifted
      v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
      continue;
    }
    v = w / nw;
    const double cur = (A * v).squaredNorm();
    est.iterations = it;
    if (it > 1 && std::fabs(cur - prev) <= rel_tol * std::fabs(cur)) {
      est.lambda_max = cur;
      return est;
    }
    prev = cur;
  }
  est.lambda_max = prev;
  return est;
}

//! L_delta = lambda_max(Atil^T Atil)/m for the validation MSE.
inline double lipschitz_estimate(const UpperLevelObjective& ul,
                                 bool* zero_matrix_flag = nullptr) {
  const SpectralEstimate est = largest_gram_eigenvalue(ul.val_matrix);
  if (zero_matrix_flag) *zero_matrix_flag = est.zero_matrix;
  if (est.zero_matrix) return 0.0;
  return est.lambda_max / static_cast<double>(ul.val_matrix.rows());
}

//! ADMM scaling operators: S_y = eta I, S_x = zeta I - A^T A, so the
//! aggregate S = sigma (A^T A + S_x) collapses to sigma zeta I exactly.
struct ScalingConfig {
  double sigma = 1e-4;
  double zeta = 5e-10;
  double eta = 1e-10;

  double s_scalar() const { return sigma * zeta; }

  void check_basic() const {
    if (!(sigma > 0.0)) throw std::invalid_argument("ScalingConfig: sigma must be positive");
    if (!(zeta > 0.0)) throw std::invalid_argument("ScalingConfig: zeta must be positive");
    if (!(eta >= 0.0)) throw std::invalid_argument("ScalingConfig: eta must be nonnegative");
  }
};

//! Result of validating zeta against lambda_max(A^T A) (1% margin).
struct ScalingValidation {
  bool positive_semidefinite = false;
  double lambda_max = 0.0;
};

inline ScalingValidation validate_scaling(const ScalingConfig& sc,
                                          const LowerLevelModel& model) {
  sc.check_basic();
  ScalingValidation v;
  v.lambda_max = largest_gram_eigenvalue(model.train_matrix).lambda_max;
  v.positive_semidefinite = sc.zeta > 1.01 * v.lambda_max;
  return v;
}

}  // namespace bilevel
