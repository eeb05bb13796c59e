#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "bilevel/data.hpp"
#include "bilevel/harness.hpp"
#include "bilevel/problems.hpp"
#include "bilevel/prox.hpp"

namespace bilevel {

//! Constant or affine inner-sweep budget J_k = base + k*delta.
struct InnerBudget {
  int base = 50;
  int delta = 0;
  int at(int k) const { return base + k * delta; }
};

//! What to do when the configured s violates the step bound s < sigma*zeta/L.
//! Strict fails construction; Clamp rescales s onto the bound (paper presets);
//! Force runs the literal formula regardless.
enum class StepPolicy { Strict, Clamp, Force };

enum class HypergradStrategy { FiniteDifference, OneStepProx };

struct SolverConfig {
  ScalingConfig scaling{};
  double mu = 0.7;
  double s = 1.0;
  double alpha = 1e-3;
  InnerBudget inner_budget{};
  double tol = 1e-4;
  int max_outer = 100;
  double x_box = 1e3;
  double lambda_lo = 1e-8;
  double lambda_hi = 1e2;
  HyperParams lambda0{1e-3, 1e-3};
  StepPolicy step_policy = StepPolicy::Strict;
  HypergradStrategy strategy = HypergradStrategy::FiniteDifference;
  bool scaling_warn_only = false;  // paper zeta/eta violate S_x >= 0; warn, don't abort

  // lambda-step safeguards: one outer step changes each coordinate by at most
  // trust_factor, and a candidate is accepted only if its surrogate value does
  // not exceed accept_slack times the current one (else the step is halved).
  double trust_factor = 2.0;
  double accept_slack = 1.5;
  int max_backtracks = 5;

  // baseline point evaluation: blocks of plain sweeps under the shared tol;
  // a block residual above plain_divergence_res marks the point diverged
  // (the X box keeps iterates finite, so blowup shows up in the residual)
  int plain_block_sweeps = 500;
  int plain_max_blocks = 20;
  double plain_divergence_res = 1e3;

  double divergence_cap = 1e100;

  void check() const {
    scaling.check_basic();
    if (!(mu > 0.0 && mu < 1.0)) throw std::invalid_argument("SolverConfig: mu must be in (0,1)");
    if (!(s > 0.0)) throw std::invalid_argument("SolverConfig: s must be positive");
    if (!(alpha > 0.0)) throw std::invalid_argument("SolverConfig: alpha must be positive");
    if (!(tol > 0.0)) throw std::invalid_argument("SolverConfig: tol must be positive");
    if (max_outer < 1) throw std::invalid_argument("SolverConfig: max_outer must be >= 1");
    if (inner_budget.base < 1 || inner_budget.delta < 0)
      throw std::invalid_argument("SolverConfig: bad inner budget");
    if (!(x_box > 0.0)) throw std::invalid_argument("SolverConfig: x_box must be positive");
    if (!(lambda_lo >= 0.0) || !(lambda_hi > lambda_lo))
      throw std::invalid_argument("SolverConfig: bad lambda box");
    if (!(trust_factor > 1.0)) throw std::invalid_argument("SolverConfig: trust_factor must exceed 1");
    if (!(accept_slack >= 1.0)) throw std::invalid_argument("SolverConfig: accept_slack must be >= 1");
  }
};

struct DivergedError : std::runtime_error {
  int sweep;
  explicit DivergedError(int sweep_)
      : std::runtime_error("iterate diverged at sweep " + std::to_string(sweep_)), sweep(sweep_) {}
};

//! Iterates of one inner run: aggregated x, lower auxiliaries (y_l, z_l),
//! the two candidates, the last x-subproblem argument w, and the sweep index.
struct InnerState {
  Vector x;
  Vector y_l;
  Vector z_l;
  Vector x_l;
  Vector x_u;
  Vector w;
  int j = 0;
};

struct Hypergradient {
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  HypergradStrategy strategy = HypergradStrategy::FiniteDifference;
};

//! Projected hyperparameter gradient step: clamp(lambda - alpha g, Lambda box).
inline HyperParams lambda_update(const HyperParams& lam, const Hypergradient& hg,
                                 const SolverConfig& cfg) {
  auto clampv = [&](double v) { return std::min(std::max(v, cfg.lambda_lo), cfg.lambda_hi); };
  return HyperParams(clampv(lam.lambda1 - cfg.alpha * hg.g[0]),
                     clampv(lam.lambda2 - cfg.alpha * hg.g[1]));
}

enum class SweepKind { Admm, Pgm };

class AdmmBdaSolver {
 public:
  AdmmBdaSolver(LowerLevelModel model, UpperLevelObjective ul, SolverConfig cfg,
                SweepKind kind = SweepKind::Admm)
      : model_(std::move(model)), ul_(std::move(ul)), cfg_(cfg), kind_(kind) {
    cfg_.check();
    model_.check();
    ul_.check();
    if (model_.train_matrix.cols() != ul_.val_matrix.cols())
      throw std::invalid_argument("AdmmBdaSolver: train/val feature counts disagree");
    if (kind_ == SweepKind::Pgm && model_.kind != ModelKind::ElasticNet)
      throw std::invalid_argument("pgm_bda supports only the elastic-net model");

    const ScalingValidation sv = validate_scaling(cfg_.scaling, model_);
    scaling_ok_ = sv.positive_semidefinite;
    train_lambda_max_ = sv.lambda_max;
    if (!scaling_ok_ && !cfg_.scaling_warn_only)
      throw std::invalid_argument(
          "zeta = " + std::to_string(cfg_.scaling.zeta) +
          " does not dominate lambda_max(A^T A) = " + std::to_string(sv.lambda_max) +
          "; S_x is indefinite (set scaling_warn_only to reproduce paper settings)");

    lipschitz_ = lipschitz_estimate(ul_);
    const double bound = lipschitz_ > 0.0
                             ? cfg_.scaling.s_scalar() / lipschitz_
                             : std::numeric_limits<double>::infinity();
    step_bound_ = bound;
    bound_violated_ = cfg_.s >= bound;
    switch (cfg_.step_policy) {
      case StepPolicy::Strict:
        if (bound_violated_)
          throw std::invalid_argument("step size s = " + std::to_string(cfg_.s) +
                                      " violates the bound s < sigma*zeta/L = " +
                                      std::to_string(bound) +
                                      " (choose StepPolicy::Clamp or Force to override)");
        s_used_ = cfg_.s;
        break;
      case StepPolicy::Clamp:
        s_used_ = bound_violated_ ? 0.99 * bound : cfg_.s;
        break;
      case StepPolicy::Force:
        s_used_ = cfg_.s;
        break;
    }
    if (kind_ == SweepKind::Pgm) {
      pgm_lipschitz_ = train_lambda_max_;
      if (pgm_lipschitz_ <= 0.0)
        throw std::invalid_argument("pgm_bda: train matrix has no spectrum");
    }
  }

  const LowerLevelModel& model() const { return model_; }
  const UpperLevelObjective& upper() const { return ul_; }
  const SolverConfig& config() const { return cfg_; }
  double lipschitz() const { return lipschitz_; }
  double step_bound() const { return step_bound_; }
  double step_used() const { return s_used_; }
  bool step_bound_violated() const { return bound_violated_; }
  bool scaling_positive() const { return scaling_ok_; }
  double train_lambda_max() const { return train_lambda_max_; }

  // -- Step 1.1 pieces ------------------------------------------------------

  //! y-subproblem closed form. Elastic net: (z + sigma(Ax-b) + sigma eta y) /
  //! (1 + sigma + sigma eta). Generalized: Prox_{t|.|_q} at the scaled point.
  Vector y_update(const InnerState& st, const HyperParams&) const {
    const double sig = cfg_.scaling.sigma, eta = cfg_.scaling.eta;
    const Vector ax = model_.train_matrix * st.x;
    if (model_.kind == ModelKind::ElasticNet) {
      return (st.z_l + sig * (ax - model_.train_target) + sig * eta * st.y_l) /
             (1.0 + sig + sig * eta);
    }
    const double t = 1.0 / (sig * (1.0 + eta));
    const Vector v =
        (sig * (ax - model_.train_target) + st.z_l + sig * eta * st.y_l) / (sig * (1.0 + eta));
    switch (model_.q) {
      case LossNorm::L1: return prox_l1(v, t);
      case LossNorm::L2: return prox_l2(v, t);
      case LossNorm::Linf: return prox_linf(v, t);
    }
    return v;
  }

  //! Multiplier ascent z + sigma (Ax - y_new - b).
  Vector z_update(const InnerState& st, const Vector& y_new) const {
    return st.z_l +
           cfg_.scaling.sigma * (model_.train_matrix * st.x - y_new - model_.train_target);
  }

  //! x-subproblem argument w = sigma A^T(y+b) - A^T z + sigma(zeta I - A^T A)x.
  Vector x_subproblem_argument(const InnerState& st, const Vector& y_new,
                               const Vector& z_new) const {
    const double sig = cfg_.scaling.sigma, zeta = cfg_.scaling.zeta;
    const Vector ax = model_.train_matrix * st.x;
    return model_.train_matrix.transpose() * (sig * (y_new + model_.train_target) - z_new - sig * ax) +
           sig * zeta * st.x;
  }

  //! Lower candidate: componentwise sign(w) max(|w|-lambda1, 0)/(lambda2+sigma zeta).
  Vector x_lower_update(const Vector& w, const HyperParams& lam) const {
    const double denom = lam.lambda2 + cfg_.scaling.s_scalar();
    Vector out(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double a = std::fabs(w[i]) - lam.lambda1;
      out[i] = a > 0.0 ? (w[i] > 0.0 ? a : -a) / denom : 0.0;
    }
    return out;
  }

  // -- Step 1.2 -------------------------------------------------------------

  //! Upper candidate x - s_j (sigma zeta)^{-1} grad F(x), s_j = s/(j+1).
  Vector x_upper_step(const InnerState& st) const {
    const double sj = s_used_ / static_cast<double>(st.j + 1);
    return st.x - (sj / cfg_.scaling.s_scalar()) * ul_grad_x(st.x, ul_);
  }

  // -- Step 1.3 -------------------------------------------------------------

  //! Convex combination clamped onto the X box (the S-projection is the
  //! Euclidean clamp since S is a scalar multiple of the identity).
  Vector aggregate(const Vector& x_u, const Vector& x_l) const {
    return proj_box(Vector(cfg_.mu * x_u + (1.0 - cfg_.mu) * x_l), cfg_.x_box);
  }

  // -- sweeps ---------------------------------------------------------------

  InnerState make_initial_state() const {
    InnerState st;
    const Eigen::Index n = model_.train_matrix.cols();
    const Eigen::Index m = model_.train_matrix.rows();
    st.x = Vector::Zero(n);
    st.x_l = Vector::Zero(n);
    st.x_u = Vector::Zero(n);
    st.y_l = -model_.train_target;
    st.z_l = Vector::Zero(m);
    st.w = Vector::Zero(n);
    st.j = 0;
    return st;
  }

  //! One inner sweep in place; `bda` disables Steps 1.2/1.3 when false
  //! (plain lower-level iteration x <- clamp(x_l)).
  void sweep(InnerState& st, const HyperParams& lam, bool bda) const {
    if (kind_ == SweepKind::Admm) {
      const Vector y_new = y_update(st, lam);
      const Vector z_new = z_update(st, y_new);
      st.w = x_subproblem_argument(st, y_new, z_new);
      st.x_l = x_lower_update(st.w, lam);
      st.y_l = y_new;
      st.z_l = z_new;
    } else {
      // proximal-gradient lower step at 1/L-hat
      const double lhat = pgm_lipschitz_;
      const Vector grad =
          model_.train_matrix.transpose() * (model_.train_matrix * st.x - model_.train_target);
      st.w = st.x - grad / lhat;
      st.x_l = prox_en_composite(st.w, lam.lambda1 / lhat, lam.lambda2 / lhat);
    }
    if (bda) {
      st.x_u = x_upper_step(st);
      st.x = aggregate(st.x_u, st.x_l);
    } else {
      st.x = proj_box(st.x_l, cfg_.x_box);
    }
    st.j += 1;
  }

  bool state_sane(const InnerState& st) const {
    return st.x.allFinite() && st.x.lpNorm<Eigen::Infinity>() < cfg_.divergence_cap &&
           st.x_l.allFinite() && st.x_l.lpNorm<Eigen::Infinity>() < cfg_.divergence_cap;
  }

  //! J sweeps from the warm state (or the zero initialization). The s_j
  //! counter restarts at every call, matching the algorithm's Step-1 loop.
  InnerState inner_solve(const HyperParams& lam, int J, const InnerState* warm = nullptr) const {
    if (J < 1) throw std::invalid_argument("inner_solve: J must be >= 1");
    InnerState st = warm ? *warm : make_initial_state();
    st.j = 0;
    for (int j = 0; j < J; ++j) {
      sweep(st, lam, true);
      if (!state_sane(st)) throw DivergedError(j);
    }
    return st;
  }

  double phi(const InnerState& st) const { return ul_value(st.x, ul_); }

  //! |x - T_lambda(x)| with T the plain lower sweep applied from the state's
  //! current (y, z) context; the probe leaves the state untouched.
  double lower_map_residual(const InnerState& st, const HyperParams& lam) const {
    InnerState probe = st;
    sweep(probe, lam, false);
    return (st.x - probe.x_l).norm();
  }

  //! The x-subproblem as a resolvent in the S metric: from a fixed (y, z)
  //! context, T(u) = (dR + A^T(2z'-z) + sigma zeta I)^{-1}(sigma zeta u).
  //! Firmly non-expansive in u for any zeta; equals the sweep's x_l at
  //! u = context.x.
  Vector lower_resolvent(const Vector& u, const InnerState& context,
                         const HyperParams& lam) const {
    const Vector y_new = y_update(context, lam);
    const Vector z_new = z_update(context, y_new);
    const Vector wt = cfg_.scaling.s_scalar() * u -
                      model_.train_matrix.transpose() * (2.0 * z_new - context.z_l);
    return x_lower_update(wt, lam);
  }

  // -- hypergradients -------------------------------------------------------

  //! Forward differences of the Step-1 surrogate phi_J, h_i = 1e-6 (1+|l_i|);
  //! flips to a backward difference when the probe would leave the Lambda box.
  //! Both probes reuse the caller's warm start and J.
  Hypergradient hypergradient_fd(const HyperParams& lam, int J, const InnerState* warm,
                                 double base_phi) const {
    Hypergradient out;
    out.strategy = HypergradStrategy::FiniteDifference;
    const double l[2] = {lam.lambda1, lam.lambda2};
    for (int i = 0; i < 2; ++i) {
      const double h = 1e-6 * (1.0 + std::fabs(l[i]));
      double step = h;
      if (l[i] + h > cfg_.lambda_hi) step = -h;
      HyperParams probe = lam;
      (i == 0 ? probe.lambda1 : probe.lambda2) = l[i] + step;
      double phi_probe;
      try {
        phi_probe = phi(inner_solve(probe, J, warm));
      } catch (const DivergedError&) {
        out.g[i] = 0.0;  // perturbed solve blew up; claim flatness rather than poison
        continue;
      }
      out.g[i] = (phi_probe - base_phi) / step;
      if (!std::isfinite(out.g[i])) out.g[i] = 0.0;
    }
    return out;
  }

  Hypergradient hypergradient_fd(const HyperParams& lam, int J,
                                 const InnerState* warm = nullptr) const {
    const double base = phi(inner_solve(lam, J, warm));
    return hypergradient_fd(lam, J, warm, base);
  }

  //! Differentiate only the final lower prox through lambda and chain with
  //! grad F at x_l. Coordinates at the kink count as inactive.
  Hypergradient hypergradient_onestep(const HyperParams& lam, const InnerState& final_state) const {
    Hypergradient out;
    out.strategy = HypergradStrategy::OneStepProx;
    const double denom = lam.lambda2 + cfg_.scaling.s_scalar();
    const Vector grad = ul_grad_x(final_state.x_l, ul_);
    double g1 = 0.0, g2 = 0.0;
    for (Eigen::Index i = 0; i < final_state.w.size(); ++i) {
      if (std::fabs(final_state.w[i]) > lam.lambda1)
        g1 -= (final_state.w[i] > 0.0 ? 1.0 : -1.0) * grad[i];
      g2 -= final_state.x_l[i] * grad[i];
    }
    out.g[0] = g1 / denom;
    out.g[1] = g2 / denom;
    return out;
  }

  // -- outer loop (Step 0..3) ----------------------------------------------

  RunRecord outer_solve(const SplitDataset& split, std::uint64_t seed) const {
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    RunRecord rec;
    rec.method = kind_ == SweepKind::Admm ? "admm_bda" : "pgm_bda";
    rec.seed = seed;
    rec.scaling_violated = !scaling_ok_;
    rec.step_bound_violated = bound_violated_;
    rec.step_used = s_used_;
    rec.status = RunStatus::MaxIter;

    HyperParams lam = cfg_.lambda0;
    InnerState st = make_initial_state();
    for (int k = 0; k < cfg_.max_outer; ++k) {
      const int J = cfg_.inner_budget.at(k);
      const InnerState st_prev = st;
      try {
        st = inner_solve(lam, J, &st_prev);
      } catch (const DivergedError& e) {
        rec.status = RunStatus::Diverged;
        rec.message = "inner solve diverged at outer " + std::to_string(k) + ", sweep " +
                      std::to_string(e.sweep);
        st = st_prev;
        break;
      }
      rec.total_sweeps += J;
      const double phi0 = phi(st);

      Hypergradient hg;
      if (cfg_.strategy == HypergradStrategy::FiniteDifference) {
        hg = hypergradient_fd(lam, J, &st_prev, phi0);
        rec.total_sweeps += 2 * J;
      } else {
        hg = hypergradient_onestep(lam, st);
      }

      // Step 2 with safeguards: trust region then backtracking acceptance
      HyperParams cand = lambda_update(lam, hg, cfg_);
      auto trust = [&](double c, double cur) {
        return std::min(std::max(c, cur / cfg_.trust_factor), cur * cfg_.trust_factor);
      };
      cand.lambda1 = std::min(std::max(trust(cand.lambda1, lam.lambda1), cfg_.lambda_lo), cfg_.lambda_hi);
      cand.lambda2 = std::min(std::max(trust(cand.lambda2, lam.lambda2), cfg_.lambda_lo), cfg_.lambda_hi);
      bool accepted = false;
      for (int t = 0; t < cfg_.max_backtracks && !accepted; ++t) {
        double phi_cand = std::numeric_limits<double>::infinity();
        try {
          phi_cand = phi(inner_solve(cand, J, &st_prev));
        } catch (const DivergedError&) {
        }
        rec.total_sweeps += J;
        if (phi_cand <= cfg_.accept_slack * phi0) {
          accepted = true;
        } else {
          cand.lambda1 = lam.lambda1 + 0.5 * (cand.lambda1 - lam.lambda1);
          cand.lambda2 = lam.lambda2 + 0.5 * (cand.lambda2 - lam.lambda2);
        }
      }
      if (!accepted) cand = lam;

      const double res = res_err(st.x, model_.train_matrix, model_.train_target);
      const double rel = rel_err(cand, lam);
      const auto [ve, te] = evaluate(st.x, split);
      rec.iters.push_back({res, rel, ve, lam});
      double now = elapsed();
      if (!rec.trajectory.empty() && now <= rec.trajectory.back().elapsed_s)
        now = rec.trajectory.back().elapsed_s + 1e-9;
      rec.trajectory.push_back({now, te});
      lam = cand;
      if (std::min(res, rel) <= cfg_.tol) {
        rec.status = RunStatus::Converged;
        break;
      }
    }
    rec.selected_lambda = lam;
    rec.solution = st.x;
    const auto [ve, te] = evaluate(st.x, split);
    rec.val_err = ve;
    rec.test_err = te;
    rec.wall_time_s = elapsed();
    return rec;
  }

  // -- plain lower-level evaluation (baselines, oracles) ---------------------

  struct PointEval {
    InnerState state;
    RunStatus status = RunStatus::MaxIter;
    long sweeps = 0;
    double val_err = std::numeric_limits<double>::infinity();
  };

  //! Plain ADMM at fixed lambda, stopped per block of sweeps when
  //! min(ResErr, block relative x-change) <= tol.
  PointEval plain_point_evaluate(const HyperParams& lam) const {
    PointEval out;
    out.state = make_initial_state();
    const double nb = model_.train_target.norm();
    for (int blk = 0; blk < cfg_.plain_max_blocks; ++blk) {
      const Vector x_old = out.state.x;
      for (int j = 0; j < cfg_.plain_block_sweeps; ++j) {
        sweep(out.state, lam, false);
        ++out.sweeps;
        if (!state_sane(out.state)) {
          out.status = RunStatus::Diverged;
          return out;
        }
      }
      const double res = (model_.train_matrix * out.state.x - model_.train_target).norm() / (1.0 + nb);
      const double rel = (out.state.x - x_old).norm() / (1.0 + x_old.norm());
      if (res > cfg_.plain_divergence_res) {
        out.status = RunStatus::Diverged;
        return out;
      }
      if (std::min(res, rel) <= cfg_.tol) {
        out.status = RunStatus::Converged;
        break;
      }
    }
    out.val_err = phi(out.state);
    return out;
  }

 private:
  LowerLevelModel model_;
  UpperLevelObjective ul_;
  SolverConfig cfg_;
  SweepKind kind_;
  bool scaling_ok_ = false;
  double train_lambda_max_ = 0.0;
  double lipschitz_ = 0.0;
  double step_bound_ = 0.0;
  double s_used_ = 0.0;
  bool bound_violated_ = false;
  double pgm_lipschitz_ = 0.0;
};

}  // namespace bilevel
