#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "bilevel/admm_bda.hpp"
#include "bilevel/harness.hpp"
#include "bilevel/rng.hpp"

namespace bilevel {

//! Log-space lambda bounds plus grid resolutions / sample budget.
struct SearchSpace {
  double l1_lo = 1e-6, l1_hi = 1.0;
  double l2_lo = 1e-6, l2_hi = 1.0;
  int grid_l1 = 6;
  int grid_l2 = 5;
  int n_samples = 30;

  void check() const {
    if (!(l1_lo > 0.0) || !(l1_hi >= l1_lo) || !(l2_lo > 0.0) || !(l2_hi >= l2_lo) ||
        !std::isfinite(l1_hi) || !std::isfinite(l2_hi))
      throw std::invalid_argument("SearchSpace: bounds must be positive and finite");
    if (grid_l1 < 2 || grid_l2 < 2)
      throw std::invalid_argument("SearchSpace: grid resolution must be >= 2");
    if (n_samples < 1) throw std::invalid_argument("SearchSpace: need at least one sample");
  }

  std::vector<HyperParams> grid_points() const {
    check();
    std::vector<HyperParams> pts;
    pts.reserve(static_cast<std::size_t>(grid_l1) * grid_l2);
    auto log_lin = [](double lo, double hi, int n, int i) {
      if (n == 1) return lo;
      const double t = static_cast<double>(i) / static_cast<double>(n - 1);
      return std::pow(10.0, std::log10(lo) + t * (std::log10(hi) - std::log10(lo)));
    };
    for (int i = 0; i < grid_l1; ++i)
      for (int j = 0; j < grid_l2; ++j)
        pts.emplace_back(log_lin(l1_lo, l1_hi, grid_l1, i), log_lin(l2_lo, l2_hi, grid_l2, j));
    return pts;
  }
};

namespace detail {

//! Shared core of grid/random: evaluate candidate points with the plain lower
//! solver, select the Val.Err argmin (ties to the lowest index), check-point
//! the best-so-far test error after every evaluated point.
inline RunRecord select_from_points(const char* method, const AdmmBdaSolver& solver,
                                    const SplitDataset& split,
                                    const std::vector<HyperParams>& points,
                                    std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  RunRecord rec;
  rec.method = method;
  rec.seed = seed;
  rec.status = RunStatus::Diverged;  // until one point evaluates cleanly
  double best_val = std::numeric_limits<double>::infinity();
  int n_diverged = 0;
  for (const auto& lam : points) {
    const auto ev = solver.plain_point_evaluate(lam);
    rec.total_sweeps += ev.sweeps;
    if (ev.status == RunStatus::Diverged) {
      ++n_diverged;
    } else if (ev.val_err < best_val) {
      best_val = ev.val_err;
      const auto [ve, te] = evaluate(ev.state.x, split);
      rec.val_err = ve;
      rec.test_err = te;
      rec.selected_lambda = lam;
      rec.solution = ev.state.x;
      rec.status = RunStatus::Converged;
    }
    if (rec.status == RunStatus::Converged) {
      double now = elapsed();
      if (!rec.trajectory.empty() && now <= rec.trajectory.back().elapsed_s)
        now = rec.trajectory.back().elapsed_s + 1e-9;
      rec.trajectory.push_back({now, rec.test_err});
    }
  }
  if (n_diverged > 0)
    rec.message = std::to_string(n_diverged) + " of " + std::to_string(points.size()) +
                  " points diverged and were skipped";
  rec.wall_time_s = elapsed();
  return rec;
}

}  // namespace detail

//! Brute-force selection over the full grid, row-major in (lambda1, lambda2).
inline RunRecord grid_search(const SearchSpace& space, const LowerLevelModel& model,
                             const UpperLevelObjective& ul, const SplitDataset& split,
                             const SolverConfig& cfg, std::uint64_t seed) {
  AdmmBdaSolver solver(model, ul, cfg);
  return detail::select_from_points("grid", solver, split, space.grid_points(), seed);
}

//! Log-uniform sampling of n_samples lambda vectors, then argmin selection.
inline RunRecord random_search(const SearchSpace& space, const LowerLevelModel& model,
                               const UpperLevelObjective& ul, const SplitDataset& split,
                               const SolverConfig& cfg, std::uint64_t seed) {
  space.check();
  Rng rng(seed + 0x536561726368ULL);  // decoupled from the data-generation stream
  std::vector<HyperParams> pts;
  pts.reserve(space.n_samples);
  for (int i = 0; i < space.n_samples; ++i) {
    const double l1 = std::pow(10.0, rng.uniform(std::log10(space.l1_lo), std::log10(space.l1_hi)));
    const double l2 = std::pow(10.0, rng.uniform(std::log10(space.l2_lo), std::log10(space.l2_hi)));
    pts.emplace_back(l1, l2);
  }
  AdmmBdaSolver solver(model, ul, cfg);
  return detail::select_from_points("random", solver, split, pts, seed);
}

//! BDA outer loop with the one-step proximal-gradient lower solver
//! (elastic net only).
inline RunRecord pgm_bda(const LowerLevelModel& model, const UpperLevelObjective& ul,
                         const SplitDataset& split, const SolverConfig& cfg,
                         std::uint64_t seed) {
  AdmmBdaSolver solver(model, ul, cfg, SweepKind::Pgm);
  return solver.outer_solve(split, seed);
}

inline RunRecord admm_bda(const LowerLevelModel& model, const UpperLevelObjective& ul,
                          const SplitDataset& split, const SolverConfig& cfg,
                          std::uint64_t seed) {
  AdmmBdaSolver solver(model, ul, cfg, SweepKind::Admm);
  return solver.outer_solve(split, seed);
}

}  // namespace bilevel
