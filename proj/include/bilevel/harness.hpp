#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "bilevel/data.hpp"
#include "bilevel/problems.hpp"

namespace bilevel {

//! ResErr = |Ax - b|_2 / (1 + |b|_2), the normalized recovery residual.
inline double res_err(const Vector& x, const Matrix& A, const Vector& b) {
  if (x.size() != A.cols() || b.size() != A.rows())
    throw std::invalid_argument("res_err: dimension mismatch");
  return (A * x - b).norm() / (1.0 + b.norm());
}

//! RelErr = |new - old|_2 / (1 + |old|_2), the iterate-stability measure.
inline double rel_err(const Vector& v_new, const Vector& v_old) {
  if (v_new.size() != v_old.size()) throw std::invalid_argument("rel_err: dimension mismatch");
  return (v_new - v_old).norm() / (1.0 + v_old.norm());
}

inline double rel_err(const HyperParams& lam_new, const HyperParams& lam_old) {
  return rel_err(Vector(lam_new.as_vector()), Vector(lam_old.as_vector()));
}

//! Validation and test MSE, (1/2m)|Ax - b|^2 on each split.
inline std::pair<double, double> evaluate(const Vector& x, const SplitDataset& split) {
  const double mv = static_cast<double>(split.val_matrix.rows());
  const double mt = static_cast<double>(split.test_matrix.rows());
  if (x.size() != split.val_matrix.cols() || x.size() != split.test_matrix.cols())
    throw std::invalid_argument("evaluate: dimension mismatch");
  const double v = (split.val_matrix * x - split.val_target).squaredNorm() / (2.0 * mv);
  const double t = (split.test_matrix * x - split.test_target).squaredNorm() / (2.0 * mt);
  return {v, t};
}

enum class RunStatus { Converged, MaxIter, Diverged };

inline const char* status_name(RunStatus s) {
  switch (s) {
    case RunStatus::Converged: return "converged";
    case RunStatus::MaxIter: return "maxiter";
    case RunStatus::Diverged: return "diverged";
  }
  return "?";
}

struct TrajectoryPoint {
  double elapsed_s = 0.0;
  double test_err = 0.0;
};

//! Per-outer-iteration stopping data, kept so a run's Converged claim can be
//! replayed from the record alone.
struct IterStat {
  double res_err = 0.0;
  double rel_err = 0.0;
  double val_err = 0.0;
  HyperParams lambda;
};

struct RunRecord {
  std::string method;
  std::string model;       // "en" or "gen-q1" / "gen-q2" / "gen-qinf"
  std::string noise;       // "gn" / "ln" / "un" / "real"
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::MaxIter;
  double wall_time_s = 0.0;
  double val_err = 0.0;
  double test_err = 0.0;
  HyperParams selected_lambda;
  std::vector<TrajectoryPoint> trajectory;

  // run metadata beyond the CSV schema
  std::vector<IterStat> iters;
  Vector solution;
  long total_sweeps = 0;
  bool scaling_violated = false;   // zeta below lambda_max(A^T A)
  bool step_bound_violated = false;
  double step_used = 0.0;
  std::string message;
};

// ---------------------------------------------------------------------------
// CSV persistence (schema is fixed; reals carry 17 significant digits)
// ---------------------------------------------------------------------------

inline std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline const char* kResultsHeader =
    "method,model,noise,seed,status,wall_time_s,val_err,test_err,lambda1,lambda2";
inline const char* kTrajectoryHeader = "method,seed,elapsed_s,test_err";

inline void write_csv(const std::vector<RunRecord>& records, std::ostream& out) {
  if (records.empty()) throw std::invalid_argument("write_csv: no records");
  out << kResultsHeader << '\n';
  for (const auto& r : records) {
    out << r.method << ',' << r.model << ',' << r.noise << ',' << r.seed << ','
        << status_name(r.status) << ',' << format_g17(r.wall_time_s) << ','
        << format_g17(r.val_err) << ',' << format_g17(r.test_err) << ','
        << format_g17(r.selected_lambda.lambda1) << ','
        << format_g17(r.selected_lambda.lambda2) << '\n';
  }
}

inline void write_trajectories(const std::vector<RunRecord>& records, std::ostream& out) {
  out << kTrajectoryHeader << '\n';
  for (const auto& r : records)
    for (const auto& p : r.trajectory)
      out << r.method << ',' << r.seed << ',' << format_g17(p.elapsed_s) << ','
          << format_g17(p.test_err) << '\n';
}

// ---------------------------------------------------------------------------
// Repetition management
// ---------------------------------------------------------------------------

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // unbiased sample standard deviation; 0 when n <= 1
};

inline MetricSummary summarize_metric(const std::vector<double>& xs) {
  MetricSummary s;
  if (xs.empty()) return s;
  for (double v : xs) s.mean += v;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double acc = 0.0;
    for (double v : xs) acc += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(xs.size() - 1));
  }
  return s;
}

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

struct Summary {
  MetricSummary time, val, test;
  double val_median = 0.0, test_median = 0.0;
  int n_total = 0;
  int n_diverged = 0;  // excluded from the metric summaries
};

inline Summary summarize(const std::vector<RunRecord>& records) {
  Summary s;
  std::vector<double> t, v, te;
  for (const auto& r : records) {
    ++s.n_total;
    if (r.status == RunStatus::Diverged) {
      ++s.n_diverged;
      continue;
    }
    t.push_back(r.wall_time_s);
    v.push_back(r.val_err);
    te.push_back(r.test_err);
  }
  s.time = summarize_metric(t);
  s.val = summarize_metric(v);
  s.test = summarize_metric(te);
  s.val_median = median_of(v);
  s.test_median = median_of(te);
  return s;
}

//! Run `runner(seed)` for seeds base_seed..base_seed+n_reps-1. The caller is
//! expected to persist the returned records before consuming the summary.
inline std::vector<RunRecord> repeat_experiment(
    const std::function<RunRecord(std::uint64_t)>& runner, int n_reps,
    std::uint64_t base_seed) {
  if (n_reps < 1) throw std::invalid_argument("repeat_experiment: n_reps must be >= 1");
  std::vector<RunRecord> records;
  records.reserve(n_reps);
  for (int i = 0; i < n_reps; ++i) records.push_back(runner(base_seed + i));
  return records;
}

inline std::string summary_line(const std::string& method, const Summary& s) {
  auto pm = [](const MetricSummary& m) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.4g±%.2g", m.mean, m.stddev);
    return std::string(buf);
  };
  return method + " time " + pm(s.time) + " val " + pm(s.val) + " test " + pm(s.test) +
         (s.n_diverged ? (" (" + std::to_string(s.n_diverged) + " diverged)") : "");
}

}  // namespace bilevel
