#pragma once

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bilevel/problems.hpp"
#include "bilevel/rng.hpp"

namespace bilevel {

enum class NoiseKind { Gaussian, Laplace, Uniform };

inline const char* noise_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::Gaussian: return "gn";
    case NoiseKind::Laplace: return "ln";
    case NoiseKind::Uniform: return "un";
  }
  return "?";
}

struct SynthConfig {
  int n = 500;
  int m_train = 200;
  int m_val = 20;
  int m_test = 100;
  int sparsity = 5;
  NoiseKind noise_kind = NoiseKind::Gaussian;
  double noise_level = 1e-3;
  double value_exponent_lo = 0.0;  // planted magnitudes are 2^v, v uniform here
  double value_exponent_hi = 3.0;
  std::uint64_t seed = 1;
};

struct SplitDataset {
  Matrix train_matrix;
  Vector train_target;
  Matrix val_matrix;
  Vector val_target;
  Matrix test_matrix;
  Vector test_target;
  std::optional<Vector> ground_truth;

  int features() const { return static_cast<int>(train_matrix.cols()); }

  LowerLevelModel lower_model(ModelKind kind, LossNorm q = LossNorm::L2) const {
    return {kind, q, train_matrix, train_target};
  }
  UpperLevelObjective upper_objective() const { return {val_matrix, val_target}; }
};

//! Draw the synthetic recovery instance: column-normalized Gaussian design,
//! k-sparse planted signal with magnitudes 2^v, additive scaled noise.
//! Draw order (matrix rows, support, values, signs, noise) is part of the
//! determinism contract.
inline SplitDataset synth_generate(const SynthConfig& cfg) {
  if (cfg.sparsity > cfg.n) throw std::invalid_argument("synth_generate: sparsity exceeds dimension");
  if (cfg.n < 1 || cfg.m_train < 1 || cfg.m_val < 1 || cfg.m_test < 1)
    throw std::invalid_argument("synth_generate: all counts must be >= 1");
  Rng rng(cfg.seed);
  const int m_all = cfg.m_train + cfg.m_val + cfg.m_test;
  Matrix M(m_all, cfg.n);
  for (int i = 0; i < m_all; ++i)
    for (int j = 0; j < cfg.n; ++j) M(i, j) = rng.normal();
  for (int j = 0; j < cfg.n; ++j) {
    const double nj = M.col(j).norm();
    if (nj > 0) M.col(j) /= nj;
  }
  Vector xt = Vector::Zero(cfg.n);
  const std::vector<int> support = rng.distinct(cfg.sparsity, cfg.n);
  for (int idx : support) {
    const double v = rng.uniform(cfg.value_exponent_lo, cfg.value_exponent_hi);
    const double sign = rng.uniform01() < 0.5 ? -1.0 : 1.0;
    xt[idx] = sign * std::pow(2.0, v);
  }
  Vector eps(m_all);
  for (int i = 0; i < m_all; ++i) {
    switch (cfg.noise_kind) {
      case NoiseKind::Gaussian: eps[i] = rng.normal(); break;
      case NoiseKind::Laplace: eps[i] = rng.laplace(); break;
      case NoiseKind::Uniform: eps[i] = rng.uniform_sym(); break;
    }
  }
  const Vector b = M * xt + cfg.noise_level * eps;

  SplitDataset out;
  out.train_matrix = M.topRows(cfg.m_train);
  out.train_target = b.head(cfg.m_train);
  out.val_matrix = M.middleRows(cfg.m_train, cfg.m_val);
  out.val_target = b.segment(cfg.m_train, cfg.m_val);
  out.test_matrix = M.bottomRows(cfg.m_test);
  out.test_target = b.tail(cfg.m_test);
  out.ground_truth = xt;
  return out;
}

// ---------------------------------------------------------------------------
// LIBSVM text format
// ---------------------------------------------------------------------------

struct LibsvmParseError : std::runtime_error {
  int line;
  LibsvmParseError(int line_, const std::string& what_)
      : std::runtime_error("libsvm parse error at line " + std::to_string(line_) + ": " + what_),
        line(line_) {}
};

struct SparseRows {
  std::vector<std::vector<std::pair<int, double>>> rows;  // 1-based indices
  std::vector<double> targets;
  int max_index = 0;

  Matrix to_dense(int n_features = -1) const {
    const int n = n_features < 0 ? max_index : n_features;
    Matrix X = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), n);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (const auto& [idx, val] : rows[i]) {
        if (idx > n) throw std::invalid_argument("to_dense: index exceeds feature count");
        X(static_cast<Eigen::Index>(i), idx - 1) = val;
      }
    return X;
  }
};

inline SparseRows libsvm_parse(std::istream& in) {
  SparseRows out;
  std::string line;
  int lineno = 0;
  auto parse_double = [&](const std::string& tok) {
    std::size_t pos = 0;
    double v;
    try {
      v = std::stod(tok, &pos);
    } catch (const std::exception&) {
      throw LibsvmParseError(lineno, "non-numeric value '" + tok + "'");
    }
    if (pos != tok.size()) throw LibsvmParseError(lineno, "trailing characters in '" + tok + "'");
    return v;
  };
  while (std::getline(in, line)) {
    ++lineno;
    // strip comments and trailing whitespace
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;  // blank line
    out.targets.push_back(parse_double(tok));
    std::vector<std::pair<int, double>> row;
    int prev_index = 0;
    while (ls >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos)
        throw LibsvmParseError(lineno, "expected index:value, got '" + tok + "'");
      int idx;
      try {
        std::size_t pos = 0;
        idx = std::stoi(tok.substr(0, colon), &pos);
        if (pos != colon) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw LibsvmParseError(lineno, "bad feature index in '" + tok + "'");
      }
      if (idx <= prev_index)
        throw LibsvmParseError(lineno, "indices not strictly increasing at '" + tok + "'");
      const double val = parse_double(tok.substr(colon + 1));
      row.emplace_back(idx, val);
      prev_index = idx;
      out.max_index = std::max(out.max_index, idx);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline SparseRows libsvm_parse(const std::string& text) {
  std::istringstream in(text);
  return libsvm_parse(in);
}

inline std::string libsvm_serialize(const SparseRows& data) {
  std::ostringstream out;
  char buf[64];
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", data.targets[i]);
    out << buf;
    for (const auto& [idx, val] : data.rows[i]) {
      std::snprintf(buf, sizeof(buf), "%.17g", val);
      out << ' ' << idx << ':' << buf;
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Polynomial feature expansion
// ---------------------------------------------------------------------------

//! Expanded width for degree-3 expansion over d base features:
//! 1 + d + C(d+1,2) + C(d+2,3).
inline long poly3_width(long d) {
  return 1 + d + d * (d + 1) / 2 + d * (d + 1) * (d + 2) / 6;
}

//! Degree-3 polynomial expansion: constant, then all monomials of total
//! degree 1..3 (combinations with repetition) in lexicographic index order.
inline Matrix poly_expand(const Matrix& X, int degree = 3, long width_cap = 200000) {
  if (degree != 3) throw std::invalid_argument("poly_expand: only degree 3 is supported");
  const long d = X.cols();
  const long width = poly3_width(d);
  if (width > width_cap)
    throw std::length_error("poly_expand: expanded width " + std::to_string(width) +
                            " exceeds cap " + std::to_string(width_cap));
  Matrix out(X.rows(), width);
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    long c = 0;
    out(r, c++) = 1.0;
    for (long i = 0; i < d; ++i) out(r, c++) = X(r, i);
    for (long i = 0; i < d; ++i)
      for (long j = i; j < d; ++j) out(r, c++) = X(r, i) * X(r, j);
    for (long i = 0; i < d; ++i)
      for (long j = i; j < d; ++j)
        for (long k = j; k < d; ++k) out(r, c++) = X(r, i) * X(r, j) * X(r, k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random train/val/test split
// ---------------------------------------------------------------------------

inline SplitDataset split_random(const Matrix& X, const Vector& y,
                                 double f_train, double f_val, double f_test,
                                 std::uint64_t seed) {
  if (X.rows() != y.size()) throw std::invalid_argument("split_random: X/y size mismatch");
  if (std::fabs(f_train + f_val + f_test - 1.0) > 1e-9)
    throw std::invalid_argument("split_random: fractions must sum to 1");
  const int N = static_cast<int>(X.rows());
  const int n_val = static_cast<int>(std::llround(f_val * N));
  const int n_test = static_cast<int>(std::llround(f_test * N));
  const int n_train = N - n_val - n_test;
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw std::invalid_argument("split_random: a split is empty");
  Rng rng(seed);
  const std::vector<int> perm = rng.permutation(N);
  auto take = [&](int offset, int count, Matrix& Xs, Vector& ys) {
    Xs.resize(count, X.cols());
    ys.resize(count);
    for (int i = 0; i < count; ++i) {
      Xs.row(i) = X.row(perm[offset + i]);
      ys[i] = y[perm[offset + i]];
    }
  };
  SplitDataset out;
  take(0, n_train, out.train_matrix, out.train_target);
  take(n_train, n_val, out.val_matrix, out.val_target);
  take(n_train + n_val, n_test, out.test_matrix, out.test_target);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset directory serialization: train.csv / val.csv / test.csv + meta.json
// ---------------------------------------------------------------------------

namespace detail {
inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& X,
                             const Vector& y) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  char buf[64];
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", X(i, j));
      out << buf << ',';
    }
    std::snprintf(buf, sizeof(buf), "%.17g", y[i]);
    out << buf << '\n';
  }
}

inline std::pair<Matrix, Vector> read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty csv " + path.string());
  const std::size_t width = rows[0].size();
  Matrix X(rows.size(), width - 1);
  Vector y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != width) throw std::runtime_error("ragged csv " + path.string());
    for (std::size_t j = 0; j + 1 < width; ++j) X(i, j) = rows[i][j];
    y[i] = rows[i][width - 1];
  }
  return {std::move(X), std::move(y)};
}
}  // namespace detail

inline void write_dataset(const std::filesystem::path& dir, const SplitDataset& ds,
                          const nlohmann::json& meta) {
  std::filesystem::create_directories(dir);
  detail::write_matrix_csv(dir / "train.csv", ds.train_matrix, ds.train_target);
  detail::write_matrix_csv(dir / "val.csv", ds.val_matrix, ds.val_target);
  detail::write_matrix_csv(dir / "test.csv", ds.test_matrix, ds.test_target);
  nlohmann::json j = meta;
  if (ds.ground_truth) {
    std::vector<double> gt(ds.ground_truth->data(),
                           ds.ground_truth->data() + ds.ground_truth->size());
    j["ground_truth"] = gt;
  }
  std::ofstream out(dir / "meta.json");
  if (!out) throw std::runtime_error("cannot open meta.json for writing");
  out << j.dump(2) << '\n';
}

inline SplitDataset read_dataset(const std::filesystem::path& dir) {
  SplitDataset ds;
  std::tie(ds.train_matrix, ds.train_target) = detail::read_matrix_csv(dir / "train.csv");
  std::tie(ds.val_matrix, ds.val_target) = detail::read_matrix_csv(dir / "val.csv");
  std::tie(ds.test_matrix, ds.test_target) = detail::read_matrix_csv(dir / "test.csv");
  std::ifstream in(dir / "meta.json");
  if (in) {
    nlohmann::json j;
    in >> j;
    if (j.contains("ground_truth")) {
      const auto gt = j["ground_truth"].get<std::vector<double>>();
      ds.ground_truth = Eigen::Map<const Vector>(gt.data(), gt.size());
    }
  }
  return ds;
}

inline nlohmann::json synth_meta(const SynthConfig& cfg) {
  return {{"kind", "synthetic"},
          {"n", cfg.n},
          {"m_train", cfg.m_train},
          {"m_val", cfg.m_val},
          {"m_test", cfg.m_test},
          {"sparsity", cfg.sparsity},
          {"noise", noise_name(cfg.noise_kind)},
          {"noise_level", cfg.noise_level},
          {"value_exponent_lo", cfg.value_exponent_lo},
          {"value_exponent_hi", cfg.value_exponent_hi},
          {"seed", cfg.seed}};
}

}  // namespace bilevel
