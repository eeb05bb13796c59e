// Command-line driver: dataset generation, single-method runs, and the
// all-methods benchmark, emitting the shared CSV schemas.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bilevel/admm_bda.hpp"
#include "bilevel/baselines.hpp"
#include "bilevel/data.hpp"
#include "bilevel/harness.hpp"
#include "bilevel/presets.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIo = 4;

struct CommonOpts {
  std::string method = "admm_bda";
  std::string model = "en";
  std::string q = "2";
  std::string noise = "gn";
  std::string preset;
  std::string dataset_dir;
  std::string libsvm_path;
  std::vector<double> split_fractions{0.79365079365079361, 0.10317460317460317,
                                      0.10317460317460317};  // 200/26/26 of 252
  int reps = 20;
  std::uint64_t seed = 1;
  std::string out_dir;
  bool print_config = false;

  bilevel::SynthConfig synth;
  bilevel::SolverConfig cfg;
  bilevel::SearchSpace space;
};

bilevel::NoiseKind parse_noise(const std::string& s) {
  if (s == "gn") return bilevel::NoiseKind::Gaussian;
  if (s == "ln") return bilevel::NoiseKind::Laplace;
  if (s == "un") return bilevel::NoiseKind::Uniform;
  throw CLI::ValidationError("--noise", "expected gn, ln, or un");
}

bilevel::LossNorm parse_q(const std::string& s) {
  if (s == "1") return bilevel::LossNorm::L1;
  if (s == "2") return bilevel::LossNorm::L2;
  if (s == "inf") return bilevel::LossNorm::Linf;
  throw CLI::ValidationError("--q", "expected 1, 2, or inf");
}

std::string model_label(bilevel::ModelKind kind, bilevel::LossNorm q) {
  if (kind == bilevel::ModelKind::ElasticNet) return "en";
  switch (q) {
    case bilevel::LossNorm::L1: return "gen-q1";
    case bilevel::LossNorm::L2: return "gen-q2";
    case bilevel::LossNorm::Linf: return "gen-qinf";
  }
  return "gen";
}

std::string default_out_dir() {
  if (const char* env = std::getenv("BILEVEL_OUT_DIR")) return env;
  return "out";
}

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string dataset_hash(const bilevel::SplitDataset& ds) {
  std::ostringstream buf;
  auto dump = [&](const bilevel::Matrix& X, const bilevel::Vector& y) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      for (Eigen::Index j = 0; j < X.cols(); ++j) buf << bilevel::format_g17(X(i, j)) << ',';
      buf << bilevel::format_g17(y[i]) << '\n';
    }
  };
  dump(ds.train_matrix, ds.train_target);
  dump(ds.val_matrix, ds.val_target);
  dump(ds.test_matrix, ds.test_target);
  char out[32];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(fnv1a(buf.str())));
  return out;
}

json config_echo(const CommonOpts& o, bilevel::ModelKind kind, bilevel::LossNorm q) {
  const auto& c = o.cfg;
  return json{{"method", o.method},
              {"model", model_label(kind, q)},
              {"noise", o.noise},
              {"reps", o.reps},
              {"seed", o.seed},
              {"preset", o.preset},
              {"sigma", c.scaling.sigma},
              {"zeta", c.scaling.zeta},
              {"eta", c.scaling.eta},
              {"mu", c.mu},
              {"s", c.s},
              {"alpha", c.alpha},
              {"inner_budget_base", c.inner_budget.base},
              {"inner_budget_delta", c.inner_budget.delta},
              {"tol", c.tol},
              {"max_outer", c.max_outer},
              {"x_box", c.x_box},
              {"lambda_lo", c.lambda_lo},
              {"lambda_hi", c.lambda_hi},
              {"lambda0", {c.lambda0.lambda1, c.lambda0.lambda2}},
              {"step_policy", c.step_policy == bilevel::StepPolicy::Strict
                                  ? "strict"
                                  : (c.step_policy == bilevel::StepPolicy::Clamp ? "clamp" : "force")},
              {"hypergradient", c.strategy == bilevel::HypergradStrategy::FiniteDifference
                                    ? "fd"
                                    : "onestep"},
              {"search_l1", {o.space.l1_lo, o.space.l1_hi}},
              {"search_l2", {o.space.l2_lo, o.space.l2_hi}},
              {"grid", {o.space.grid_l1, o.space.grid_l2}},
              {"random_budget", o.space.n_samples},
              {"synth",
               {{"n", o.synth.n},
                {"m_train", o.synth.m_train},
                {"m_val", o.synth.m_val},
                {"m_test", o.synth.m_test},
                {"sparsity", o.synth.sparsity},
                {"noise_level", o.synth.noise_level}}}};
}

// Build the per-repetition dataset: synthetic draw, fixed directory, or a
// fresh random split of a LIBSVM source (degree-3 expanded).
bilevel::SplitDataset rep_dataset(const CommonOpts& o, std::uint64_t rep_seed) {
  if (!o.dataset_dir.empty()) return bilevel::read_dataset(o.dataset_dir);
  if (!o.libsvm_path.empty()) {
    std::ifstream in(o.libsvm_path);
    if (!in) throw std::runtime_error("cannot open " + o.libsvm_path);
    const auto raw = bilevel::libsvm_parse(in);
    const bilevel::Matrix X = bilevel::poly_expand(raw.to_dense());
    const bilevel::Vector y =
        Eigen::Map<const bilevel::Vector>(raw.targets.data(), raw.targets.size());
    return bilevel::split_random(X, y, o.split_fractions[0], o.split_fractions[1],
                                 o.split_fractions[2], rep_seed);
  }
  bilevel::SynthConfig sc = o.synth;
  sc.seed = rep_seed;
  return bilevel::synth_generate(sc);
}

bilevel::RunRecord run_one(const CommonOpts& o, const std::string& method,
                           bilevel::ModelKind kind, bilevel::LossNorm q,
                           const bilevel::SplitDataset& ds, std::uint64_t rep_seed) {
  const auto model = ds.lower_model(kind, q);
  const auto ul = ds.upper_objective();
  bilevel::RunRecord rec;
  if (method == "admm_bda") {
    rec = bilevel::admm_bda(model, ul, ds, o.cfg, rep_seed);
  } else if (method == "pgm_bda") {
    rec = bilevel::pgm_bda(model, ul, ds, o.cfg, rep_seed);
  } else if (method == "grid") {
    rec = bilevel::grid_search(o.space, model, ul, ds, o.cfg, rep_seed);
  } else if (method == "random") {
    rec = bilevel::random_search(o.space, model, ul, ds, o.cfg, rep_seed);
  } else {
    throw CLI::ValidationError("--method", "unknown method " + method);
  }
  rec.model = model_label(kind, q);
  rec.noise = o.libsvm_path.empty() && o.dataset_dir.empty() ? bilevel::noise_name(o.synth.noise_kind)
                                                             : "real";
  return rec;
}

void write_records(const fs::path& dir, const std::string& stem,
                   const std::vector<bilevel::RunRecord>& records) {
  fs::create_directories(dir);
  std::ofstream rout(dir / (stem + "_results.csv"));
  if (!rout) throw std::runtime_error("cannot write results CSV");
  bilevel::write_csv(records, rout);
  std::ofstream tout(dir / (stem + "_trajectories.csv"));
  if (!tout) throw std::runtime_error("cannot write trajectory CSV");
  bilevel::write_trajectories(records, tout);
}

int cmd_generate(const CommonOpts& o) {
  const fs::path dir = o.out_dir;
  if (!o.libsvm_path.empty()) {
    const auto ds = rep_dataset(o, o.seed);
    json meta{{"kind", "libsvm"},
              {"source", o.libsvm_path},
              {"seed", o.seed},
              {"fractions", o.split_fractions}};
    bilevel::write_dataset(dir, ds, meta);
  } else {
    bilevel::SynthConfig sc = o.synth;
    sc.seed = o.seed;
    bilevel::write_dataset(dir, bilevel::synth_generate(sc), bilevel::synth_meta(sc));
  }
  std::cout << "wrote dataset to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_run(const CommonOpts& o, bilevel::ModelKind kind, bilevel::LossNorm q) {
  std::vector<bilevel::RunRecord> records;
  for (int i = 0; i < o.reps; ++i) {
    const std::uint64_t rep_seed = o.seed + static_cast<std::uint64_t>(i);
    const auto ds = rep_dataset(o, rep_seed);
    records.push_back(run_one(o, o.method, kind, q, ds, rep_seed));
  }
  write_records(o.out_dir, o.method, records);
  const auto s = bilevel::summarize(records);
  std::cout << bilevel::summary_line(o.method, s) << "\n";
  const bool all_diverged = s.n_diverged == s.n_total;
  return all_diverged ? kExitDiverged : kExitOk;
}

int cmd_benchmark(const CommonOpts& o, bilevel::ModelKind kind, bilevel::LossNorm q) {
  std::vector<std::string> methods{"grid", "random"};
  if (kind == bilevel::ModelKind::ElasticNet) methods.push_back("pgm_bda");
  methods.push_back("admm_bda");

  std::vector<bilevel::SplitDataset> datasets;
  std::vector<std::string> hashes;
  for (int i = 0; i < o.reps; ++i) {
    datasets.push_back(rep_dataset(o, o.seed + static_cast<std::uint64_t>(i)));
    hashes.push_back(dataset_hash(datasets.back()));
  }

  std::vector<bilevel::RunRecord> combined;
  int failed_methods = 0;
  for (const auto& method : methods) {
    std::vector<bilevel::RunRecord> recs;
    try {
      for (int i = 0; i < o.reps; ++i)
        recs.push_back(run_one(o, method, kind, q, datasets[i],
                               o.seed + static_cast<std::uint64_t>(i)));
    } catch (const std::exception& e) {
      std::cerr << method << " failed: " << e.what() << "\n";
      ++failed_methods;
      continue;
    }
    write_records(o.out_dir, method, recs);
    std::cout << bilevel::summary_line(method, bilevel::summarize(recs)) << "\n";
    combined.insert(combined.end(), recs.begin(), recs.end());
  }
  if (combined.empty()) return kExitDiverged;
  write_records(o.out_dir, "benchmark", combined);
  json meta{{"methods", methods}, {"dataset_hashes", hashes}, {"seed", o.seed}, {"reps", o.reps}};
  std::ofstream mout(fs::path(o.out_dir) / "benchmark_meta.json");
  mout << meta.dump(2) << "\n";
  return failed_methods == static_cast<int>(methods.size()) ? kExitDiverged : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bilevel hyperparameter selection for sparse regression"};
  app.require_subcommand(1);

  CommonOpts o;
  o.out_dir = default_out_dir();
  o.cfg = bilevel::preset_base_config();
  o.cfg.inner_budget = {50, 0};  // library default; presets raise it

  auto add_common = [&](CLI::App* sub, bool solver_flags) {
    sub->add_option("--out", o.out_dir, "output directory (env BILEVEL_OUT_DIR)");
    sub->add_option("--seed", o.seed, "base seed");
    sub->add_option("--n", o.synth.n, "synthetic feature dimension");
    sub->add_option("--m-train", o.synth.m_train, "training samples");
    sub->add_option("--m-val", o.synth.m_val, "validation samples");
    sub->add_option("--m-test", o.synth.m_test, "test samples");
    sub->add_option("--k", o.synth.sparsity, "planted nonzero count");
    sub->add_option("--noise", o.noise, "noise family: gn | ln | un");
    sub->add_option("--noise-level", o.synth.noise_level, "noise scale");
    sub->add_option("--v-lo", o.synth.value_exponent_lo, "planted exponent lower bound");
    sub->add_option("--v-hi", o.synth.value_exponent_hi, "planted exponent upper bound");
    sub->add_option("--libsvm", o.libsvm_path, "LIBSVM source file (degree-3 expanded)");
    sub->add_option("--split", o.split_fractions, "train,val,test fractions for --libsvm")
        ->expected(3);
    if (solver_flags) {
      sub->add_option("--dataset", o.dataset_dir, "read a serialized dataset directory");
      sub->add_option("--preset", o.preset,
                      "parameter preset: en-synth | gen-synth-q{1,2,inf} | en-real | "
                      "gen-real-q{1,2,inf}");
      sub->add_option("--model", o.model, "en | gen");
      sub->add_option("--q", o.q, "loss norm for gen: 1 | 2 | inf");
      sub->add_option("--reps", o.reps, "independent repetitions");
      sub->add_option("--sigma", o.cfg.scaling.sigma, "ADMM penalty");
      sub->add_option("--zeta", o.cfg.scaling.zeta, "S_x shift");
      sub->add_option("--eta", o.cfg.scaling.eta, "S_y shift");
      sub->add_option("--mu", o.cfg.mu, "aggregation weight");
      sub->add_option("--s", o.cfg.s, "upper step size");
      sub->add_option("--alpha", o.cfg.alpha, "lambda step size");
      sub->add_option("--inner-budget", o.cfg.inner_budget.base, "inner sweeps per outer iteration");
      sub->add_option("--inner-budget-delta", o.cfg.inner_budget.delta, "affine budget increment");
      sub->add_option("--tol", o.cfg.tol, "stopping tolerance");
      sub->add_option("--max-outer", o.cfg.max_outer, "outer iteration cap");
      sub->add_option("--x-box", o.cfg.x_box, "X box radius");
      sub->add_option("--lambda-lo", o.cfg.lambda_lo, "Lambda box lower bound");
      sub->add_option("--lambda-hi", o.cfg.lambda_hi, "Lambda box upper bound");
      std::map<std::string, bilevel::StepPolicy> policies{
          {"strict", bilevel::StepPolicy::Strict},
          {"clamp", bilevel::StepPolicy::Clamp},
          {"force", bilevel::StepPolicy::Force}};
      sub->add_option("--step-policy", o.cfg.step_policy, "strict | clamp | force")
          ->transform(CLI::CheckedTransformer(policies, CLI::ignore_case));
      std::map<std::string, bilevel::HypergradStrategy> strategies{
          {"fd", bilevel::HypergradStrategy::FiniteDifference},
          {"onestep", bilevel::HypergradStrategy::OneStepProx}};
      sub->add_option("--hypergradient", o.cfg.strategy, "fd | onestep")
          ->transform(CLI::CheckedTransformer(strategies, CLI::ignore_case));
      sub->add_flag("--scaling-warn-only", o.cfg.scaling_warn_only,
                    "warn instead of abort when zeta leaves S_x indefinite");
      sub->add_option("--grid-l1", o.space.grid_l1, "grid points along lambda1");
      sub->add_option("--grid-l2", o.space.grid_l2, "grid points along lambda2");
      sub->add_option("--search-lo", o.space.l1_lo, "search-space lower bound (both axes)");
      sub->add_option("--search-hi", o.space.l1_hi, "search-space upper bound (both axes)");
      sub->add_option("--random-budget", o.space.n_samples, "random-search samples");
      sub->add_flag("--print-config", o.print_config, "echo the resolved configuration");
    }
  };

  auto* gen = app.add_subcommand("generate", "write a dataset directory");
  add_common(gen, false);

  auto* run = app.add_subcommand("run", "run one method for several repetitions");
  run->add_option("--method", o.method, "admm_bda | pgm_bda | grid | random");
  add_common(run, true);

  auto* bench = app.add_subcommand("benchmark", "run all applicable methods on shared data");
  add_common(bench, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    // preset first, explicit flags override
    if (!o.preset.empty()) {
      const auto p = bilevel::find_preset(o.preset);
      if (!p) {
        std::cerr << "unknown preset: " << o.preset << "\n";
        return kExitUsage;
      }
      bilevel::SolverConfig resolved = p->cfg;
      CLI::App* sub = run->parsed() ? run : bench;
      auto keep = [&](const char* flag, auto member, auto CommonOpts::*src) {
        (void)flag;
        (void)member;
        (void)src;
      };
      (void)keep;
      if (!sub->count("--sigma")) o.cfg.scaling.sigma = resolved.scaling.sigma;
      if (!sub->count("--zeta")) o.cfg.scaling.zeta = resolved.scaling.zeta;
      if (!sub->count("--eta")) o.cfg.scaling.eta = resolved.scaling.eta;
      if (!sub->count("--mu")) o.cfg.mu = resolved.mu;
      if (!sub->count("--s")) o.cfg.s = resolved.s;
      if (!sub->count("--alpha")) o.cfg.alpha = resolved.alpha;
      if (!sub->count("--inner-budget")) o.cfg.inner_budget.base = resolved.inner_budget.base;
      if (!sub->count("--inner-budget-delta")) o.cfg.inner_budget.delta = resolved.inner_budget.delta;
      if (!sub->count("--step-policy")) o.cfg.step_policy = resolved.step_policy;
      if (!sub->count("--scaling-warn-only")) o.cfg.scaling_warn_only = resolved.scaling_warn_only;
      if (!sub->count("--model"))
        o.model = p->model == bilevel::ModelKind::ElasticNet ? "en" : "gen";
      if (!sub->count("--q"))
        o.q = p->q == bilevel::LossNorm::L1 ? "1" : (p->q == bilevel::LossNorm::Linf ? "inf" : "2");
      if (!sub->count("--noise")) o.noise = bilevel::noise_name(p->noise);
      if (!sub->count("--random-budget")) o.space.n_samples = p->random_budget;
    }
    o.synth.noise_kind = parse_noise(o.noise);

    bilevel::ModelKind kind;
    if (o.model == "en") {
      kind = bilevel::ModelKind::ElasticNet;
    } else if (o.model == "gen") {
      kind = bilevel::ModelKind::GeneralizedElasticNet;
    } else {
      std::cerr << "unknown model: " << o.model << "\n";
      return kExitUsage;
    }
    const bilevel::LossNorm q = parse_q(o.q);
    if (o.method == "pgm_bda" && kind != bilevel::ModelKind::ElasticNet && run->parsed()) {
      std::cerr << "pgm_bda requires --model en\n";
      return kExitUsage;
    }
    if (o.reps < 1) {
      std::cerr << "--reps must be >= 1\n";
      return kExitUsage;
    }

    if (o.print_config) std::cout << config_echo(o, kind, q).dump(2) << "\n";

    if (gen->parsed()) return cmd_generate(o);
    if (run->parsed()) return cmd_run(o, kind, q);
    if (bench->parsed()) return cmd_benchmark(o, kind, q);
    return kExitUsage;
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kExitUsage;
  } catch (const bilevel::DivergedError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}
