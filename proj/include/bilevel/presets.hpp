#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bilevel/admm_bda.hpp"
#include "bilevel/data.hpp"

namespace bilevel {

//! One experiment bundle: solver constants plus the model/noise pairing and
//! the search budget used by the matching comparison runs.
struct Preset {
  std::string name;
  ModelKind model = ModelKind::ElasticNet;
  LossNorm q = LossNorm::L2;
  NoiseKind noise = NoiseKind::Gaussian;
  int random_budget = 30;
  SolverConfig cfg;
};

inline SolverConfig preset_base_config() {
  SolverConfig cfg;
  cfg.scaling.zeta = 5e-10;
  cfg.scaling.eta = 1e-10;
  cfg.inner_budget = {500, 0};
  cfg.step_policy = StepPolicy::Clamp;  // experiment s values sit far above the bound
  cfg.scaling_warn_only = true;         // experiment zeta leaves S_x indefinite
  cfg.tol = 1e-4;
  cfg.max_outer = 100;
  cfg.alpha = 1e-3;
  cfg.lambda0 = {1e-3, 1e-3};
  return cfg;
}

inline std::vector<Preset> all_presets() {
  std::vector<Preset> out;
  auto add = [&](const std::string& name, ModelKind model, LossNorm q, NoiseKind noise,
                 int budget, double sigma, double s, double mu) {
    Preset p;
    p.name = name;
    p.model = model;
    p.q = q;
    p.noise = noise;
    p.random_budget = budget;
    p.cfg = preset_base_config();
    p.cfg.scaling.sigma = sigma;
    p.cfg.s = s;
    p.cfg.mu = mu;
    p.cfg.plain_max_blocks = 8;  // per-point budget for the search baselines
    out.push_back(std::move(p));
  };
  using MK = ModelKind;
  using LN = LossNorm;
  using NK = NoiseKind;
  add("en-synth", MK::ElasticNet, LN::L2, NK::Gaussian, 30, 1e-4, 1.0, 0.7);
  add("gen-synth-q1", MK::GeneralizedElasticNet, LN::L1, NK::Laplace, 50, 1e-4, 1.0, 0.5);
  add("gen-synth-q2", MK::GeneralizedElasticNet, LN::L2, NK::Gaussian, 50, 1e-4, 1.0, 0.5);
  add("gen-synth-qinf", MK::GeneralizedElasticNet, LN::Linf, NK::Uniform, 50, 1e-5, 1.0, 0.5);
  add("en-real", MK::ElasticNet, LN::L2, NK::Gaussian, 30, 1e-5, 1e-2, 0.9);
  add("gen-real-q1", MK::GeneralizedElasticNet, LN::L1, NK::Laplace, 50, 1e-6, 1e-4, 0.9);
  add("gen-real-q2", MK::GeneralizedElasticNet, LN::L2, NK::Gaussian, 50, 1e-6, 1e-4, 0.9);
  add("gen-real-qinf", MK::GeneralizedElasticNet, LN::Linf, NK::Uniform, 50, 1e-7, 1e-4, 0.9);
  return out;
}

inline std::optional<Preset> find_preset(const std::string& name) {
  for (auto& p : all_presets())
    if (p.name == name) return p;
  return std::nullopt;
}

}  // namespace bilevel
