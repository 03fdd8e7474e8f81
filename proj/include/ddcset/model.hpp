#pragma once

#include <cstdint>
#include <vector>

#include "ddcset/common.hpp"

namespace ddcset {

enum class ModelKind { kBusReplacement, kEntryGame };

// Structural cost parameters. The entry game adds the interaction levels
// (delta0, delta1); its target vector is (R, mu, delta1 - delta0) and delta0
// is treated as a known constant.
struct StructuralParams {
  double replacement_cost = 5.0;   // R
  double maintenance_slope = 1.0;  // mu
  double delta0 = 0.0;
  double delta1 = 0.0;

  Vec3 theta(ModelKind kind) const {
    if (kind == ModelKind::kEntryGame)
      return {replacement_cost, maintenance_slope, delta1 - delta0};
    return {replacement_cost, maintenance_slope, 0.0};
  }
};

struct ModelSpec {
  ModelKind kind = ModelKind::kBusReplacement;
  double beta = 0.9;
  int d_x = 50;
  double s_lo = 0.0;
  double s_hi = 15.0;
  double transition_autoreg = 0.7;
  std::vector<double> transition_coeffs;  // length d_x, sparse
  double transition_intercept = 1.0;
  double noise_std = 0.5;
  std::vector<double> opponent_coeffs;  // entry game: logit coefs of gamma_P

  int theta_dim() const { return kind == ModelKind::kEntryGame ? 3 : 2; }

  void validate() const {
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must be in (0,1)");
    if (!(s_lo < s_hi)) throw std::invalid_argument("mileage bounds must satisfy s_lo < s_hi");
    if (!(noise_std > 0.0)) throw std::invalid_argument("noise_std must be > 0");
    if (d_x < 0) throw std::invalid_argument("d_x must be >= 0");
  }

  double dot_transition(const std::vector<double>& x) const {
    double s = 0.0;
    size_t m = std::min(x.size(), transition_coeffs.size());
    for (size_t j = 0; j < m; ++j) s += transition_coeffs[j] * x[j];
    return s;
  }
  double dot_opponent(const std::vector<double>& x) const {
    double s = 0.0;
    size_t m = std::min(x.size(), opponent_coeffs.size());
    for (size_t j = 0; j < m; ++j) s += opponent_coeffs[j] * x[j];
    return s;
  }

  // conditional mean of next mileage after maintenance, before noise
  double rho0(double s, double x_dot_b) const {
    double v = transition_autoreg * s + x_dot_b + transition_intercept;
    return v > s_hi ? s_hi : v;
  }
};

// Default synthetic design: sparse transition loadings b_j = 0.5/j for j<=5.
ModelSpec default_bus_model();
ModelSpec default_entry_model();
StructuralParams default_bus_truth();
StructuralParams default_entry_truth();

struct StateVector {
  double s = 0.0;
  std::vector<double> x;
};

struct Observation {
  StateVector w;
  int a = 0;        // 1 = maintain/keep, 0 = replace
  int a_p = 0;      // entry game: opponent action
  double s_next = 0.0;

  StateVector w_next() const { return StateVector{s_next, w.x}; }
};

struct PanelDataset {
  ModelSpec model;
  StructuralParams truth;
  uint64_t seed = 0;
  std::vector<Observation> obs;

  size_t size() const { return obs.size(); }
};

}  // namespace ddcset
