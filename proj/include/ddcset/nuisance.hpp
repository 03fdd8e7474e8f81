#pragma once

#include <memory>
#include <vector>

#include "ddcset/model.hpp"

namespace ddcset {

// Per-agent view of the estimated (or true) nuisances, flattened so the
// trajectory kernel runs on plain scalars. Exogenous covariates never change
// along a path, so the CCP logit and the transition mean reduce to functions
// of mileage alone: either affine (regression models) or a tabulated value
// gap (dynamic-programming oracle).
struct AgentDynamics {
  ModelKind kind = ModelKind::kBusReplacement;
  double beta = 0.9;
  double s_lo = 0.0, s_hi = 15.0;

  // own CCP
  bool table_mode = false;
  double lgt_a = 0.0, lgt_s = 0.0;  // logit(ccp)(s) = lgt_a + lgt_s * s
  const double* gap_grid = nullptr; // table of v(1,s) - v(0,s)
  int gn = 0;
  double g_s0 = 0.0, g_ds = 1.0;
  double clip_lgt = kInf;           // |logit| cap implied by eps_clip

  // transition (bus model)
  double rho_a = 0.0, rho_s = 0.0;  // mean = rho_a + rho_s * s, then cap
  double rho_cap = kInf;
  double sigma_e = 1.0;

  // entry game opponent
  double gamma_p = 0.5;
  double delta0 = 0.0;  // known interaction level at a=0

  // direction fields used by the orthogonality checker; zero in normal runs
  double pert_ccp_amp = 0.0;   // ccp += amp * sin(s) * interior damp
  double pert_rho_amp = 0.0;   // rho += amp * cos(s)

  double gap_interp(double s) const {
    double t = (s - g_s0) / g_ds;
    if (t <= 0.0) return gap_grid[0];
    if (t >= gn - 1) return gap_grid[gn - 1];
    int i = static_cast<int>(t);
    double f = t - i;
    return gap_grid[i] * (1.0 - f) + gap_grid[i + 1] * f;
  }

  // keeps the perturbed path strictly inside (0,1) and differentiable in r
  static double interior_damp(double g) {
    double d = 1.0;
    if ((1.0 - g) / 0.03 < d) d = (1.0 - g) / 0.03;
    if (g / 0.03 < d) d = g / 0.03;
    return d;
  }

  double ccp(double s) const {
    double g;
    if (table_mode) {
      g = logistic(clip(gap_interp(s), -clip_lgt, clip_lgt));
    } else {
      g = logistic(clip(lgt_a + lgt_s * s, -clip_lgt, clip_lgt));
    }
    if (pert_ccp_amp != 0.0) {
      g += pert_ccp_amp * std::sin(s) * interior_damp(g);
      g = clip(g, 1e-9, 1.0 - 1e-9);
    }
    return g;
  }

  // threshold on eps(1)-eps(0) above which the cutoff policy maintains
  double cutoff(double s) const {
    if (pert_ccp_amp == 0.0) {
      if (table_mode) return -clip(gap_interp(s), -clip_lgt, clip_lgt);
      return -clip(lgt_a + lgt_s * s, -clip_lgt, clip_lgt);
    }
    return -logit(ccp(s));
  }

  double rho(double s) const {
    double m = rho_a + rho_s * s;
    if (m > rho_cap) m = rho_cap;
    if (pert_rho_amp != 0.0) m += pert_rho_amp * std::cos(s);
    return m;
  }

  double step(double s, int a, double z) const {
    if (kind == ModelKind::kEntryGame) {
      if (a == 1) return s + 1.0 > s_hi ? s_hi : s + 1.0;
      return 1.0;
    }
    if (a == 1) return clip(rho(s) + sigma_e * z, s_lo, s_hi);
    return 1.0;
  }
};

// Owns the per-agent table row when one is needed.
struct AgentContext {
  AgentDynamics dyn;
  std::vector<double> gap_storage;
};

class NuisanceView {
 public:
  virtual ~NuisanceView() = default;
  // obs_index resolves the cross-fit fold; ignored by oracle views
  virtual double ccp(size_t obs_index, const StateVector& w) const = 0;
  virtual double transition_mean(size_t obs_index, const StateVector& w) const = 0;
  virtual double sigma_e(size_t obs_index) const = 0;
  virtual double ccp_opponent(size_t obs_index, const StateVector& w) const = 0;
  virtual AgentContext compile(size_t obs_index, const StateVector& w) const = 0;
};

// Applies the orthogonality checker's directional shift on top of a base view.
class PerturbedNuisance : public NuisanceView {
 public:
  PerturbedNuisance(const NuisanceView& base, double ccp_amp, double rho_amp)
      : base_(base), ccp_amp_(ccp_amp), rho_amp_(rho_amp) {}

  double ccp(size_t i, const StateVector& w) const override {
    double g = base_.ccp(i, w);
    if (ccp_amp_ != 0.0) {
      g += ccp_amp_ * std::sin(w.s) * AgentDynamics::interior_damp(g);
      g = clip(g, 1e-9, 1.0 - 1e-9);
    }
    return g;
  }
  double transition_mean(size_t i, const StateVector& w) const override {
    return base_.transition_mean(i, w) + rho_amp_ * std::cos(w.s);
  }
  double sigma_e(size_t i) const override { return base_.sigma_e(i); }
  double ccp_opponent(size_t i, const StateVector& w) const override {
    return base_.ccp_opponent(i, w);
  }
  AgentContext compile(size_t i, const StateVector& w) const override {
    AgentContext ctx = base_.compile(i, w);
    ctx.dyn.pert_ccp_amp += ccp_amp_;
    ctx.dyn.pert_rho_amp += rho_amp_;
    return ctx;
  }

 private:
  const NuisanceView& base_;
  double ccp_amp_;
  double rho_amp_;
};

}  // namespace ddcset
