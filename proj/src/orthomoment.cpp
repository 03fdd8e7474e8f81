#include "ddcset/orthomoment.hpp"

#include <cstdio>
#include <fstream>

namespace ddcset {

namespace {

Affine basis_affine(const ValueBasis& b) {
  Affine a;
  a.lin = b.psi1;
  a.cst = b.psi2;
  return a;
}

// probability that a cutoff policy with shift dev0 maintains, given the
// inverted-gap logit of the estimated CCP
double policy_ccp(const PolicySpec& pol, double zbar) {
  if (pol.kind == PolicySpec::Kind::kCoinToss) return 0.5;
  return logistic(zbar - pol.dev0);
}

}  // namespace

MomentBuild build_moments(const PanelDataset& panel, const NuisanceView& nuis,
                          const MomentConfig& cfg, const SimConfig& sim,
                          bool with_corrections) {
  if (cfg.policies.empty())
    throw std::invalid_argument("build_moments: need at least one policy");
  const ModelSpec& model = panel.model;
  const bool entry = model.kind == ModelKind::kEntryGame;
  const int L = cfg.n_moments();
  const int H = sim.horizon(model.beta);
  const PolicySpec optimal = PolicySpec::optimal();

  MomentBuild out;
  out.cfg = cfg;
  out.theta_dim = model.theta_dim();
  out.obs.resize(panel.size());

  for (size_t i = 0; i < panel.size(); ++i) {
    const Observation& o = panel.obs[i];
    AgentContext ctx = nuis.compile(i, o.w);
    const AgentDynamics& dyn = ctx.dyn;
    ObsMomentPieces& pc = out.obs[i];
    pc.m.resize(L);
    pc.ccp_base.resize(L);
    pc.trans.resize(L);
    pc.opp.resize(L);

    ValueBasis b_opt =
        forward_value_basis(dyn, optimal, o.w.s, H, sim.n_paths, sim.base_seed, i);
    for (int l = 0; l < L; ++l) {
      ValueBasis b_l = forward_value_basis(dyn, cfg.policies[l], o.w.s, H,
                                           sim.n_paths, sim.base_seed, i);
      pc.m[l] = basis_affine(b_l) - basis_affine(b_opt);
    }
    if (!with_corrections) continue;

    const double gamma_hat = dyn.ccp(o.w.s);
    const double zbar = logit(gamma_hat);
    const double resid_a = (o.a == 1 ? 1.0 : 0.0) - gamma_hat;
    const double inv1mb = 1.0 / (1.0 - model.beta);

    // continuation ingredients per policy (optimal last)
    std::vector<ContinuationBases> cont(L + 1);
    for (int l = 0; l < L; ++l)
      cont[l] = continuation_bases(dyn, cfg.policies[l], o.w.s, H,
                                   sim.n_paths_corr, sim.h_fd, sim.base_seed, i);
    cont[L] = continuation_bases(dyn, optimal, o.w.s, H, sim.n_paths_corr,
                                 sim.h_fd, sim.base_seed, i);

    // Riesz multiplier of the own-CCP direction for one cutoff policy
    auto gamma_mult_envelope = [&](const PolicySpec& pol,
                                   const ContinuationBases& cb) -> Affine {
      Affine g;
      if (pol.kind == PolicySpec::Kind::kCoinToss) return g;  // zero
      Affine dv = basis_affine(cb.keep) - basis_affine(cb.reset);
      g.lin[0] = 1.0;         // +R
      g.lin[1] = -o.w.s;      // -mu s
      if (entry) g.lin[2] = dyn.gamma_p;
      for (int k = 0; k < 3; ++k) g.lin[k] += model.beta * dv.lin[k];
      g.cst = model.beta * dv.cst - zbar + pol.dev0;
      double gp = policy_ccp(pol, zbar);
      double ratio = gp * (1.0 - gp) / (gamma_hat * (1.0 - gamma_hat));
      return g * ratio;
    };

    Affine gamma_opt_env = gamma_mult_envelope(optimal, cont[L]);

    Affine gamma_shifted;  // multiplier with the -2/gamma tail, optimal policy
    {
      Affine dv = basis_affine(cont[L].keep) - basis_affine(cont[L].reset);
      gamma_shifted.lin[0] = 1.0;
      gamma_shifted.lin[1] = -o.w.s;
      if (entry) gamma_shifted.lin[2] = dyn.gamma_p;
      for (int k = 0; k < 3; ++k) gamma_shifted.lin[k] += model.beta * dv.lin[k];
      gamma_shifted.cst = model.beta * dv.cst - 2.0 / gamma_hat - zbar;
    }

    const double rho_hat = entry ? 0.0 : dyn.rho(o.w.s);
    const double resid_rho = (o.a == 1 && !entry) ? o.s_next - rho_hat : 0.0;

    auto trans_weight = [&](const PolicySpec& pol) -> double {
      double gp = policy_ccp(pol, zbar);
      switch (cfg.trans_form) {
        case TransCorrectionForm::kPropensity:
          return gp / gamma_hat;
        case TransCorrectionForm::kPolicyWeight:
          return gp;
        case TransCorrectionForm::kConditional:
          return 1.0;
      }
      return 1.0;
    };
    auto pi_affine = [&](const ContinuationBases& cb) -> Affine {
      return (basis_affine(cb.keep_plus) - basis_affine(cb.keep_minus)) *
             (1.0 / (2.0 * sim.h_fd));
    };

    Affine pi_opt;
    double w_opt = 0.0;
    if (!entry) {
      pi_opt = pi_affine(cont[L]);
      w_opt = trans_weight(optimal);
    }

    for (int l = 0; l < L; ++l) {
      const PolicySpec& pol = cfg.policies[l];
      if (cfg.gamma_form == CcpGammaForm::kEnvelope) {
        Affine diff = gamma_opt_env - gamma_mult_envelope(pol, cont[l]);
        pc.ccp_base[l] = diff * (inv1mb * resid_a);
      } else {
        pc.ccp_base[l] = gamma_shifted * (inv1mb * resid_a);
      }
      if (!entry) {
        Affine tl = pi_affine(cont[l]) * trans_weight(pol) - pi_opt * w_opt;
        pc.trans[l] = tl * (model.beta * inv1mb * resid_rho);
      } else {
        double gp_l = policy_ccp(pol, zbar);
        double resid_p = (o.a_p == 1 ? 1.0 : 0.0) - dyn.gamma_p;
        pc.opp[l].lin[2] = inv1mb * (gp_l - gamma_hat) * resid_p;
      }
    }
  }
  return out;
}

double gamma_big(const StateVector& w, const Vec3& theta, const NuisanceView& nuis,
                 const SimConfig& sim, double beta, uint64_t unit) {
  AgentContext ctx = nuis.compile(unit, w);
  const AgentDynamics& dyn = ctx.dyn;
  const int H = sim.horizon(beta);
  ContinuationBases cb =
      continuation_bases(dyn, PolicySpec::optimal(), w.s, H, sim.n_paths_corr,
                         sim.h_fd, sim.base_seed, unit);
  double gamma_hat = dyn.ccp(w.s);
  double dv = cb.keep.value(theta) - cb.reset.value(theta);
  double base = -theta[1] * w.s + theta[0];
  if (dyn.kind == ModelKind::kEntryGame) base += theta[2] * dyn.gamma_p;
  return base + beta * dv - 2.0 / gamma_hat - hotz_miller_gap(gamma_hat);
}

std::vector<double> moment_naive(const MomentBuild& b, size_t i, const Vec3& theta) {
  std::vector<double> v(b.cfg.n_moments());
  for (int l = 0; l < b.cfg.n_moments(); ++l) v[l] = b.obs[i].m[l].eval(theta);
  return v;
}

std::vector<double> moment_alpha(const MomentBuild& b, size_t i, const Vec3& theta) {
  std::vector<double> v(b.cfg.n_moments());
  for (int l = 0; l < b.cfg.n_moments(); ++l)
    v[l] = b.obs[i].alpha(l, b.cfg).eval(theta);
  return v;
}

std::vector<double> moment_orthogonal(const MomentBuild& b, size_t i,
                                      const Vec3& theta) {
  std::vector<double> v(b.cfg.n_moments());
  for (int l = 0; l < b.cfg.n_moments(); ++l)
    v[l] = b.obs[i].g(l, b.cfg).eval(theta);
  return v;
}

std::vector<MeanSe> mean_moment(const MomentBuild& b, const Vec3& theta,
                                MomentPart part) {
  const int L = b.cfg.n_moments();
  std::vector<MeanSe> out(L);
  std::vector<double> vals(b.size());
  for (int l = 0; l < L; ++l) {
    for (size_t i = 0; i < b.size(); ++i) {
      switch (part) {
        case MomentPart::kNaive:
          vals[i] = b.obs[i].m[l].eval(theta);
          break;
        case MomentPart::kAlpha:
          vals[i] = b.obs[i].alpha(l, b.cfg).eval(theta);
          break;
        case MomentPart::kOrthogonal:
          vals[i] = b.obs[i].g(l, b.cfg).eval(theta);
          break;
      }
    }
    out[l] = mean_se(vals);
  }
  return out;
}

void write_moment_dump(const MomentBuild& b, const Vec3& theta,
                       const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_moment_dump: cannot open " + path);
  f << "obs,theta_R,theta_mu,l,m,alpha,g\n";
  char buf[160];
  for (size_t i = 0; i < b.size(); ++i) {
    for (int l = 0; l < b.cfg.n_moments(); ++l) {
      double m = b.obs[i].m[l].eval(theta);
      double a = b.obs[i].alpha(l, b.cfg).eval(theta);
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%d,%.17g,%.17g,%.17g\n", i,
                    theta[0], theta[1], l, m, a, m + a);
      f << buf;
    }
  }
}

namespace {

// weights of the r-slope at 0 of a quadratic least-squares fit on r_grid
std::vector<double> quad_slope_weights(const std::vector<double>& r) {
  const size_t n = r.size();
  if (n < 3) throw std::invalid_argument("orthogonality_check: need >= 3 r points");
  // normal equations for (1, r, r^2)
  double s0 = static_cast<double>(n), s1 = 0, s2 = 0, s3 = 0, s4 = 0;
  for (double v : r) {
    s1 += v;
    s2 += v * v;
    s3 += v * v * v;
    s4 += v * v * v * v;
  }
  double m[9] = {s0, s1, s2, s1, s2, s3, s2, s3, s4};
  // invert the 3x3 by cofactors
  double det = m[0] * (m[4] * m[8] - m[5] * m[7]) -
               m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
  if (std::abs(det) < 1e-14)
    throw std::runtime_error("orthogonality_check: degenerate r grid");
  double inv10 = (m[5] * m[6] - m[3] * m[8]) / det;
  double inv11 = (m[0] * m[8] - m[2] * m[6]) / det;
  double inv12 = (m[2] * m[3] - m[0] * m[5]) / det;
  std::vector<double> w(n);
  for (size_t k = 0; k < n; ++k)
    w[k] = inv10 + inv11 * r[k] + inv12 * r[k] * r[k];
  return w;
}

}  // namespace

std::vector<OrthoSlopes> orthogonality_check_multi(
    const PanelDataset& panel, const NuisanceView& truth,
    const std::vector<Vec3>& thetas, const OrthoDirection& dir,
    const std::vector<double>& r_grid, const MomentConfig& cfg,
    const SimConfig& sim) {
  if (dir.ccp_amp == 0.0 && dir.rho_amp == 0.0) {
    // constant path: all slopes identically zero
    std::vector<OrthoSlopes> zero(thetas.size());
    for (OrthoSlopes& s : zero) {
      int L = cfg.n_moments();
      s.slope_naive.assign(L, 0.0);
      s.se_naive.assign(L, 0.0);
      s.slope_orth.assign(L, 0.0);
      s.se_orth.assign(L, 0.0);
      s.slope_flipped.assign(L, 0.0);
    }
    return zero;
  }

  std::vector<MomentBuild> builds;
  builds.reserve(r_grid.size());
  for (double r : r_grid) {
    PerturbedNuisance pert(truth, r * dir.ccp_amp, r * dir.rho_amp);
    builds.push_back(build_moments(panel, pert, cfg, sim, true));
  }
  const std::vector<double> w = quad_slope_weights(r_grid);
  const size_t n = panel.size();
  const int L = cfg.n_moments();

  MomentConfig flipped = cfg;
  flipped.sign_convention = -cfg.sign_convention;

  std::vector<OrthoSlopes> out(thetas.size());
  std::vector<double> sl_m(n), sl_g(n), sl_f(n);
  for (size_t t = 0; t < thetas.size(); ++t) {
    OrthoSlopes& os = out[t];
    os.slope_naive.resize(L);
    os.se_naive.resize(L);
    os.slope_orth.resize(L);
    os.se_orth.resize(L);
    os.slope_flipped.resize(L);
    for (int l = 0; l < L; ++l) {
      for (size_t i = 0; i < n; ++i) {
        double am = 0.0, ag = 0.0, af = 0.0;
        for (size_t k = 0; k < r_grid.size(); ++k) {
          const ObsMomentPieces& pc = builds[k].obs[i];
          double mv = pc.m[l].eval(thetas[t]);
          am += w[k] * mv;
          ag += w[k] * (mv + pc.alpha(l, cfg).eval(thetas[t]));
          af += w[k] * (mv + pc.alpha(l, flipped).eval(thetas[t]));
        }
        sl_m[i] = am;
        sl_g[i] = ag;
        sl_f[i] = af;
      }
      MeanSe mm = mean_se(sl_m), gg = mean_se(sl_g), ff = mean_se(sl_f);
      os.slope_naive[l] = mm.value;
      os.se_naive[l] = mm.se;
      os.slope_orth[l] = gg.value;
      os.se_orth[l] = gg.se;
      os.slope_flipped[l] = ff.value;
    }
  }
  return out;
}

OrthoSlopes orthogonality_check(const PanelDataset& panel,
                                const NuisanceView& truth, const Vec3& theta,
                                const OrthoDirection& dir,
                                const std::vector<double>& r_grid,
                                const MomentConfig& cfg, const SimConfig& sim) {
  return orthogonality_check_multi(panel, truth, {theta}, dir, r_grid, cfg,
                                   sim)[0];
}

}  // namespace ddcset
