#pragma once

#include "ddcset/model.hpp"
#include "ddcset/nuisance.hpp"
#include "ddcset/valuesim.hpp"

namespace ddcset {

// Multiplier used inside the own-CCP bias correction.
//  kEnvelope: per-policy Riesz multiplier built from the selected-shock
//    entropy slope -log(g/(1-g)); it vanishes at the truth for the optimal
//    cutoff and reweights shifted cutoffs by the density ratio.
//  kShifted: single multiplier with the extra -2/gamma term (the form the
//    point-identified shortcut -2/gamma descends from), applied to every
//    coordinate.
// The numerical Gateaux audit is the arbiter between the two; kEnvelope is
// the one that annihilates the slope.
enum class CcpGammaForm { kEnvelope, kShifted };

// Weight on the transition-residual correction for policy sigma~:
//  kPropensity: 1{a=1} gamma^sigma~(w) / gamma_hat(w)  (inverse-propensity)
//  kPolicyWeight: 1{a=1} gamma^sigma~(w)
//  kConditional: 1{a=1}
// All three coincide for the optimal policy up to the observed-action
// weighting; the audit selects kPropensity.
enum class TransCorrectionForm { kPropensity, kPolicyWeight, kConditional };

struct MomentConfig {
  std::vector<PolicySpec> policies;  // suboptimal menu sigma_1..sigma_L
  bool corr_ccp = true;
  bool corr_trans = true;
  bool corr_opp = true;
  double sign_convention = -1.0;
  CcpGammaForm gamma_form = CcpGammaForm::kEnvelope;
  TransCorrectionForm trans_form = TransCorrectionForm::kPropensity;

  int n_moments() const { return static_cast<int>(policies.size()); }

  // coin toss plus replace-prone and replace-averse cutoff shifts
  static MomentConfig defaults() {
    MomentConfig c;
    c.policies = {PolicySpec::coin_toss(), PolicySpec::deviation(1.0),
                  PolicySpec::deviation(-1.0)};
    return c;
  }
};

// Per-observation moment pieces, affine in theta. The spec assembly is
//   g_l = m_l + alpha_l,  alpha_l = trans_l + opp_l - alpha_ccp_l,
// with alpha_ccp_l = sign_convention * ccp_base_l, so flipping the sign
// convention is a re-assembly, not a re-simulation.
struct ObsMomentPieces {
  std::vector<Affine> m;
  std::vector<Affine> ccp_base;  // (1/(1-beta)) Gamma_l (1{a=1} - gamma_hat)
  std::vector<Affine> trans;     // transition correction, net of policies
  std::vector<Affine> opp;       // entry game opponent correction

  Affine alpha(int l, const MomentConfig& cfg) const {
    Affine a;
    if (cfg.corr_trans) a += trans[l];
    if (cfg.corr_opp) a += opp[l];
    if (cfg.corr_ccp) a += ccp_base[l] * (-cfg.sign_convention);
    return a;
  }
  Affine g(int l, const MomentConfig& cfg) const { return m[l] + alpha(l, cfg); }
};

struct MomentBuild {
  MomentConfig cfg;
  int theta_dim = 2;
  std::vector<ObsMomentPieces> obs;

  size_t size() const { return obs.size(); }
};

// Simulates every basis and correction ingredient for each observation.
// `with_corrections=false` skips the correction simulations entirely.
MomentBuild build_moments(const PanelDataset& panel, const NuisanceView& nuis,
                          const MomentConfig& cfg, const SimConfig& sim,
                          bool with_corrections = true);

// spec-level operations -----------------------------------------------------

// Gamma(w;theta) = -mu s + R + beta E[V|w,1] - beta E[V|w,0]
//                  - 2/gamma - log(gamma/(1-gamma))
double gamma_big(const StateVector& w, const Vec3& theta, const NuisanceView& nuis,
                 const SimConfig& sim, double beta, uint64_t unit = 0);

// pure arithmetic pieces, exposed for direct checks
inline double alpha_ccp_value(double gamma_mult, double beta, int a,
                              double gamma_hat, double sign_convention) {
  return sign_convention / (1.0 - beta) * gamma_mult *
         ((a == 1 ? 1.0 : 0.0) - gamma_hat);
}
inline double alpha_trans_value(double pi, double beta, double weight, int a,
                                double s_next, double rho_hat) {
  if (a != 1) return 0.0;
  return beta / (1.0 - beta) * pi * weight * (s_next - rho_hat);
}

std::vector<double> moment_naive(const MomentBuild& b, size_t i, const Vec3& theta);
std::vector<double> moment_orthogonal(const MomentBuild& b, size_t i,
                                      const Vec3& theta);
std::vector<double> moment_alpha(const MomentBuild& b, size_t i, const Vec3& theta);

// sample means with standard errors, per coordinate
enum class MomentPart { kNaive, kAlpha, kOrthogonal };
std::vector<MeanSe> mean_moment(const MomentBuild& b, const Vec3& theta,
                                MomentPart part);

// audit dump: obs,theta_R,theta_mu,l,m,alpha,g
void write_moment_dump(const MomentBuild& b, const Vec3& theta,
                       const std::string& path);

// numerical Gateaux derivative ----------------------------------------------

struct OrthoDirection {
  double ccp_amp = 0.0;  // ccp direction: amp * sin(s), interior-damped
  double rho_amp = 0.0;  // transition direction: amp * cos(s)

  static OrthoDirection ccp(double amp = 0.2) { return {amp, 0.0}; }
  static OrthoDirection transition(double amp = 1.0) { return {0.0, amp}; }
};

struct OrthoSlopes {
  // indexed by moment coordinate
  std::vector<double> slope_naive, se_naive;
  std::vector<double> slope_orth, se_orth;
  std::vector<double> slope_flipped;  // sign_convention negated
};

// Sample-mean moments are re-simulated with common random numbers along the
// path xi_r = xi_0 + r * direction; a quadratic least-squares fit in r gives
// the derivative at r = 0, with standard errors from the per-observation
// slope contributions.
OrthoSlopes orthogonality_check(const PanelDataset& panel,
                                const NuisanceView& truth, const Vec3& theta,
                                const OrthoDirection& dir,
                                const std::vector<double>& r_grid,
                                const MomentConfig& cfg, const SimConfig& sim);

// shared-build variant: evaluates several thetas from one set of simulations
std::vector<OrthoSlopes> orthogonality_check_multi(
    const PanelDataset& panel, const NuisanceView& truth,
    const std::vector<Vec3>& thetas, const OrthoDirection& dir,
    const std::vector<double>& r_grid, const MomentConfig& cfg,
    const SimConfig& sim);

}  // namespace ddcset
