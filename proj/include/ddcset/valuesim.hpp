#pragma once

#include "ddcset/nuisance.hpp"

namespace ddcset {

// Markov policies. All cutoff policies maintain iff
//   eps(1) - eps(0) >= -v_gap_hat(w) + dev0,
// where v_gap_hat is the inverted choice-probability gap; the coin toss
// ignores the shocks and flips an independent fair coin.
struct PolicySpec {
  enum class Kind { kOptimalCutoff, kCoinToss, kDeviation };
  Kind kind = Kind::kOptimalCutoff;
  double dev0 = 0.0;  // deviation added on the a=0 side; dev(1,.) == 0

  static PolicySpec optimal() { return {Kind::kOptimalCutoff, 0.0}; }
  static PolicySpec coin_toss() { return {Kind::kCoinToss, 0.0}; }
  static PolicySpec deviation(double d0) { return {Kind::kDeviation, d0}; }
};

struct ShockDraw {
  double e0 = 0.0;
  double e1 = 0.0;
};

// v(1,w) - v(0,w) recovered from the choice probability under T1EV shocks
inline double hotz_miller_gap(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::domain_error("hotz_miller_gap: gamma must lie in (0,1)");
  return std::log(gamma / (1.0 - gamma));
}

// action of a policy given the inverted gap and a shock draw
int act(const PolicySpec& policy, double gamma_hat, const ShockDraw& eps,
        double coin_uniform);

// E[(eps(1)-eps(0)) 1{maintain}] for the inverted-gap cutoff; equals the
// binary entropy of gamma
double expected_selected_shock(double gamma);
// slope used by the shifted correction multiplier: -2/gamma - log(g/(1-g)).
// Deliberately not the calculus derivative of expected_selected_shock; see
// the orthogonality audit, which arbitrates between the two forms.
double expected_selected_shock_derivative(double gamma);

struct SimConfig {
  int n_paths = 300;       // per initial state, moment bases
  int n_paths_corr = 48;   // correction ingredients
  double tol_tail = 1e-3;  // discounted-tail truncation target
  double pi_max = 55.0;    // utility bound from the parameter-grid corners
  double h_fd = 0.05;      // finite-difference step for dV/ds
  uint64_t base_seed = 0;

  int horizon(double beta) const {
    if (!(tol_tail > 0.0) || !(pi_max > 0.0))
      throw std::invalid_argument("SimConfig: tol_tail and pi_max must be > 0");
    double h = std::log(tol_tail * (1.0 - beta) / pi_max) / std::log(beta);
    int H = static_cast<int>(std::ceil(h));
    return H < 1 ? 1 : H;
  }
};

// simulated discounted basis: V(theta) = theta . psi1 + psi2
struct ValueBasis {
  Vec3 psi1{0.0, 0.0, 0.0};
  double psi2 = 0.0;
  int horizon = 0;
  int n_paths = 0;
  uint64_t seed_key = 0;

  double value(const Vec3& theta) const {
    return theta[0] * psi1[0] + theta[1] * psi1[1] + theta[2] * psi1[2] + psi2;
  }
};

// Stream tags: simulations that must share shock draws use the same tag.
enum class SimTag : uint64_t {
  kMoment = 1,
  kContKeep = 2,   // continuation after a forced a=1 draw (and its fd pair)
  kContReset = 3,  // continuation from the reset state
};

// forward-simulated basis from initial mileage s0 under `policy`; paths are
// keyed by (base_seed, tag, unit, path) and reused across theta and policies
ValueBasis forward_value_basis(const AgentDynamics& dyn, const PolicySpec& policy,
                               double s0, int horizon, int n_paths,
                               uint64_t base_seed, uint64_t unit,
                               SimTag tag = SimTag::kMoment);

// same draws, utility evaluated at theta directly (linearity witness)
double forward_value_direct(const AgentDynamics& dyn, const PolicySpec& policy,
                            const Vec3& theta, double delta0, double s0,
                            int horizon, int n_paths, uint64_t base_seed,
                            uint64_t unit, SimTag tag = SimTag::kMoment);

// E[V(w_next; theta; policy) | w, a]: next state drawn from the estimated
// transition (reset when a=0), then forward simulation
double continuation_value(const AgentDynamics& dyn, const PolicySpec& policy,
                          double s, int a, const Vec3& theta, int horizon,
                          int n_paths, uint64_t base_seed, uint64_t unit);

// continuation bases and their finite-difference pair used for dV/ds
struct ContinuationBases {
  ValueBasis keep;        // after a forced a=1 transition draw
  ValueBasis keep_plus;   // started h_fd above the drawn next state
  ValueBasis keep_minus;  // started h_fd below
  ValueBasis reset;       // from the reset state
};
ContinuationBases continuation_bases(const AgentDynamics& dyn,
                                     const PolicySpec& policy, double s,
                                     int horizon, int n_paths, double h_fd,
                                     uint64_t base_seed, uint64_t unit);

}  // namespace ddcset
