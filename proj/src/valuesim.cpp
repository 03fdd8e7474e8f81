#include "ddcset/valuesim.hpp"

namespace ddcset {

int act(const PolicySpec& policy, double gamma_hat, const ShockDraw& eps,
        double coin_uniform) {
  if (policy.kind == PolicySpec::Kind::kCoinToss)
    return coin_uniform < 0.5 ? 1 : 0;
  double cutoff = -hotz_miller_gap(gamma_hat) + policy.dev0;
  return eps.e1 - eps.e0 >= cutoff ? 1 : 0;
}

double expected_selected_shock(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::domain_error("expected_selected_shock: gamma must lie in (0,1)");
  return -std::log(gamma) - (1.0 - gamma) * std::log((1.0 - gamma) / gamma);
}

double expected_selected_shock_derivative(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::domain_error(
        "expected_selected_shock_derivative: gamma must lie in (0,1)");
  return -2.0 / gamma - std::log(gamma / (1.0 - gamma));
}

namespace {

struct PathAccum {
  double p1_r = 0.0;   // coefficient on R
  double p1_mu = 0.0;  // coefficient on mu
  double p1_dg = 0.0;  // coefficient on delta1-delta0 (entry game)
  double p2 = 0.0;     // shock stream plus known utility terms

  void add(const PathAccum& o) {
    p1_r += o.p1_r;
    p1_mu += o.p1_mu;
    p1_dg += o.p1_dg;
    p2 += o.p2;
  }
  void scale(double c) {
    p1_r *= c;
    p1_mu *= c;
    p1_dg *= c;
    p2 *= c;
  }
};

// One trajectory. Draw layout per step is fixed (three uniforms plus the
// coin stream for the coin-toss policy), so every policy and every
// finite-difference variant consumes identical shocks.
PathAccum run_path(const AgentDynamics& dyn, const PolicySpec& pol,
                   double s_start, int horizon, RngStream traj, RngStream coin) {
  PathAccum acc;
  const bool entry = dyn.kind == ModelKind::kEntryGame;
  const bool is_coin = pol.kind == PolicySpec::Kind::kCoinToss;
  double s = s_start;
  double disc = 1.0;
  for (int t = 0; t < horizon; ++t) {
    const double u_e0 = traj.uniform();
    const double u_e1 = traj.uniform();
    const double u_3 = traj.uniform();  // transition noise or opponent draw
    const double e0 = -std::log(-std::log(u_e0));
    const double e1 = -std::log(-std::log(u_e1));

    int a;
    if (is_coin) {
      a = coin.uniform() < 0.5 ? 1 : 0;
    } else {
      a = (e1 - e0 >= dyn.cutoff(s) + pol.dev0) ? 1 : 0;
    }

    acc.p1_r -= disc * (1.0 - a);
    acc.p2 += disc * (a == 1 ? e1 : e0);
    if (a == 1) acc.p1_mu -= disc * s;

    if (entry) {
      int ap = u_3 < dyn.gamma_p ? 1 : 0;
      if (ap) {
        acc.p2 += disc * dyn.delta0;
        if (a == 1) acc.p1_dg += disc;
      }
      s = dyn.step(s, a, 0.0);
    } else {
      s = dyn.step(s, a, a == 1 ? normal_icdf(u_3) : 0.0);
    }
    disc *= dyn.beta;
  }
  return acc;
}

ValueBasis average_paths(const AgentDynamics& dyn, const PolicySpec& pol,
                         double s_start, int horizon, int n_paths,
                         uint64_t base_seed, uint64_t tag, uint64_t unit,
                         double fd_shift, bool from_keep_draw, double s_obs) {
  PathAccum total;
  for (int p = 0; p < n_paths; ++p) {
    double s0 = s_start;
    if (from_keep_draw) {
      RngStream start(Rp::kCorrStart, {base_seed, unit, static_cast<uint64_t>(p)});
      s0 = dyn.step(s_obs, 1, normal_icdf(start.uniform()));
    }
    RngStream traj(Rp::kCorrTraj, {base_seed, tag, unit, static_cast<uint64_t>(p)});
    RngStream coin(Rp::kCoin, {base_seed, tag, unit, static_cast<uint64_t>(p)});
    total.add(run_path(dyn, pol, s0 + fd_shift, horizon, traj, coin));
  }
  total.scale(1.0 / n_paths);
  ValueBasis b;
  b.psi1 = {total.p1_r, total.p1_mu, total.p1_dg};
  b.psi2 = total.p2;
  b.horizon = horizon;
  b.n_paths = n_paths;
  b.seed_key = mix_key({base_seed, tag, unit});
  return b;
}

}  // namespace

ValueBasis forward_value_basis(const AgentDynamics& dyn, const PolicySpec& policy,
                               double s0, int horizon, int n_paths,
                               uint64_t base_seed, uint64_t unit, SimTag tag) {
  PathAccum total;
  for (int p = 0; p < n_paths; ++p) {
    RngStream traj(Rp::kMoment, {base_seed, static_cast<uint64_t>(tag), unit,
                                 static_cast<uint64_t>(p)});
    RngStream coin(Rp::kCoin, {base_seed, static_cast<uint64_t>(tag), unit,
                               static_cast<uint64_t>(p)});
    total.add(run_path(dyn, policy, s0, horizon, traj, coin));
  }
  total.scale(1.0 / n_paths);
  ValueBasis b;
  b.psi1 = {total.p1_r, total.p1_mu, total.p1_dg};
  b.psi2 = total.p2;
  b.horizon = horizon;
  b.n_paths = n_paths;
  b.seed_key = mix_key({base_seed, static_cast<uint64_t>(tag), unit});
  return b;
}

double forward_value_direct(const AgentDynamics& dyn, const PolicySpec& policy,
                            const Vec3& theta, double delta0, double s0,
                            int horizon, int n_paths, uint64_t base_seed,
                            uint64_t unit, SimTag tag) {
  const bool entry = dyn.kind == ModelKind::kEntryGame;
  const bool is_coin = policy.kind == PolicySpec::Kind::kCoinToss;
  double total = 0.0;
  for (int p = 0; p < n_paths; ++p) {
    RngStream traj(Rp::kMoment, {base_seed, static_cast<uint64_t>(tag), unit,
                                 static_cast<uint64_t>(p)});
    RngStream coin(Rp::kCoin, {base_seed, static_cast<uint64_t>(tag), unit,
                               static_cast<uint64_t>(p)});
    double s = s0;
    double disc = 1.0;
    double v = 0.0;
    for (int t = 0; t < horizon; ++t) {
      const double u_e0 = traj.uniform();
      const double u_e1 = traj.uniform();
      const double u_3 = traj.uniform();
      const double e0 = -std::log(-std::log(u_e0));
      const double e1 = -std::log(-std::log(u_e1));
      int a;
      if (is_coin) {
        a = coin.uniform() < 0.5 ? 1 : 0;
      } else {
        a = (e1 - e0 >= dyn.cutoff(s) + policy.dev0) ? 1 : 0;
      }
      double util = a == 1 ? -theta[1] * s + e1 : -theta[0] + e0;
      if (entry) {
        int ap = u_3 < dyn.gamma_p ? 1 : 0;
        if (ap) util += delta0 + (a == 1 ? theta[2] : 0.0);
        v += disc * util;
        s = dyn.step(s, a, 0.0);
      } else {
        v += disc * util;
        s = dyn.step(s, a, a == 1 ? normal_icdf(u_3) : 0.0);
      }
      disc *= dyn.beta;
    }
    total += v;
  }
  return total / n_paths;
}

ContinuationBases continuation_bases(const AgentDynamics& dyn,
                                     const PolicySpec& policy, double s,
                                     int horizon, int n_paths, double h_fd,
                                     uint64_t base_seed, uint64_t unit) {
  if (h_fd < 1e-3)
    throw std::invalid_argument("continuation_bases: h_fd below noise guard");
  ContinuationBases out;
  const uint64_t keep_tag = static_cast<uint64_t>(SimTag::kContKeep);
  const uint64_t reset_tag = static_cast<uint64_t>(SimTag::kContReset);
  out.keep = average_paths(dyn, policy, 0.0, horizon, n_paths, base_seed,
                           keep_tag, unit, 0.0, true, s);
  if (dyn.kind == ModelKind::kEntryGame) {
    out.keep_plus = out.keep;
    out.keep_minus = out.keep;
  } else {
    out.keep_plus = average_paths(dyn, policy, 0.0, horizon, n_paths, base_seed,
                                  keep_tag, unit, h_fd, true, s);
    out.keep_minus = average_paths(dyn, policy, 0.0, horizon, n_paths, base_seed,
                                   keep_tag, unit, -h_fd, true, s);
  }
  out.reset = average_paths(dyn, policy, 1.0, horizon, n_paths, base_seed,
                            reset_tag, unit, 0.0, false, 0.0);
  return out;
}

double continuation_value(const AgentDynamics& dyn, const PolicySpec& policy,
                          double s, int a, const Vec3& theta, int horizon,
                          int n_paths, uint64_t base_seed, uint64_t unit) {
  if (a == 0) {
    ValueBasis reset =
        average_paths(dyn, policy, 1.0, horizon, n_paths, base_seed,
                      static_cast<uint64_t>(SimTag::kContReset), unit, 0.0,
                      false, 0.0);
    return reset.value(theta);
  }
  ValueBasis keep =
      average_paths(dyn, policy, 0.0, horizon, n_paths, base_seed,
                    static_cast<uint64_t>(SimTag::kContKeep), unit, 0.0, true, s);
  return keep.value(theta);
}

}  // namespace ddcset
