#include "ddcset/firststage.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace ddcset {

CrossFitPlan make_crossfit_plan(size_t n, int k, uint64_t seed) {
  if (k < 2) throw std::invalid_argument("make_crossfit_plan: need K >= 2");
  if (static_cast<size_t>(k) > n)
    throw std::invalid_argument("make_crossfit_plan: K exceeds sample size");
  CrossFitPlan plan;
  plan.n_folds = k;
  plan.seed = seed;
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  RngStream rs(Rp::kFold, {seed, n, static_cast<uint64_t>(k)});
  for (size_t i = n - 1; i > 0; --i) {
    size_t j = rs.next_u64() % (i + 1);
    std::swap(idx[i], idx[j]);
  }
  plan.fold_of.assign(n, 0);
  for (size_t pos = 0; pos < n; ++pos)
    plan.fold_of[idx[pos]] = static_cast<int>(pos % k);
  return plan;
}

namespace {

struct Standardizer {
  std::vector<double> mu, sd;

  void fit(const DesignMatrix& x) {
    mu.assign(x.d, 0.0);
    sd.assign(x.d, 1.0);
    for (size_t j = 0; j < x.d; ++j) {
      const double* c = x.col(j);
      double m = 0.0;
      for (size_t i = 0; i < x.n; ++i) m += c[i];
      m /= x.n;
      double v = 0.0;
      for (size_t i = 0; i < x.n; ++i) v += (c[i] - m) * (c[i] - m);
      v /= x.n;
      mu[j] = m;
      sd[j] = v > 1e-24 ? std::sqrt(v) : 1.0;
    }
  }
  DesignMatrix apply(const DesignMatrix& x) const {
    DesignMatrix z(x.n, x.d);
    for (size_t j = 0; j < x.d; ++j)
      for (size_t i = 0; i < x.n; ++i)
        z.at(i, j) = (x.at(i, j) - mu[j]) / sd[j];
    return z;
  }
};

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

// largest eigenvalue of (1/n) Z'Z by power iteration
double gram_spectral_bound(const DesignMatrix& z) {
  std::vector<double> v(z.d, 1.0 / std::sqrt(static_cast<double>(z.d)));
  std::vector<double> zv(z.n), w(z.d);
  double lam = 1.0;
  for (int it = 0; it < 40; ++it) {
    std::fill(zv.begin(), zv.end(), 0.0);
    for (size_t j = 0; j < z.d; ++j) {
      const double* c = z.col(j);
      for (size_t i = 0; i < z.n; ++i) zv[i] += c[i] * v[j];
    }
    double nrm = 0.0;
    for (size_t j = 0; j < z.d; ++j) {
      const double* c = z.col(j);
      double s = 0.0;
      for (size_t i = 0; i < z.n; ++i) s += c[i] * zv[i];
      w[j] = s / z.n;
      nrm += w[j] * w[j];
    }
    nrm = std::sqrt(nrm);
    if (nrm < 1e-300) break;
    lam = nrm;
    for (size_t j = 0; j < z.d; ++j) v[j] = w[j] / nrm;
  }
  return lam;
}

}  // namespace

CcpModel fit_ccp(const DesignMatrix& x, const std::vector<int>& y, double lambda,
                 double eps_clip) {
  if (x.n == 0 || y.size() != x.n)
    throw std::invalid_argument("fit_ccp: empty or mismatched sample");
  if (!(eps_clip > 0.0 && eps_clip < 0.5))
    throw std::invalid_argument("fit_ccp: eps_clip must lie in (0, 0.5)");
  CcpModel m;
  m.lambda = lambda;
  m.eps_clip = eps_clip;
  m.coef.assign(x.d, 0.0);

  double ymean = 0.0;
  for (int v : y) ymean += v;
  ymean /= x.n;
  if (ymean <= 0.0 || ymean >= 1.0) {
    m.degenerate = true;
    m.intercept = logit(clip(ymean, eps_clip, 1.0 - eps_clip));
    return m;
  }

  Standardizer st;
  st.fit(x);
  DesignMatrix z = st.apply(x);

  // FISTA on average logistic loss + lambda * l1(coef); step from the
  // Lipschitz bound L = lambda_max(Z'Z/n)/4
  const double step = 1.0 / (0.25 * gram_spectral_bound(z) + 1e-12);
  std::vector<double> b(z.d, 0.0), b_prev(z.d, 0.0), v(z.d, 0.0);
  double b0 = logit(ymean), b0_prev = b0, v0 = b0;
  std::vector<double> eta(z.n), p(z.n);
  double tk = 1.0;
  const int max_iter = 10000;
  int it = 0;
  for (; it < max_iter; ++it) {
    // gradient at the momentum point
    for (size_t i = 0; i < z.n; ++i) eta[i] = v0;
    for (size_t j = 0; j < z.d; ++j) {
      if (v[j] == 0.0) continue;
      const double* c = z.col(j);
      for (size_t i = 0; i < z.n; ++i) eta[i] += c[i] * v[j];
    }
    for (size_t i = 0; i < z.n; ++i) p[i] = logistic(eta[i]) - y[i];

    double g0 = 0.0;
    for (size_t i = 0; i < z.n; ++i) g0 += p[i];
    g0 /= z.n;
    double nb0 = v0 - step * g0;

    double change = std::abs(nb0 - b0);
    std::vector<double> nb(z.d);
    for (size_t j = 0; j < z.d; ++j) {
      const double* c = z.col(j);
      double g = 0.0;
      for (size_t i = 0; i < z.n; ++i) g += c[i] * p[i];
      g /= z.n;
      nb[j] = soft_threshold(v[j] - step * g, step * lambda);
      change = std::max(change, std::abs(nb[j] - b[j]));
    }

    double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    double mom = (tk - 1.0) / tn;
    for (size_t j = 0; j < z.d; ++j) {
      v[j] = nb[j] + mom * (nb[j] - b_prev[j]);
      b_prev[j] = b[j];
      b[j] = nb[j];
    }
    v0 = nb0 + mom * (nb0 - b0_prev);
    b0_prev = b0;
    b0 = nb0;
    tk = tn;
    if (change < 1e-7) break;
  }
  m.iterations = it + 1;

  // back to the original scale
  m.intercept = b0;
  for (size_t j = 0; j < z.d; ++j) {
    m.coef[j] = b[j] / st.sd[j];
    m.intercept -= b[j] * st.mu[j] / st.sd[j];
  }
  return m;
}

TransitionModel fit_transition(const DesignMatrix& x, const std::vector<double>& y,
                               double lambda) {
  if (x.n < 10)
    throw std::invalid_argument(
        "fit_transition: need at least 10 maintenance observations");
  TransitionModel m;
  m.lambda = lambda;
  m.coef.assign(x.d, 0.0);

  double ymean = mean(y);
  double yvar = 0.0;
  for (double v : y) yvar += (v - ymean) * (v - ymean);
  yvar /= x.n;
  if (yvar <= 1e-24) {
    m.intercept = ymean;
    m.sigma_e = 0.0;
    return m;
  }

  Standardizer st;
  st.fit(x);
  DesignMatrix z = st.apply(x);
  std::vector<double> yc(x.n);
  for (size_t i = 0; i < x.n; ++i) yc[i] = y[i] - ymean;

  // gram-based coordinate descent; standardized columns have unit variance
  std::vector<double> cy(z.d, 0.0);
  std::vector<double> gram(z.d * z.d, 0.0);
  for (size_t j = 0; j < z.d; ++j) {
    const double* cj = z.col(j);
    for (size_t i = 0; i < z.n; ++i) cy[j] += cj[i] * yc[i];
    cy[j] /= z.n;
    for (size_t k = j; k < z.d; ++k) {
      const double* ck = z.col(k);
      double s = 0.0;
      for (size_t i = 0; i < z.n; ++i) s += cj[i] * ck[i];
      s /= z.n;
      gram[j * z.d + k] = s;
      gram[k * z.d + j] = s;
    }
  }

  std::vector<double> b(z.d, 0.0);
  const int max_iter = 10000;
  int it = 0;
  for (; it < max_iter; ++it) {
    double change = 0.0;
    for (size_t j = 0; j < z.d; ++j) {
      double r = cy[j];
      const double* gj = gram.data() + j * z.d;
      for (size_t k = 0; k < z.d; ++k)
        if (k != j) r -= gj[k] * b[k];
      double nb = soft_threshold(r, lambda) / std::max(gj[j], 1e-12);
      change = std::max(change, std::abs(nb - b[j]));
      b[j] = nb;
    }
    if (change < 1e-9) break;
  }
  m.iterations = it + 1;

  m.intercept = ymean;
  for (size_t j = 0; j < z.d; ++j) {
    m.coef[j] = b[j] / st.sd[j];
    m.intercept -= b[j] * st.mu[j] / st.sd[j];
  }

  double rss = 0.0;
  for (size_t i = 0; i < x.n; ++i) {
    double pred = m.intercept;
    for (size_t j = 0; j < x.d; ++j) pred += m.coef[j] * x.at(i, j);
    rss += (y[i] - pred) * (y[i] - pred);
  }
  m.sigma_e = std::sqrt(rss / x.n);
  return m;
}

double predict_ccp(const CcpModel& m, const StateVector& w) { return m.predict(w); }

double predict_transition(const TransitionModel& m, const StateVector& w) {
  return m.predict(w);
}

double lasso_kkt_gap(const DesignMatrix& x, const std::vector<double>& y,
                     const TransitionModel& m) {
  Standardizer st;
  st.fit(x);
  std::vector<double> resid(x.n);
  for (size_t i = 0; i < x.n; ++i) {
    double pred = m.intercept;
    for (size_t j = 0; j < x.d; ++j) pred += m.coef[j] * x.at(i, j);
    resid[i] = y[i] - pred;
  }
  double worst = 0.0;
  for (size_t j = 0; j < x.d; ++j) {
    if (m.coef[j] != 0.0) continue;
    double g = 0.0;
    for (size_t i = 0; i < x.n; ++i)
      g += (x.at(i, j) - st.mu[j]) / st.sd[j] * resid[i];
    g = std::abs(g) / x.n;
    worst = std::max(worst, g - m.lambda);
  }
  return worst;
}

double logistic_kkt_gap(const DesignMatrix& x, const std::vector<int>& y,
                        const CcpModel& m) {
  Standardizer st;
  st.fit(x);
  std::vector<double> resid(x.n);
  for (size_t i = 0; i < x.n; ++i) {
    double z = m.intercept;
    for (size_t j = 0; j < x.d; ++j) z += m.coef[j] * x.at(i, j);
    resid[i] = logistic(z) - y[i];
  }
  double worst = 0.0;
  for (size_t j = 0; j < x.d; ++j) {
    if (m.coef[j] != 0.0) continue;
    double g = 0.0;
    for (size_t i = 0; i < x.n; ++i)
      g += (x.at(i, j) - st.mu[j]) / st.sd[j] * resid[i];
    g = std::abs(g) / x.n;
    worst = std::max(worst, g - m.lambda);
  }
  return worst;
}

namespace {

DesignMatrix gather_design(const PanelDataset& panel,
                           const std::vector<size_t>& rows) {
  const int dx = panel.model.d_x;
  DesignMatrix x(rows.size(), 1 + dx);
  for (size_t r = 0; r < rows.size(); ++r) {
    const Observation& o = panel.obs[rows[r]];
    x.at(r, 0) = o.w.s;
    for (int j = 0; j < dx; ++j) x.at(r, j + 1) = o.w.x[j];
  }
  return x;
}

}  // namespace

NuisanceEstimate fit_nuisances(const PanelDataset& panel,
                               const FirstStageOptions& opt) {
  const size_t n = panel.obs.size();
  NuisanceEstimate est;
  est.plan = make_crossfit_plan(n, opt.n_folds, opt.seed);
  est.kind = panel.model.kind;
  est.beta = panel.model.beta;
  est.s_lo = panel.model.s_lo;
  est.s_hi = panel.model.s_hi;
  est.delta0_known = opt.delta0_known;
  const double d = 1.0 + panel.model.d_x;
  const bool entry = panel.model.kind == ModelKind::kEntryGame;

  est.train_idx.resize(opt.n_folds);
  for (int k = 0; k < opt.n_folds; ++k) {
    std::vector<size_t>& rows = est.train_idx[k];
    for (size_t i = 0; i < n; ++i)
      if (est.plan.fold_of[i] != k) rows.push_back(i);

    DesignMatrix xk = gather_design(panel, rows);
    std::vector<int> yk(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) yk[r] = panel.obs[rows[r]].a;

    double lam_ccp = opt.lambda_ccp
                         ? *opt.lambda_ccp
                         : 0.5 * std::sqrt(std::log(d) / static_cast<double>(rows.size()));
    est.ccp_by_fold.push_back(fit_ccp(xk, yk, lam_ccp, opt.eps_clip));

    if (entry) {
      std::vector<int> yp(rows.size());
      for (size_t r = 0; r < rows.size(); ++r) yp[r] = panel.obs[rows[r]].a_p;
      est.opp_by_fold.push_back(fit_ccp(xk, yp, lam_ccp, opt.eps_clip));
    } else {
      // transition fit uses maintenance rows only
      std::vector<size_t> keep_rows;
      for (size_t i : rows)
        if (panel.obs[i].a == 1) keep_rows.push_back(i);
      DesignMatrix xt = gather_design(panel, keep_rows);
      std::vector<double> yt(keep_rows.size());
      for (size_t r = 0; r < keep_rows.size(); ++r)
        yt[r] = panel.obs[keep_rows[r]].s_next;

      double lam_t;
      if (opt.lambda_trans) {
        lam_t = *opt.lambda_trans;
        est.trans_by_fold.push_back(fit_transition(xt, yt, lam_t));
      } else {
        // plug-in scale: pilot fit with the response sd, then refit with the
        // residual sd
        double base = std::sqrt(std::log(d) / static_cast<double>(keep_rows.size()));
        TransitionModel pilot =
            fit_transition(xt, yt, 1.1 * sample_sd(yt) * base);
        est.trans_by_fold.push_back(
            fit_transition(xt, yt, 1.1 * std::max(pilot.sigma_e, 1e-8) * base));
      }
    }
  }
  return est;
}

AgentContext CrossFitNuisance::compile(size_t i, const StateVector& w) const {
  AgentContext ctx;
  AgentDynamics& dyn = ctx.dyn;
  dyn.kind = est_.kind;
  dyn.beta = est_.beta;
  dyn.s_lo = est_.s_lo;
  dyn.s_hi = est_.s_hi;
  dyn.table_mode = false;
  dyn.delta0 = est_.delta0_known;

  const CcpModel& cm = fold_model(est_.ccp_by_fold, i);
  dyn.lgt_s = cm.coef[0];
  double a = cm.intercept;
  for (size_t j = 0; j + 1 < cm.coef.size(); ++j) a += cm.coef[j + 1] * w.x[j];
  dyn.lgt_a = a;
  dyn.clip_lgt = logit(1.0 - cm.eps_clip);

  if (est_.kind == ModelKind::kBusReplacement) {
    const TransitionModel& tm = fold_model(est_.trans_by_fold, i);
    dyn.rho_s = tm.coef[0];
    double ra = tm.intercept;
    for (size_t j = 0; j + 1 < tm.coef.size(); ++j) ra += tm.coef[j + 1] * w.x[j];
    dyn.rho_a = ra;
    dyn.rho_cap = kInf;
    dyn.sigma_e = tm.sigma_e;
  } else {
    dyn.gamma_p = fold_model(est_.opp_by_fold, i).predict(w);
  }
  return ctx;
}

void export_nuisance_json(const NuisanceEstimate& est, const std::string& path) {
  nlohmann::json j;
  j["n_folds"] = est.plan.n_folds;
  j["fold_seed"] = est.plan.seed;
  j["fold_of"] = est.plan.fold_of;
  auto ccp_json = [](const CcpModel& m) {
    return nlohmann::json{{"intercept", m.intercept},
                          {"coef", m.coef},
                          {"lambda", m.lambda},
                          {"eps_clip", m.eps_clip},
                          {"degenerate", m.degenerate},
                          {"iterations", m.iterations}};
  };
  for (const CcpModel& m : est.ccp_by_fold) j["ccp"].push_back(ccp_json(m));
  for (const CcpModel& m : est.opp_by_fold) j["opponent"].push_back(ccp_json(m));
  for (const TransitionModel& m : est.trans_by_fold)
    j["transition"].push_back(nlohmann::json{{"intercept", m.intercept},
                                             {"coef", m.coef},
                                             {"lambda", m.lambda},
                                             {"sigma_e", m.sigma_e},
                                             {"iterations", m.iterations}});
  std::ofstream f(path);
  if (!f) throw std::runtime_error("export_nuisance_json: cannot open " + path);
  f << j.dump(2) << '\n';
}

}  // namespace ddcset
