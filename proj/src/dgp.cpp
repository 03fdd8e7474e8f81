#include "ddcset/dgp.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace ddcset {

namespace {
constexpr int kBurnSteps = 50;
constexpr double kResetMileage = 1.0;
}  // namespace

ModelSpec default_bus_model() {
  ModelSpec m;
  m.kind = ModelKind::kBusReplacement;
  m.beta = 0.9;
  m.d_x = 50;
  m.s_lo = 0.0;
  m.s_hi = 15.0;
  m.transition_autoreg = 0.7;
  m.transition_intercept = 1.0;
  m.noise_std = 0.5;
  m.transition_coeffs.assign(m.d_x, 0.0);
  for (int j = 0; j < 5 && j < m.d_x; ++j)
    m.transition_coeffs[j] = 0.5 / static_cast<double>(j + 1);
  return m;
}

ModelSpec default_entry_model() {
  ModelSpec m = default_bus_model();
  m.kind = ModelKind::kEntryGame;
  m.opponent_coeffs.assign(m.d_x, 0.0);
  // own sparse loading pattern for the short-lived player
  for (int j = 0; j < 5 && j < m.d_x; ++j)
    m.opponent_coeffs[j] = 0.4 / static_cast<double>(j + 1);
  return m;
}

StructuralParams default_bus_truth() {
  StructuralParams p;
  p.replacement_cost = 5.0;
  p.maintenance_slope = 1.0;
  return p;
}

StructuralParams default_entry_truth() {
  StructuralParams p = default_bus_truth();
  p.delta0 = 0.0;
  p.delta1 = 0.5;
  return p;
}

double DPOracle::interp(const std::vector<double>& f, double s) const {
  const double s0 = s_grid.front();
  const double ds = s_grid[1] - s_grid[0];
  double t = (s - s0) / ds;
  if (t <= 0.0) return f.front();
  if (t >= static_cast<double>(f.size() - 1)) return f.back();
  int i = static_cast<int>(t);
  double fr = t - i;
  return f[i] * (1.0 - fr) + f[i + 1] * fr;
}

namespace {

struct InterpNode {
  int idx;
  double frac;
  double weight;
};

double interp_at(const std::vector<double>& f, const InterpNode& n) {
  return f[n.idx] * (1.0 - n.frac) + f[n.idx + 1] * n.frac;
}

InterpNode locate(double s, double s0, double ds, int gn, double w) {
  double t = (s - s0) / ds;
  if (t < 0.0) t = 0.0;
  if (t > gn - 1.0) t = gn - 1.0;
  int i = static_cast<int>(t);
  if (i > gn - 2) i = gn - 2;
  return InterpNode{i, t - i, w};
}

DPOracle solve_dp_bus(const ModelSpec& model, const StructuralParams& truth,
                      double x_dot_b, int grid_size, double dp_tol, int max_iter) {
  DPOracle dp;
  const int gn = grid_size;
  dp.s_grid.resize(gn);
  const double ds = (model.s_hi - model.s_lo) / (gn - 1);
  for (int i = 0; i < gn; ++i) dp.s_grid[i] = model.s_lo + ds * i;

  // trapezoid quadrature over the transition noise, matched to the clipped
  // Gaussian law the simulator uses
  const int nq = 97;
  const double zmax = 6.0;
  std::vector<double> zq(nq), wq(nq);
  double wsum = 0.0;
  for (int k = 0; k < nq; ++k) {
    zq[k] = -zmax + 2.0 * zmax * k / (nq - 1);
    double w = std::exp(-0.5 * zq[k] * zq[k]);
    if (k == 0 || k == nq - 1) w *= 0.5;
    wq[k] = w;
    wsum += w;
  }
  for (double& w : wq) w /= wsum;

  // precompute interpolation of W at every quadrature destination
  std::vector<InterpNode> nodes;
  nodes.reserve(static_cast<size_t>(gn) * nq);
  for (int i = 0; i < gn; ++i) {
    double m = model.rho0(dp.s_grid[i], x_dot_b);
    for (int k = 0; k < nq; ++k) {
      double y = clip(m + model.noise_std * zq[k], model.s_lo, model.s_hi);
      nodes.push_back(locate(y, model.s_lo, ds, gn, wq[k]));
    }
  }
  const InterpNode reset = locate(kResetMileage, model.s_lo, ds, gn, 1.0);

  std::vector<double> W(gn, 0.0), Wn(gn, 0.0);
  dp.v_keep.resize(gn);
  dp.v_replace.resize(gn);
  double change = kInf;
  int it = 0;
  for (; it < max_iter; ++it) {
    const double w_reset = interp_at(W, reset);
    change = 0.0;
    for (int i = 0; i < gn; ++i) {
      double ew = 0.0;
      const InterpNode* row = nodes.data() + static_cast<size_t>(i) * nq;
      for (int k = 0; k < nq; ++k) ew += row[k].weight * interp_at(W, row[k]);
      double v1 = -truth.maintenance_slope * dp.s_grid[i] + model.beta * ew;
      double v0 = -truth.replacement_cost + model.beta * w_reset;
      dp.v_keep[i] = v1;
      dp.v_replace[i] = v0;
      Wn[i] = log_sum_exp(v0, v1) + kEulerGamma;
      double d = std::abs(Wn[i] - W[i]);
      if (d > change) change = d;
    }
    W.swap(Wn);
    if (change < dp_tol) break;
  }
  if (change >= dp_tol)
    throw std::runtime_error(
        "solve_dp: no convergence; beta too close to 1 or bad grid");
  dp.emax = W;
  dp.iterations = it + 1;
  dp.final_change = change;
  return dp;
}

DPOracle solve_dp_entry(const ModelSpec& model, const StructuralParams& truth,
                        double x_dot_bp, double dp_tol, int max_iter) {
  DPOracle dp;
  const int gn = static_cast<int>(model.s_hi);
  if (gn < 2) throw std::invalid_argument("solve_dp: entry game needs s_hi >= 2");
  dp.s_grid.resize(gn);
  for (int i = 0; i < gn; ++i) dp.s_grid[i] = 1.0 + i;
  const double gp = logistic(x_dot_bp);

  std::vector<double> W(gn, 0.0), Wn(gn, 0.0);
  dp.v_keep.resize(gn);
  dp.v_replace.resize(gn);
  double change = kInf;
  int it = 0;
  for (; it < max_iter; ++it) {
    change = 0.0;
    for (int i = 0; i < gn; ++i) {
      int nx = i + 1 < gn ? i + 1 : gn - 1;
      double v1 = -truth.maintenance_slope * dp.s_grid[i] + truth.delta1 * gp +
                  model.beta * W[nx];
      double v0 = -truth.replacement_cost + truth.delta0 * gp + model.beta * W[0];
      dp.v_keep[i] = v1;
      dp.v_replace[i] = v0;
      Wn[i] = log_sum_exp(v0, v1) + kEulerGamma;
      double d = std::abs(Wn[i] - W[i]);
      if (d > change) change = d;
    }
    W.swap(Wn);
    if (change < dp_tol) break;
  }
  if (change >= dp_tol) throw std::runtime_error("solve_dp: no convergence");
  dp.emax = W;
  dp.iterations = it + 1;
  dp.final_change = change;
  return dp;
}

}  // namespace

DPOracle solve_dp(const ModelSpec& model, const StructuralParams& truth,
                  const std::vector<double>& x, int grid_size, double dp_tol,
                  int max_iter) {
  model.validate();
  if (grid_size < 50 && model.kind == ModelKind::kBusReplacement)
    throw std::invalid_argument("solve_dp: grid_size must be >= 50");
  if (!(dp_tol > 0.0)) throw std::invalid_argument("solve_dp: dp_tol must be > 0");
  if (model.s_lo > kResetMileage || model.s_hi < kResetMileage)
    throw std::invalid_argument("solve_dp: mileage bounds do not cover the reset state");
  if (model.kind == ModelKind::kEntryGame)
    return solve_dp_entry(model, truth, model.dot_opponent(x), dp_tol, max_iter);
  return solve_dp_bus(model, truth, model.dot_transition(x), grid_size, dp_tol,
                      max_iter);
}

OracleTable::OracleTable(const ModelSpec& model, const StructuralParams& truth,
                         int grid_size, int n_u, double dp_tol)
    : model_(model), truth_(truth), nu_(n_u) {
  model_.validate();
  const std::vector<double>& coef = model.kind == ModelKind::kEntryGame
                                        ? model.opponent_coeffs
                                        : model.transition_coeffs;
  double norm2 = 0.0;
  for (double c : coef) norm2 += c * c;
  double span = 6.5 * std::sqrt(norm2) + 1e-6;
  u0_ = -span;
  du_ = 2.0 * span / (nu_ - 1);

  std::vector<double> x;  // unused by the scalar-index solvers
  for (int j = 0; j < nu_; ++j) {
    double u = u0_ + du_ * j;
    DPOracle dp;
    if (model.kind == ModelKind::kEntryGame) {
      dp = solve_dp_entry(model_, truth_, u, dp_tol, 4000);
    } else {
      dp = solve_dp_bus(model_, truth_, u, grid_size, dp_tol, 4000);
    }
    if (j == 0) {
      gs_ = static_cast<int>(dp.s_grid.size());
      s0_ = dp.s_grid.front();
      ds_ = dp.s_grid[1] - dp.s_grid[0];
      gaps_.resize(static_cast<size_t>(nu_) * gs_);
    }
    for (int i = 0; i < gs_; ++i)
      gaps_[static_cast<size_t>(j) * gs_ + i] = dp.v_keep[i] - dp.v_replace[i];
  }
}

double OracleTable::v_gap(double s, double u) const {
  double tu = (u - u0_) / du_;
  tu = clip(tu, 0.0, nu_ - 1.0);
  int j = static_cast<int>(tu);
  if (j > nu_ - 2) j = nu_ - 2;
  double fu = tu - j;

  double ts = (s - s0_) / ds_;
  ts = clip(ts, 0.0, gs_ - 1.0);
  int i = static_cast<int>(ts);
  if (i > gs_ - 2) i = gs_ - 2;
  double fs = ts - i;

  const double* r0 = gaps_.data() + static_cast<size_t>(j) * gs_;
  const double* r1 = r0 + gs_;
  double g0 = r0[i] * (1.0 - fs) + r0[i + 1] * fs;
  double g1 = r1[i] * (1.0 - fs) + r1[i + 1] * fs;
  return g0 * (1.0 - fu) + g1 * fu;
}

std::vector<double> OracleTable::gap_row(double u) const {
  double tu = clip((u - u0_) / du_, 0.0, nu_ - 1.0);
  int j = static_cast<int>(tu);
  if (j > nu_ - 2) j = nu_ - 2;
  double fu = tu - j;
  std::vector<double> row(gs_);
  const double* r0 = gaps_.data() + static_cast<size_t>(j) * gs_;
  const double* r1 = r0 + gs_;
  for (int i = 0; i < gs_; ++i) row[i] = r0[i] * (1.0 - fu) + r1[i] * fu;
  return row;
}

PanelDataset simulate_panel(const ModelSpec& model, const StructuralParams& truth,
                            size_t n, uint64_t seed, const OracleTable* table) {
  model.validate();
  if (n < 1) throw std::invalid_argument("simulate_panel: need N >= 1");
  std::unique_ptr<OracleTable> owned;
  if (table == nullptr) {
    owned = std::make_unique<OracleTable>(model, truth);
    table = owned.get();
  }
  const bool entry = model.kind == ModelKind::kEntryGame;

  PanelDataset panel;
  panel.model = model;
  panel.truth = truth;
  panel.seed = seed;
  panel.obs.resize(n);

  for (size_t i = 0; i < n; ++i) {
    Observation& o = panel.obs[i];
    RngStream xs(Rp::kAgentX, {seed, i});
    o.w.x.resize(model.d_x);
    for (int j = 0; j < model.d_x; ++j) o.w.x[j] = xs.normal();
    const double u = entry ? model.dot_opponent(o.w.x) : model.dot_transition(o.w.x);
    const double xb = model.dot_transition(o.w.x);

    RngStream burn(Rp::kBurnIn, {seed, i});
    double s = kResetMileage;
    for (int t = 0; t < kBurnSteps; ++t) {
      double ua = burn.uniform();
      double uz = burn.uniform();
      int a = ua < table->ccp(s, u) ? 1 : 0;
      if (entry) {
        s = a == 1 ? (s + 1.0 > model.s_hi ? model.s_hi : s + 1.0) : kResetMileage;
      } else if (a == 1) {
        double z = normal_icdf(uz);
        s = clip(model.rho0(s, xb) + model.noise_std * z, model.s_lo, model.s_hi);
      } else {
        s = kResetMileage;
      }
    }
    o.w.s = s;

    RngStream act(Rp::kAction, {seed, i});
    o.a = act.uniform() < table->ccp(s, u) ? 1 : 0;
    if (entry) {
      RngStream opp(Rp::kOpponent, {seed, i});
      o.a_p = opp.uniform() < logistic(model.dot_opponent(o.w.x)) ? 1 : 0;
      o.s_next = o.a == 1 ? (s + 1.0 > model.s_hi ? model.s_hi : s + 1.0)
                          : kResetMileage;
    } else if (o.a == 1) {
      RngStream tr(Rp::kTransition, {seed, i});
      o.s_next = clip(model.rho0(s, xb) + model.noise_std * tr.normal(),
                      model.s_lo, model.s_hi);
    } else {
      o.s_next = kResetMileage;
    }
  }
  return panel;
}

double OracleNuisance::ccp(size_t, const StateVector& w) const {
  const ModelSpec& m = table_->model();
  double u = m.kind == ModelKind::kEntryGame ? m.dot_opponent(w.x)
                                             : m.dot_transition(w.x);
  return table_->ccp(w.s, u);
}

double OracleNuisance::transition_mean(size_t, const StateVector& w) const {
  const ModelSpec& m = table_->model();
  return m.rho0(w.s, m.dot_transition(w.x));
}

double OracleNuisance::ccp_opponent(size_t, const StateVector& w) const {
  return logistic(table_->model().dot_opponent(w.x));
}

AgentContext OracleNuisance::compile(size_t, const StateVector& w) const {
  const ModelSpec& m = table_->model();
  AgentContext ctx;
  AgentDynamics& d = ctx.dyn;
  d.kind = m.kind;
  d.beta = m.beta;
  d.s_lo = m.s_lo;
  d.s_hi = m.s_hi;
  d.table_mode = true;
  double u = m.kind == ModelKind::kEntryGame ? m.dot_opponent(w.x)
                                             : m.dot_transition(w.x);
  ctx.gap_storage = table_->gap_row(u);
  d.gap_grid = ctx.gap_storage.data();
  d.gn = static_cast<int>(ctx.gap_storage.size());
  d.g_s0 = table_->s0();
  d.g_ds = table_->ds();
  d.clip_lgt = kInf;
  d.rho_a = m.dot_transition(w.x) + m.transition_intercept;
  d.rho_s = m.transition_autoreg;
  d.rho_cap = m.s_hi;
  d.sigma_e = m.noise_std;
  d.gamma_p = logistic(m.dot_opponent(w.x));
  d.delta0 = table_->truth().delta0;
  return ctx;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

nlohmann::json model_to_json(const ModelSpec& m) {
  return nlohmann::json{
      {"kind", m.kind == ModelKind::kEntryGame ? "entry_game" : "bus_replacement"},
      {"beta", m.beta},
      {"d_x", m.d_x},
      {"s_lo", m.s_lo},
      {"s_hi", m.s_hi},
      {"transition_autoreg", m.transition_autoreg},
      {"transition_coeffs", m.transition_coeffs},
      {"transition_intercept", m.transition_intercept},
      {"noise_std", m.noise_std},
      {"opponent_coeffs", m.opponent_coeffs}};
}

ModelSpec model_from_json(const nlohmann::json& j) {
  ModelSpec m;
  m.kind = j.at("kind").get<std::string>() == "entry_game"
               ? ModelKind::kEntryGame
               : ModelKind::kBusReplacement;
  m.beta = j.at("beta").get<double>();
  m.d_x = j.at("d_x").get<int>();
  m.s_lo = j.at("s_lo").get<double>();
  m.s_hi = j.at("s_hi").get<double>();
  m.transition_autoreg = j.at("transition_autoreg").get<double>();
  m.transition_coeffs = j.at("transition_coeffs").get<std::vector<double>>();
  m.transition_intercept = j.at("transition_intercept").get<double>();
  m.noise_std = j.at("noise_std").get<double>();
  m.opponent_coeffs = j.at("opponent_coeffs").get<std::vector<double>>();
  return m;
}

}  // namespace

void write_panel(const PanelDataset& panel, const std::string& csv_path,
                 const std::string& sidecar_path) {
  const bool entry = panel.model.kind == ModelKind::kEntryGame;
  std::ofstream f(csv_path);
  if (!f) throw std::runtime_error("write_panel: cannot open " + csv_path);
  f << "agent,s";
  for (int j = 0; j < panel.model.d_x; ++j) f << ",x_" << j;
  f << ",a";
  if (entry) f << ",a_p";
  f << ",s_next\n";
  for (size_t i = 0; i < panel.obs.size(); ++i) {
    const Observation& o = panel.obs[i];
    f << i << ',' << fmt17(o.w.s);
    for (double xv : o.w.x) f << ',' << fmt17(xv);
    f << ',' << o.a;
    if (entry) f << ',' << o.a_p;
    f << ',' << fmt17(o.s_next) << '\n';
  }
  f.close();

  nlohmann::json side{{"model", model_to_json(panel.model)},
                      {"truth",
                       {{"replacement_cost", panel.truth.replacement_cost},
                        {"maintenance_slope", panel.truth.maintenance_slope},
                        {"delta0", panel.truth.delta0},
                        {"delta1", panel.truth.delta1}}},
                      {"seed", panel.seed},
                      {"n", panel.obs.size()}};
  std::ofstream g(sidecar_path);
  if (!g) throw std::runtime_error("write_panel: cannot open " + sidecar_path);
  g << side.dump(2) << '\n';
}

PanelDataset read_panel(const std::string& csv_path, const std::string& sidecar_path) {
  std::ifstream g(sidecar_path);
  if (!g) throw std::runtime_error("read_panel: cannot open " + sidecar_path);
  nlohmann::json side = nlohmann::json::parse(g);
  PanelDataset panel;
  panel.model = model_from_json(side.at("model"));
  panel.truth.replacement_cost = side.at("truth").at("replacement_cost").get<double>();
  panel.truth.maintenance_slope = side.at("truth").at("maintenance_slope").get<double>();
  panel.truth.delta0 = side.at("truth").at("delta0").get<double>();
  panel.truth.delta1 = side.at("truth").at("delta1").get<double>();
  panel.seed = side.at("seed").get<uint64_t>();
  const bool entry = panel.model.kind == ModelKind::kEntryGame;

  std::ifstream f(csv_path);
  if (!f) throw std::runtime_error("read_panel: cannot open " + csv_path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("read_panel: empty csv");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    Observation o;
    std::stringstream ss(line);
    std::string tok;
    std::getline(ss, tok, ',');  // agent index
    std::getline(ss, tok, ',');
    o.w.s = std::strtod(tok.c_str(), nullptr);
    o.w.x.resize(panel.model.d_x);
    for (int j = 0; j < panel.model.d_x; ++j) {
      std::getline(ss, tok, ',');
      o.w.x[j] = std::strtod(tok.c_str(), nullptr);
    }
    std::getline(ss, tok, ',');
    o.a = std::stoi(tok);
    if (entry) {
      std::getline(ss, tok, ',');
      o.a_p = std::stoi(tok);
    }
    std::getline(ss, tok, ',');
    o.s_next = std::strtod(tok.c_str(), nullptr);
    panel.obs.push_back(std::move(o));
  }
  return panel;
}

}  // namespace ddcset
