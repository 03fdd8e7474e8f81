#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ddcset/model.hpp"
#include "ddcset/nuisance.hpp"

namespace ddcset {

// Exact per-agent solution of the choice-specific Bellman equations on a
// mileage grid. The agent's covariates enter only through a scalar index:
// x'b shifts the transition mean (bus model) or x'b_P sets the opponent's
// entry probability (entry game).
struct DPOracle {
  std::vector<double> s_grid;
  std::vector<double> v_keep;     // v(1, s): maintain / keep
  std::vector<double> v_replace;  // v(0, s): replace / new model
  std::vector<double> emax;       // log-sum-exp value plus Euler constant
  int iterations = 0;
  double final_change = 0.0;

  double interp(const std::vector<double>& f, double s) const;
  double v(int a, double s) const { return interp(a == 1 ? v_keep : v_replace, s); }
  double v_gap(double s) const { return v(1, s) - v(0, s); }
  double ccp(double s) const { return logistic(v_gap(s)); }
};

// Fixed point of the choice-specific Bellman operator for one agent.
// T1EV shocks give a closed-form expected maximum (log-sum-exp + Euler).
DPOracle solve_dp(const ModelSpec& model, const StructuralParams& truth,
                  const std::vector<double>& x, int grid_size = 200,
                  double dp_tol = 1e-10, int max_iter = 4000);

// DP solutions precomputed on a grid of the scalar covariate index, so bulk
// simulation does not re-solve per agent. Interpolation error is far below
// every statistical tolerance used downstream.
class OracleTable {
 public:
  OracleTable(const ModelSpec& model, const StructuralParams& truth,
              int grid_size = 200, int n_u = 161, double dp_tol = 1e-10);

  double v_gap(double s, double u) const;
  double ccp(double s, double u) const { return logistic(v_gap(s, u)); }
  // blended gap row for a fixed covariate index
  std::vector<double> gap_row(double u) const;

  const ModelSpec& model() const { return model_; }
  const StructuralParams& truth() const { return truth_; }
  double s0() const { return s0_; }
  double ds() const { return ds_; }
  int grid_size() const { return gs_; }

 private:
  ModelSpec model_;
  StructuralParams truth_;
  int gs_ = 0, nu_ = 0;
  double s0_ = 0.0, ds_ = 1.0, u0_ = 0.0, du_ = 1.0;
  std::vector<double> gaps_;  // nu_ x gs_
};

// Draws one i.i.d. observation per agent from the equilibrium law:
// x ~ N(0, I), mileage from a burn-in of the equilibrium chain, action from
// the true CCP, next state from the transition. Fully keyed by (seed, agent).
PanelDataset simulate_panel(const ModelSpec& model, const StructuralParams& truth,
                            size_t n, uint64_t seed,
                            const OracleTable* table = nullptr);

// True-nuisance view backed by the DP table.
class OracleNuisance : public NuisanceView {
 public:
  explicit OracleNuisance(std::shared_ptr<const OracleTable> table)
      : table_(std::move(table)) {}

  double ccp(size_t, const StateVector& w) const override;
  double transition_mean(size_t, const StateVector& w) const override;
  double sigma_e(size_t) const override { return table_->model().noise_std; }
  double ccp_opponent(size_t, const StateVector& w) const override;
  AgentContext compile(size_t, const StateVector& w) const override;

 private:
  std::shared_ptr<const OracleTable> table_;
};

// dataset serialization: CSV panel + JSON sidecar, 17 significant digits
void write_panel(const PanelDataset& panel, const std::string& csv_path,
                 const std::string& sidecar_path);
PanelDataset read_panel(const std::string& csv_path, const std::string& sidecar_path);

}  // namespace ddcset
