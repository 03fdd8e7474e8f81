#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ddcset/model.hpp"
#include "ddcset/nuisance.hpp"

namespace ddcset {

struct CrossFitPlan {
  int n_folds = 2;
  std::vector<int> fold_of;  // length N
  uint64_t seed = 0;
};

// uniformly random balanced partition, deterministic in seed
CrossFitPlan make_crossfit_plan(size_t n, int k, uint64_t seed);

// column-major design matrix; column 0 is mileage, then the covariates
struct DesignMatrix {
  size_t n = 0, d = 0;
  std::vector<double> a;  // d columns of length n

  DesignMatrix() = default;
  DesignMatrix(size_t n_, size_t d_) : n(n_), d(d_), a(n_ * d_, 0.0) {}
  double& at(size_t i, size_t j) { return a[j * n + i]; }
  double at(size_t i, size_t j) const { return a[j * n + i]; }
  const double* col(size_t j) const { return a.data() + j * n; }
};

struct CcpModel {
  double intercept = 0.0;
  std::vector<double> coef;  // over (s, x), original scale
  double lambda = 0.0;
  double eps_clip = 0.01;
  bool degenerate = false;  // single-action training sample
  int iterations = 0;

  double linear(const StateVector& w) const {
    double z = intercept + coef[0] * w.s;
    for (size_t j = 0; j + 1 < coef.size(); ++j) z += coef[j + 1] * w.x[j];
    return z;
  }
  double predict(const StateVector& w) const {
    return clip(logistic(linear(w)), eps_clip, 1.0 - eps_clip);
  }
};

struct TransitionModel {
  double intercept = 0.0;
  std::vector<double> coef;
  double lambda = 0.0;
  double sigma_e = 1.0;
  int iterations = 0;

  double predict(const StateVector& w) const {
    double z = intercept + coef[0] * w.s;
    for (size_t j = 0; j + 1 < coef.size(); ++j) z += coef[j + 1] * w.x[j];
    return z;
  }
};

// l1-regularized logistic regression by proximal gradient with
// soft-thresholding (intercept unpenalized, features standardized inside)
CcpModel fit_ccp(const DesignMatrix& x, const std::vector<int>& y, double lambda,
                 double eps_clip);

// lasso by coordinate descent on standardized features
TransitionModel fit_transition(const DesignMatrix& x, const std::vector<double>& y,
                               double lambda);

double predict_ccp(const CcpModel& m, const StateVector& w);
double predict_transition(const TransitionModel& m, const StateVector& w);

// sup-norm KKT violation over the zero coefficients, standardized scale
double lasso_kkt_gap(const DesignMatrix& x, const std::vector<double>& y,
                     const TransitionModel& m);
double logistic_kkt_gap(const DesignMatrix& x, const std::vector<int>& y,
                        const CcpModel& m);

struct FirstStageOptions {
  int n_folds = 2;
  uint64_t seed = 0;
  double eps_clip = 0.01;
  std::optional<double> lambda_ccp;    // default: 0.5 sqrt(log(d)/n)
  std::optional<double> lambda_trans;  // default: 1.1 sigma_hat sqrt(log(d)/n)
  double delta0_known = 0.0;
};

struct NuisanceEstimate {
  CrossFitPlan plan;
  std::vector<CcpModel> ccp_by_fold;
  std::vector<TransitionModel> trans_by_fold;
  std::vector<CcpModel> opp_by_fold;  // entry game only
  std::vector<std::vector<size_t>> train_idx;  // bookkeeping per fold
  ModelKind kind = ModelKind::kBusReplacement;
  double beta = 0.9;
  double s_lo = 0.0, s_hi = 15.0;
  double delta0_known = 0.0;
};

NuisanceEstimate fit_nuisances(const PanelDataset& panel,
                               const FirstStageOptions& opt);

void export_nuisance_json(const NuisanceEstimate& est, const std::string& path);

class CrossFitNuisance : public NuisanceView {
 public:
  explicit CrossFitNuisance(const NuisanceEstimate& est) : est_(est) {}

  double ccp(size_t i, const StateVector& w) const override {
    return fold_model(est_.ccp_by_fold, i).predict(w);
  }
  double transition_mean(size_t i, const StateVector& w) const override {
    return fold_model(est_.trans_by_fold, i).predict(w);
  }
  double sigma_e(size_t i) const override {
    return fold_model(est_.trans_by_fold, i).sigma_e;
  }
  double ccp_opponent(size_t i, const StateVector& w) const override {
    if (est_.opp_by_fold.empty()) return 0.5;
    return fold_model(est_.opp_by_fold, i).predict(w);
  }
  AgentContext compile(size_t i, const StateVector& w) const override;

 private:
  template <class T>
  const T& fold_model(const std::vector<T>& v, size_t i) const {
    int k = i < est_.plan.fold_of.size() ? est_.plan.fold_of[i] : 0;
    return v[k];
  }
  const NuisanceEstimate& est_;
};

}  // namespace ddcset
