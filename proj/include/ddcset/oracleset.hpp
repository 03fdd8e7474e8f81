#pragma once

#include "ddcset/dgp.hpp"
#include "ddcset/setestim.hpp"

namespace ddcset {

// Brute-force population counterpart of the moment inequalities: forward
// simulation under the true CCP and transition, averaged over states drawn
// from the equilibrium law.
struct OracleMoments {
  std::vector<Affine> mean_m;  // population moment per coordinate, affine in theta
  std::vector<Affine> se_lin;  // unused; kept empty
  size_t n_states = 0;
  // per-state affine values retained for the standard errors
  std::vector<std::vector<Affine>> per_state;

  std::vector<double> value(const Vec3& theta) const {
    std::vector<double> v(mean_m.size());
    for (size_t l = 0; l < mean_m.size(); ++l) v[l] = mean_m[l].eval(theta);
    return v;
  }
  std::vector<MeanSe> value_se(const Vec3& theta) const;
};

struct OracleSetConfig {
  size_t n_states = 400;
  int n_paths = 256;  // per state; total draws must be >= 1e5
  uint64_t seed = 20240501;
};

OracleMoments oracle_moments(const ModelSpec& model, const StructuralParams& truth,
                             const MomentConfig& cfg, const SimConfig& sim,
                             const OracleSetConfig& ocfg,
                             const OracleTable* table = nullptr);

struct OracleSet {
  std::vector<size_t> members;  // grid indices
  std::vector<Vec3> points;
  OracleMoments moments;
};

// {theta on the grid : every oracle moment coordinate <= 3 MC standard errors}.
// Throws if the true parameter is a grid point but fails the inclusion test.
OracleSet true_identified_set(const ModelSpec& model, const StructuralParams& truth,
                              const ThetaGrid& grid, const MomentConfig& cfg,
                              const SimConfig& sim, const OracleSetConfig& ocfg,
                              const OracleTable* table = nullptr);

}  // namespace ddcset
