#pragma once

#include <string>
#include <vector>

#include "ddcset/orthomoment.hpp"

namespace ddcset {

struct ThetaGrid {
  int dim = 2;
  std::vector<std::vector<double>> axes;  // per-parameter grid values
  std::vector<Vec3> points;               // flattened, last axis fastest

  size_t size() const { return points.size(); }

  static ThetaGrid regular(const std::vector<double>& lo,
                           const std::vector<double>& hi,
                           const std::vector<int>& n);
  // R in [0,10] x mu in [0,3], 41 x 31, contains (5,1) exactly
  static ThetaGrid default_bus();

  // index of an exact grid point, or npos
  size_t find(const Vec3& p, double tol = 1e-9) const;
};

enum class WeightRule { kIdentity, kInvSd };
enum class ContourRule { kLogN, kDegeneracy, kFixed };

struct CriterionSurface {
  ThetaGrid grid;
  int n_moments = 0;
  size_t n_obs = 0;
  std::vector<double> qn;            // Q_N per grid point
  std::vector<double> moment_means;  // point-major, L per point
  std::vector<double> weights;       // point-major, L per point
};

// Q_N(theta) = || max(mean g, 0) * W ||^2, assembled from the per-observation
// affine pieces in a single pass over the sample
CriterionSurface criterion_surface(const MomentBuild& build, const ThetaGrid& grid,
                                   WeightRule w_rule = WeightRule::kIdentity);

double choose_contour_level(const CriterionSurface& surface, ContourRule rule,
                            size_t n, double kappa = 1.0, double fixed_c = 0.0);

struct SetEstimate {
  double c_hat = 0.0;
  std::vector<size_t> members;  // indices into grid.points
  bool empty = false;
};

SetEstimate contour_set(const CriterionSurface& surface, double c_hat, size_t n);

// Hausdorff distance between finite point sets (+inf if either is empty)
double hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b, int dim);

std::vector<size_t> set_expand(const ThetaGrid& grid,
                               const std::vector<size_t>& members, double eps);
std::vector<size_t> set_contract(const ThetaGrid& grid,
                                 const std::vector<size_t>& members, double eps);

struct SubsampleResult {
  size_t block_size = 0;   // b
  size_t n_blocks = 0;     // B_N
  double c_tau = 0.0;
  std::vector<double> block_stats;  // sup over the contour set of b * Q_jb
  bool used_argmin_fallback = false;
};

// Partition the sample into B_N = floor(N/b) blocks of size b, compute
// sup_{theta in C(c_hat)} b * Q_jb per block with the full-sample nuisances,
// and report the (1-tau) order statistic as the confidence level c_tau.
SubsampleResult subsample_quantile(const MomentBuild& build,
                                   const CriterionSurface& surface,
                                   const SetEstimate& prelim, double tau,
                                   size_t block_size, uint64_t seed);

inline size_t default_block_size(size_t n) {
  return static_cast<size_t>(std::floor(std::pow(static_cast<double>(n), 0.45)));
}

void write_surface_csv(const CriterionSurface& surface, const SetEstimate& set,
                       const std::string& path);
void write_subsample_json(const SubsampleResult& r, const std::string& path);

}  // namespace ddcset
