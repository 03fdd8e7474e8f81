#include "ddcset/setestim.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace ddcset {

ThetaGrid ThetaGrid::regular(const std::vector<double>& lo,
                             const std::vector<double>& hi,
                             const std::vector<int>& n) {
  if (lo.size() != hi.size() || lo.size() != n.size() || lo.empty() ||
      lo.size() > 3)
    throw std::invalid_argument("ThetaGrid: need 1..3 consistent axes");
  ThetaGrid g;
  g.dim = static_cast<int>(lo.size());
  g.axes.resize(g.dim);
  for (int d = 0; d < g.dim; ++d) {
    if (n[d] < 1) throw std::invalid_argument("ThetaGrid: axis size");
    g.axes[d].resize(n[d]);
    for (int i = 0; i < n[d]; ++i)
      g.axes[d][i] = n[d] == 1 ? lo[d]
                               : lo[d] + (hi[d] - lo[d]) * i / (n[d] - 1.0);
  }
  std::vector<int> idx(g.dim, 0);
  size_t total = 1;
  for (int d = 0; d < g.dim; ++d) total *= g.axes[d].size();
  g.points.reserve(total);
  for (size_t f = 0; f < total; ++f) {
    size_t rem = f;
    Vec3 p{0.0, 0.0, 0.0};
    for (int d = g.dim - 1; d >= 0; --d) {
      size_t nd = g.axes[d].size();
      p[d] = g.axes[d][rem % nd];
      rem /= nd;
    }
    g.points.push_back(p);
  }
  return g;
}

ThetaGrid ThetaGrid::default_bus() {
  return regular({0.0, 0.0}, {10.0, 3.0}, {41, 31});
}

size_t ThetaGrid::find(const Vec3& p, double tol) const {
  for (size_t i = 0; i < points.size(); ++i) {
    double d = 0.0;
    for (int k = 0; k < dim; ++k) d += std::abs(points[i][k] - p[k]);
    if (d <= tol) return i;
  }
  return static_cast<size_t>(-1);
}

CriterionSurface criterion_surface(const MomentBuild& build, const ThetaGrid& grid,
                                   WeightRule w_rule) {
  if (grid.points.empty())
    throw std::invalid_argument("criterion_surface: empty grid");
  if (build.obs.empty())
    throw std::invalid_argument("criterion_surface: empty sample");
  const int L = build.cfg.n_moments();
  const size_t n = build.size();

  // sample means of the affine pieces, and second moments for the optional
  // inverse-sd weighting
  std::vector<Affine> mean_g(L);
  std::vector<std::array<double, 10>> m2(L);  // packed symmetric 4x4
  for (auto& a : m2) a.fill(0.0);
  for (size_t i = 0; i < n; ++i) {
    for (int l = 0; l < L; ++l) {
      Affine gi = build.obs[i].g(l, build.cfg);
      mean_g[l] += gi;
      if (w_rule == WeightRule::kInvSd) {
        double v[4] = {gi.lin[0], gi.lin[1], gi.lin[2], gi.cst};
        int t = 0;
        for (int a = 0; a < 4; ++a)
          for (int b = a; b < 4; ++b) m2[l][t++] += v[a] * v[b];
      }
    }
  }
  for (int l = 0; l < L; ++l) mean_g[l] *= 1.0 / static_cast<double>(n);

  CriterionSurface s;
  s.grid = grid;
  s.n_moments = L;
  s.n_obs = n;
  s.qn.resize(grid.size());
  s.moment_means.resize(grid.size() * L);
  s.weights.assign(grid.size() * L, 1.0);

  for (size_t p = 0; p < grid.size(); ++p) {
    const Vec3& th = grid.points[p];
    double q = 0.0;
    for (int l = 0; l < L; ++l) {
      double v = mean_g[l].eval(th);
      s.moment_means[p * L + l] = v;
      double w = 1.0;
      if (w_rule == WeightRule::kInvSd) {
        double t[4] = {th[0], th[1], th[2], 1.0};
        double ex2 = 0.0;
        int c = 0;
        for (int a = 0; a < 4; ++a)
          for (int b = a; b < 4; ++b) {
            double f = (a == b ? 1.0 : 2.0) * t[a] * t[b];
            ex2 += f * m2[l][c++];
          }
        ex2 /= static_cast<double>(n);
        double var = std::max(ex2 - v * v, 1e-12);
        w = 1.0 / std::sqrt(var);
      }
      s.weights[p * L + l] = w;
      double pos = v > 0.0 ? v * w : 0.0;
      q += pos * pos;
    }
    s.qn[p] = q;
  }
  return s;
}

double choose_contour_level(const CriterionSurface& surface, ContourRule rule,
                            size_t n, double kappa, double fixed_c) {
  const double dn = static_cast<double>(n);
  switch (rule) {
    case ContourRule::kLogN:
      return kappa * std::log(dn);
    case ContourRule::kDegeneracy: {
      double qmin = *std::min_element(surface.qn.begin(), surface.qn.end());
      double floor_term = std::log(dn) / std::sqrt(dn);
      return dn * std::max(qmin, floor_term);
    }
    case ContourRule::kFixed:
      return fixed_c;
  }
  return fixed_c;
}

SetEstimate contour_set(const CriterionSurface& surface, double c_hat, size_t n) {
  if (c_hat < 0.0) throw std::invalid_argument("contour_set: c_hat must be >= 0");
  SetEstimate s;
  s.c_hat = c_hat;
  for (size_t p = 0; p < surface.qn.size(); ++p)
    if (static_cast<double>(n) * surface.qn[p] <= c_hat) s.members.push_back(p);
  s.empty = s.members.empty();
  return s;
}

double hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b, int dim) {
  if (a.empty() || b.empty()) return kInf;
  auto directed = [dim](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double worst = 0.0;
    for (const Vec3& p : from) {
      double best = kInf;
      for (const Vec3& q : to) {
        double d2 = 0.0;
        for (int k = 0; k < dim; ++k) d2 += (p[k] - q[k]) * (p[k] - q[k]);
        if (d2 < best) best = d2;
      }
      if (best > worst) worst = best;
    }
    return std::sqrt(worst);
  };
  return std::max(directed(a, b), directed(b, a));
}

namespace {

double dist2(const Vec3& p, const Vec3& q, int dim) {
  double d = 0.0;
  for (int k = 0; k < dim; ++k) d += (p[k] - q[k]) * (p[k] - q[k]);
  return d;
}

}  // namespace

std::vector<size_t> set_expand(const ThetaGrid& grid,
                               const std::vector<size_t>& members, double eps) {
  if (eps < 0.0) throw std::invalid_argument("set_expand: eps must be >= 0");
  std::vector<size_t> out;
  const double e2 = eps * eps;
  for (size_t p = 0; p < grid.size(); ++p) {
    for (size_t m : members) {
      if (dist2(grid.points[p], grid.points[m], grid.dim) <= e2 + 1e-15) {
        out.push_back(p);
        break;
      }
    }
  }
  return out;
}

std::vector<size_t> set_contract(const ThetaGrid& grid,
                                 const std::vector<size_t>& members, double eps) {
  if (eps < 0.0) throw std::invalid_argument("set_contract: eps must be >= 0");
  std::vector<char> in(grid.size(), 0);
  for (size_t m : members) in[m] = 1;
  std::vector<size_t> out;
  const double e2 = eps * eps;
  for (size_t m : members) {
    bool keep = true;
    for (size_t p = 0; p < grid.size(); ++p) {
      if (in[p]) continue;
      if (dist2(grid.points[m], grid.points[p], grid.dim) <= e2 + 1e-15) {
        keep = false;
        break;
      }
    }
    if (keep) out.push_back(m);
  }
  return out;
}

SubsampleResult subsample_quantile(const MomentBuild& build,
                                   const CriterionSurface& surface,
                                   const SetEstimate& prelim, double tau,
                                   size_t block_size, uint64_t seed) {
  const size_t n = build.size();
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("subsample_quantile: tau must lie in (0,1)");
  if (block_size < 1 || n < 4 * block_size)
    throw std::invalid_argument("subsample_quantile: need N >= 4b");
  const int L = build.cfg.n_moments();

  SubsampleResult res;
  res.block_size = block_size;
  res.n_blocks = n / block_size;

  // sup is taken over the preliminary contour set; if it came up empty, fall
  // back to the one-step expansion of the grid argmin
  std::vector<size_t> sup_pts = prelim.members;
  if (sup_pts.empty()) {
    res.used_argmin_fallback = true;
    size_t argmin = static_cast<size_t>(
        std::min_element(surface.qn.begin(), surface.qn.end()) -
        surface.qn.begin());
    double step = 0.0;
    for (const auto& ax : surface.grid.axes)
      if (ax.size() > 1) step = std::max(step, ax[1] - ax[0]);
    sup_pts = set_expand(surface.grid, {argmin}, step + 1e-12);
  }

  std::vector<size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  RngStream rs(Rp::kBlocks, {seed, n, block_size});
  for (size_t i = n - 1; i > 0; --i) {
    size_t j = rs.next_u64() % (i + 1);
    std::swap(perm[i], perm[j]);
  }

  res.block_stats.resize(res.n_blocks);
  const double db = static_cast<double>(block_size);
  std::vector<Affine> bm(L);
  for (size_t j = 0; j < res.n_blocks; ++j) {
    for (int l = 0; l < L; ++l) bm[l] = Affine{};
    for (size_t r = 0; r < block_size; ++r) {
      const ObsMomentPieces& pc = build.obs[perm[j * block_size + r]];
      for (int l = 0; l < L; ++l) bm[l] += pc.g(l, build.cfg);
    }
    for (int l = 0; l < L; ++l) bm[l] *= 1.0 / db;
    double sup = 0.0;
    for (size_t p : sup_pts) {
      double q = 0.0;
      for (int l = 0; l < L; ++l) {
        double v = bm[l].eval(surface.grid.points[p]);
        double w = surface.weights[p * L + l];
        double pos = v > 0.0 ? v * w : 0.0;
        q += pos * pos;
      }
      sup = std::max(sup, db * q);
    }
    res.block_stats[j] = sup;
  }
  res.c_tau = order_quantile(res.block_stats, 1.0 - tau);
  return res;
}

void write_surface_csv(const CriterionSurface& surface, const SetEstimate& set,
                       const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_surface_csv: cannot open " + path);
  std::vector<char> in(surface.grid.size(), 0);
  for (size_t m : set.members) in[m] = 1;
  f << (surface.grid.dim == 3 ? "theta_R,theta_mu,theta_dg,QN,in_set\n"
                              : "theta_R,theta_mu,QN,in_set\n");
  char buf[160];
  for (size_t p = 0; p < surface.grid.size(); ++p) {
    const Vec3& th = surface.grid.points[p];
    if (surface.grid.dim == 3) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%d\n", th[0], th[1],
                    th[2], surface.qn[p], static_cast<int>(in[p]));
    } else {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%d\n", th[0], th[1],
                    surface.qn[p], static_cast<int>(in[p]));
    }
    f << buf;
  }
}

void write_subsample_json(const SubsampleResult& r, const std::string& path) {
  nlohmann::json j{{"b", r.block_size},
                   {"B_N", r.n_blocks},
                   {"c_tau", r.c_tau},
                   {"block_stats", r.block_stats},
                   {"used_argmin_fallback", r.used_argmin_fallback}};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_subsample_json: cannot open " + path);
  f << j.dump(2) << '\n';
}

}  // namespace ddcset
