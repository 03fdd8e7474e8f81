#include "ddcset/oracleset.hpp"

namespace ddcset {

std::vector<MeanSe> OracleMoments::value_se(const Vec3& theta) const {
  std::vector<MeanSe> out(mean_m.size());
  std::vector<double> vals(per_state.size());
  for (size_t l = 0; l < mean_m.size(); ++l) {
    for (size_t s = 0; s < per_state.size(); ++s)
      vals[s] = per_state[s][l].eval(theta);
    out[l] = mean_se(vals);
  }
  return out;
}

OracleMoments oracle_moments(const ModelSpec& model, const StructuralParams& truth,
                             const MomentConfig& cfg, const SimConfig& sim,
                             const OracleSetConfig& ocfg, const OracleTable* table) {
  if (ocfg.n_states * static_cast<size_t>(ocfg.n_paths) < 100000)
    throw std::invalid_argument(
        "oracle_moments: need at least 1e5 simulation draws in total");
  std::unique_ptr<OracleTable> owned;
  if (table == nullptr) {
    owned = std::make_unique<OracleTable>(model, truth);
    table = owned.get();
  }
  // states drawn from the same equilibrium law as the data
  PanelDataset states =
      simulate_panel(model, truth, ocfg.n_states, ocfg.seed, table);
  auto table_sp = std::shared_ptr<const OracleTable>(table, [](const OracleTable*) {});
  OracleNuisance nuis(table_sp);

  SimConfig osim = sim;
  osim.n_paths = ocfg.n_paths;
  osim.base_seed = mix_key({ocfg.seed, 0x0eac1eULL});
  MomentBuild build = build_moments(states, nuis, cfg, osim, false);

  OracleMoments om;
  om.n_states = states.size();
  const int L = cfg.n_moments();
  om.mean_m.assign(L, Affine{});
  om.per_state.resize(states.size());
  for (size_t i = 0; i < states.size(); ++i) {
    om.per_state[i].resize(L);
    for (int l = 0; l < L; ++l) {
      om.per_state[i][l] = build.obs[i].m[l];
      om.mean_m[l] += build.obs[i].m[l];
    }
  }
  for (int l = 0; l < L; ++l) om.mean_m[l] *= 1.0 / static_cast<double>(states.size());
  return om;
}

OracleSet true_identified_set(const ModelSpec& model, const StructuralParams& truth,
                              const ThetaGrid& grid, const MomentConfig& cfg,
                              const SimConfig& sim, const OracleSetConfig& ocfg,
                              const OracleTable* table) {
  OracleSet set;
  set.moments = oracle_moments(model, truth, cfg, sim, ocfg, table);
  for (size_t p = 0; p < grid.size(); ++p) {
    std::vector<MeanSe> ms = set.moments.value_se(grid.points[p]);
    bool inside = true;
    for (const MeanSe& m : ms) {
      if (m.value > 3.0 * m.se) {
        inside = false;
        break;
      }
    }
    if (inside) {
      set.members.push_back(p);
      set.points.push_back(grid.points[p]);
    }
  }
  size_t truth_idx = grid.find(truth.theta(model.kind));
  if (truth_idx != static_cast<size_t>(-1)) {
    bool found = false;
    for (size_t m : set.members)
      if (m == truth_idx) {
        found = true;
        break;
      }
    if (!found)
      throw std::runtime_error(
          "true_identified_set: the true parameter failed the inclusion test; "
          "simulation bug or too few draws");
  }
  return set;
}

}  // namespace ddcset
