#include <iostream>

#include "CLI11.hpp"
#include "ddcset/harness.hpp"

namespace {

struct CliOverrides {
  std::string config_path;
  std::optional<size_t> n;
  std::optional<int> reps;
  std::optional<uint64_t> seed;
  std::optional<std::string> rule, mode, out_dir, dataset, weights;
  std::optional<double> tau, kappa;
};

ddcset::ExperimentConfig resolve(const CliOverrides& ov) {
  ddcset::ExperimentConfig cfg = ov.config_path.empty()
                                     ? ddcset::config_from_json_text("{}")
                                     : ddcset::config_from_json_file(ov.config_path);
  if (ov.n) {
    cfg.n = *ov.n;
    cfg.n_list = {*ov.n};
  }
  if (ov.reps) cfg.reps = *ov.reps;
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.rule) cfg.rule = *ov.rule;
  if (ov.mode) cfg.mode = *ov.mode;
  if (ov.out_dir) cfg.out_dir = *ov.out_dir;
  if (ov.weights) cfg.weights = *ov.weights;
  if (ov.tau) cfg.tau = *ov.tau;
  if (ov.kappa) cfg.kappa = *ov.kappa;
  if (ov.dataset) {
    cfg.dataset_csv = *ov.dataset;
    cfg.dataset_sidecar = *ov.dataset + ".json";
  }
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* sub, CliOverrides& ov) {
  sub->add_option("--config", ov.config_path, "JSON config file");
  sub->add_option("--n", ov.n, "sample size");
  sub->add_option("--reps", ov.reps, "replications");
  sub->add_option("--seed", ov.seed, "root seed");
  sub->add_option("--rule", ov.rule, "contour rule: logn|degeneracy|fixed");
  sub->add_option("--mode", ov.mode, "pipeline mode: naive|orthogonal|oracle");
  sub->add_option("--weights", ov.weights, "moment weights: identity|inv_sd");
  sub->add_option("--tau", ov.tau, "confidence level");
  sub->add_option("--kappa", ov.kappa, "log-N level scale");
  sub->add_option("--out", ov.out_dir, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"set-identified dynamic discrete choice estimation"};
  app.require_subcommand(1);

  CliOverrides ov;
  CLI::App* sim = app.add_subcommand("simulate", "write a synthetic panel");
  add_common(sim, ov);
  CLI::App* est = app.add_subcommand("estimate", "run the estimation pipeline");
  add_common(est, ov);
  est->add_option("--dataset", ov.dataset, "panel CSV (sidecar at <csv>.json)");
  CLI::App* mc = app.add_subcommand("montecarlo", "replication study");
  add_common(mc, ov);
  CLI::App* cov = app.add_subcommand("coverage", "subsampling coverage study");
  add_common(cov, ov);
  CLI::App* ortho =
      app.add_subcommand("check-orthogonality", "numerical Gateaux audit");
  add_common(ortho, ov);

  CLI11_PARSE(app, argc, argv);

  try {
    ddcset::ExperimentConfig cfg = resolve(ov);
    if (sim->parsed()) return ddcset::cmd_simulate(cfg);
    if (est->parsed()) return ddcset::cmd_estimate(cfg);
    if (mc->parsed()) return ddcset::cmd_montecarlo(cfg);
    if (cov->parsed()) return ddcset::cmd_coverage(cfg);
    if (ortho->parsed()) return ddcset::cmd_check_orthogonality(cfg);
  } catch (const ddcset::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
