#pragma once

#include <optional>
#include <string>

#include "ddcset/dgp.hpp"
#include "ddcset/firststage.hpp"
#include "ddcset/oracleset.hpp"
#include "ddcset/setestim.hpp"

namespace ddcset {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  ModelSpec model;
  StructuralParams truth;

  size_t n = 2000;
  std::vector<size_t> n_list;  // montecarlo; defaults to {n}
  int reps = 2;

  int folds = 2;
  double eps_clip = 0.01;
  std::optional<double> lambda_ccp, lambda_trans;

  int n_paths = 300;
  int n_paths_corr = 48;
  double tol_tail = 1e-3;
  double h_fd = 0.05;

  // theta grid (third axis used by the entry game)
  std::vector<double> grid_lo{0.0, 0.0};
  std::vector<double> grid_hi{10.0, 3.0};
  std::vector<int> grid_n{41, 31};

  std::string rule = "logn";  // logn | degeneracy | fixed
  double kappa = 1.0;
  double fixed_c = 0.0;
  std::string mode = "orthogonal";  // naive | orthogonal | oracle
  std::string weights = "identity";  // identity | inv_sd
  double tau = 0.1;

  bool corr_ccp = true, corr_trans = true, corr_opp = true;
  double sign_convention = -1.0;
  std::string ccp_gamma = "envelope";    // envelope | shifted
  std::string trans_form = "propensity"; // propensity | policy_weight | conditional

  uint64_t seed = 1;
  std::string out_dir = "out";
  size_t oracle_states = 400;
  int oracle_paths = 256;
  uint64_t oracle_seed = 20240501;
  bool dump_bases = false;
  bool dump_moments = false;
  std::string dataset_csv;  // estimate an existing dataset when set
  std::string dataset_sidecar;

  void validate() const;
  SimConfig sim_config(uint64_t base_seed) const;
  MomentConfig moment_config() const;
  ThetaGrid grid() const;
  double pi_max() const;
};

ExperimentConfig config_from_json_file(const std::string& path);
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);

// deterministic per-replication seeds
uint64_t rep_seed(uint64_t root, const char* tag, size_t n, int rep);

struct PipelineResult {
  MomentBuild build;
  CriterionSurface surface;
  SetEstimate set;
  double c_hat = 0.0;
  std::optional<SubsampleResult> subsample;
  std::optional<NuisanceEstimate> first_stage;
};

// first stage -> value bases -> moments -> criterion surface -> contour set
PipelineResult run_pipeline(const PanelDataset& panel, const ExperimentConfig& cfg,
                            uint64_t base_seed, bool with_subsampling,
                            const OracleTable* table = nullptr);

struct RepRecord {
  size_t n = 0;
  int rep = 0;
  double dh = 0.0;
  bool contains_truth = false;
  bool covers_oracle = false;
  double c_hat = 0.0;
  double c_tau = 0.0;
  std::vector<double> bias_naive;  // |E_N m(theta0) - oracle| per coordinate
  std::vector<double> bias_orth;   // |E_N g(theta0) - oracle| per coordinate
  double wall_ms = 0.0;
};

struct McReport {
  std::vector<RepRecord> records;
  std::string summary_json;
};

McReport run_montecarlo(const ExperimentConfig& cfg, bool with_subsampling,
                        bool quiet = false);

struct OrthoAudit {
  bool pass = false;
  bool flipped_fails = false;  // the guard: the flipped sign must not pass
  std::string report_json;
};

// wraps the Gateaux checker over a 5-point theta probe set and both
// perturbation families, with the acceptance thresholds pinned
OrthoAudit run_orthogonality_audit(const ExperimentConfig& cfg, bool quiet = false);

// CLI entry points; return process exit codes (0 ok, 1 check failed, 2 config)
int cmd_simulate(const ExperimentConfig& cfg);
int cmd_estimate(const ExperimentConfig& cfg);
int cmd_montecarlo(const ExperimentConfig& cfg);
int cmd_coverage(const ExperimentConfig& cfg);
int cmd_check_orthogonality(const ExperimentConfig& cfg);

void write_manifest(const ExperimentConfig& cfg,
                    const std::vector<std::string>& outputs,
                    const std::string& path);

}  // namespace ddcset
