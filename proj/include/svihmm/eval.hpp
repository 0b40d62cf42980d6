#pragma once

#include <optional>
#include <string>
#include <vector>

#include "svihmm/batch_vb.hpp"
#include "svihmm/svi.hpp"

namespace svihmm {

// Minimum-cost assignment between fitted and true emission means (squared
// Euclidean cost). Returns perm with perm[fitted_state] = true_state.
std::vector<int> align_states(const std::vector<Vector>& fitted_means,
                              const std::vector<Vector>& true_means);

// Frobenius norm of E_q[A] minus the true transition matrix after aligning
// states on the emission means.
double transition_error(const GlobalVariational& w, const HmmParams& truth);

// Average per-observation predictive log-density of the test sequence under
// plug-in posterior means: A = E_q[A], per-state mean and expected
// covariance, initial distribution = stationary of A.
double predictive_log_prob(const GlobalVariational& w, const Eigen::Ref<const RowMatrix>& test);

// Point parameters used by the plug-in predictive, exposed for diagnostics.
HmmParams plugin_point_params(const GlobalVariational& w);

struct RunSetting {
  std::string algorithm = "svi";  // "batch" or "svi"
  long L = 0;
  int M = 1;
  double kappa = 0.5;
  double epsilon = 1e-6;
  int grow_step = 8;
  bool growbuf = false;
  int iters = 100;            // SVI iteration budget
  int batch_max_iters = 200;
  double batch_tol = 1e-6;
  bool record_objective = true;  // evaluate validation log-predictive per iteration
};

struct RunResult {
  std::string run_id;
  std::uint64_t seed = 0;
  RunSetting setting;
  double trans_error = std::numeric_limits<double>::quiet_NaN();
  double pred_logprob = std::numeric_limits<double>::quiet_NaN();
  double total_seconds = 0.0;
  double per_iter_seconds = 0.0;
  int iters_run = 0;
  FitTrace trace;
};

// Fit one configuration on train, evaluate on test (and against truth when
// given). The timing columns cover the algorithm steps only.
RunResult run_one(const Eigen::Ref<const RowMatrix>& train,
                  const Eigen::Ref<const RowMatrix>& test, int num_states,
                  const DirichletNat& prior_trans, const NiwNat& prior_emission,
                  const HmmParams* truth, const RunSetting& setting, std::uint64_t seed,
                  const std::string& run_id);

// results.csv column order is fixed; see README.
void write_results_csv(const std::string& path, const std::vector<RunResult>& results);
void write_trace_csv(const std::string& path, const FitTrace& trace);

struct ExperimentConfig {
  std::string name = "experiment";
  std::string generator = "dd";     // "dd", "rc", or a dataset path
  long T = 10000;
  std::uint64_t data_seed = 1;
  int num_states = 8;
  double test_fraction = 0.1;       // final contiguous block held out
  int restarts = 1;
  std::uint64_t base_seed = 1;      // run r uses seed base_seed + r
  std::vector<RunSetting> settings;
  std::string out_dir = ".";
};

// Generates (or loads) the dataset, splits off the held-out block, runs every
// setting for every restart seed, and writes results.csv plus one trace CSV
// per run into out_dir. Partial results are flushed if a run throws.
std::vector<RunResult> run_experiment(const ExperimentConfig& config);

}  // namespace svihmm
