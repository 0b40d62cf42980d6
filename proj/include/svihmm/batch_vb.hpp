#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "svihmm/stats.hpp"

namespace svihmm {

struct TraceRow {
  int iter = 0;
  double rho = 1.0;         // step size (1 for full coordinate-ascent sweeps)
  double objective = 0.0;   // ELBO for batch runs, validation log-predictive for SVI
  long buffer_added = 0;    // total buffer observations added this iteration
  double seconds = 0.0;     // cumulative wall-clock time of the algorithm steps
};

struct FitTrace {
  std::vector<TraceRow> rows;
  GlobalVariational final;
};

// Conjugate coordinate-ascent update: w = u + E_q(x)[t(x, y)].
GlobalVariational global_update(const DirichletNat& prior_trans, const NiwNat& prior_emission,
                                const ExpectedStats& stats);

double dirichlet_kl(const DirichletNat& q, const DirichletNat& p);
double niw_kl(const NiwNat& q, const NiwNat& p);

// ELBO = log_norm - sum_j KL(q(A_j) || p(A_j)) - sum_k KL(q(phi_k) || p(phi_k)).
// log_norm must come from a forward-backward pass whose surrogates were built
// from the same w.
double compute_elbo(const GlobalVariational& w, double log_norm);

// Weakly informative default prior: uniform Dirichlet (alpha = 1), NIW with
// mean = data mean, kappa = 1, scale = empirical covariance, dof = p + 3.
std::pair<DirichletNat, NiwNat> default_prior(const Eigen::Ref<const RowMatrix>& data, int num_states);

// Deterministic per-seed initialization: emission means from a farthest-point
// scan over a subsample of at most 10,000 rows, covariances from the
// empirical covariance, transition rows from the prior plus Gamma(1,1) noise.
GlobalVariational initialize_global(const Eigen::Ref<const RowMatrix>& data, int num_states,
                                    const DirichletNat& prior_trans, const NiwNat& prior_emission,
                                    std::uint64_t seed);

// Full-chain local step fused with the statistics accumulation: streams the
// backward pass so pairwise beliefs are never materialized. Returns the
// expected statistics and the log-normalizer. Matches running
// forward_backward + expected_stats up to summation-order roundoff.
std::pair<ExpectedStats, double> full_chain_stats(const GlobalVariational& w,
                                                  const Eigen::Ref<const RowMatrix>& data);

struct BatchOptions {
  int max_iters = 200;
  double rel_tol = 1e-6;
};

FitTrace run_batch_vb(const Eigen::Ref<const RowMatrix>& data, int num_states,
                      const DirichletNat& prior_trans, const NiwNat& prior_emission,
                      std::uint64_t seed, const BatchOptions& opts = {});
FitTrace run_batch_vb(const Eigen::Ref<const RowMatrix>& data, const GlobalVariational& init,
                      const BatchOptions& opts = {});

// Versioned plain-text checkpoint with full decimal precision (%.17g round
// trips every double exactly). See README for the format.
void write_checkpoint(const std::string& path, const GlobalVariational& w);
GlobalVariational read_checkpoint(const std::string& path);

}  // namespace svihmm
