#pragma once

#include <vector>

#include "svihmm/model.hpp"

namespace svihmm {

// Geometric-mean transition surrogate under q(A):
//   out(j, k) = exp(psi(alpha_jk) - psi(sum_l alpha_jl)), alpha = u + 1.
// Entries are strictly positive and at most 1.
Matrix expected_transition(const std::vector<DirichletNat>& trans_rows);

// Stationary distribution of the Dirichlet-mean transition matrix E_q[A].
Vector estimate_pi(const std::vector<DirichletNat>& trans_rows);

// Per-state quantities cached for evaluating the expected Gaussian
// log-density E_q[ln N(y | mean, cov)] over many observations.
class EmissionExpectation {
 public:
  static EmissionExpectation prepare(const NiwNat& nat);
  double log_density(const Eigen::Ref<const Vector>& y) const;
  const Vector& mean() const { return mean_; }

 private:
  Vector mean_;
  Matrix chol_scale_;  // lower Cholesky factor of the recovered scale matrix
  double dof_ = 0.0;
  double constant_ = 0.0;
};

double expected_log_density(const NiwNat& nat, const Eigen::Ref<const Vector>& y);

// Fill out(t, :) with the expected log-densities of rows [begin, begin+len)
// of obs. The OpenMP variant parallelizes over timesteps; every entry is
// written by exactly one iteration, so results are bitwise identical to the
// serial reference for any thread count.
void emission_log_densities(const std::vector<EmissionExpectation>& states,
                            const Eigen::Ref<const RowMatrix>& obs, long begin, long len,
                            RowMatrix& out);
void emission_log_densities_serial(const std::vector<EmissionExpectation>& states,
                                   const Eigen::Ref<const RowMatrix>& obs, long begin, long len,
                                   RowMatrix& out);

// Marginal and pairwise posteriors over a (sub)chain plus the log-normalizer
// of the unnormalized chain mass.
struct Beliefs {
  RowMatrix marginals;            // L x K, rows sum to 1
  std::vector<double> pairwise;   // (L-1) slices of K x K, each sums to 1
  double log_norm = 0.0;

  long len() const { return marginals.rows(); }
  int num_states() const { return static_cast<int>(marginals.cols()); }
  double& pair(long slice, int j, int k) {
    return pairwise[static_cast<std::size_t>(slice) * num_states() * num_states() +
                    static_cast<std::size_t>(j) * num_states() + k];
  }
  double pair(long slice, int j, int k) const {
    return pairwise[static_cast<std::size_t>(slice) * num_states() * num_states() +
                    static_cast<std::size_t>(j) * num_states() + k];
  }
};

// Numerically stable forward-backward over surrogate parameters. Forward
// messages are rescaled to sum to one at every step and the log scale factors
// accumulate into log_norm; backward messages carry their own scaling, so the
// two passes are independent (which lets buffered windows reuse one side).
// Emission rows are shifted by their row maximum before exponentiation; the
// shift is added back into log_norm.
Beliefs forward_backward(const Vector& init, const Matrix& trans, const RowMatrix& log_obs);

// Exhaustive-enumeration oracle over all K^L state sequences. Refuses
// instances with K^L > 10^7. Kept independent of forward_backward.
Beliefs brute_force_beliefs(const Vector& init, const Matrix& trans, const RowMatrix& log_obs);

}  // namespace svihmm
