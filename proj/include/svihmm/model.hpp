#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace svihmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Observation sequences and other (length x K)-shaped tables are row-major so
// that per-timestep rows are contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct GaussianEmission {
  Vector mean;
  Matrix cov;  // symmetric positive definite
};

// Generative HMM parameters: initial distribution, row-stochastic transition
// matrix, and one Gaussian emission per state.
struct HmmParams {
  Vector init_dist;
  Matrix trans;
  std::vector<GaussianEmission> emissions;

  int num_states() const { return static_cast<int>(trans.rows()); }
  int dim() const { return emissions.empty() ? 0 : static_cast<int>(emissions[0].mean.size()); }
  void validate() const;  // throws std::invalid_argument
};

// Normal-inverse-Wishart in standard form: mean | cov ~ N(mean0, cov/kappa),
// cov ~ IW(scale, dof), with dof > p + 2.
struct NiwParams {
  Vector mean;
  double kappa = 0.0;
  Matrix scale;
  double dof = 0.0;

  void validate() const;
};

// Natural parameters of the NIW:
//   u1 = kappa * mean, u2 = kappa, u3 = scale + kappa * mean * mean^T,
//   u4 = dof + 2 + p.
struct NiwNat {
  Vector u1;
  double u2 = 0.0;
  Matrix u3;
  double u4 = 0.0;

  int dim() const { return static_cast<int>(u1.size()); }
  void validate() const;
};

// Natural parameters of a Dirichlet row: u = alpha - 1, entries > -1.
struct DirichletNat {
  Vector u;

  void validate() const;
};

// Dirichlet mean implied by the natural parameters: (u + 1) / sum(u + 1).
Vector dirichlet_mean(const DirichletNat& nat);

NiwNat niw_to_natural(const NiwParams& std_form);
NiwParams niw_from_natural(const NiwNat& nat);

// Variational state of the global parameters: one Dirichlet row per
// transition-matrix row and one NIW block per emission, plus the (shared)
// prior in natural form.
struct GlobalVariational {
  std::vector<DirichletNat> trans_rows;
  std::vector<NiwNat> emissions;
  DirichletNat prior_trans;
  NiwNat prior_emission;

  int num_states() const { return static_cast<int>(trans_rows.size()); }
  int dim() const { return prior_emission.dim(); }
  void validate() const;
};

// Stationary distribution of a row-stochastic matrix by power iteration on
// the transpose, started from the uniform vector. Converges when successive
// iterates differ by less than 1e-12 in L1; throws std::runtime_error after
// 10,000 iterations (degenerate or periodic chain).
Vector stationary_distribution(const Matrix& trans);

struct HmmSample {
  std::vector<std::int32_t> states;  // 0-based labels
  RowMatrix obs;                     // T x p
};

// Draw a length-T realization. Bit-reproducible for a fixed seed (SplitMix64
// stream; Gaussian draws through the Cholesky factor of each covariance).
HmmSample sample_hmm(const HmmParams& params, long T, std::uint64_t seed);

}  // namespace svihmm
