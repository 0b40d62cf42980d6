#include "svihmm/model.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>
#include <string>

#include "svihmm/rng.hpp"

namespace svihmm {

namespace {

bool is_symmetric(const Matrix& m, double tol) {
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

bool cholesky_ok(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  return llt.info() == Eigen::Success;
}

}  // namespace

void HmmParams::validate() const {
  const int k = num_states();
  if (k < 1) throw std::invalid_argument("HmmParams: need at least one state");
  if (trans.cols() != k) throw std::invalid_argument("HmmParams: transition matrix must be square");
  if (init_dist.size() != k) throw std::invalid_argument("HmmParams: init_dist size mismatch");
  if (static_cast<int>(emissions.size()) != k)
    throw std::invalid_argument("HmmParams: one emission per state required");
  if ((init_dist.array() < 0.0).any() || std::abs(init_dist.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("HmmParams: init_dist is not on the simplex");
  for (int j = 0; j < k; ++j) {
    if ((trans.row(j).array() < 0.0).any() || std::abs(trans.row(j).sum() - 1.0) > 1e-12)
      throw std::invalid_argument("HmmParams: transition row " + std::to_string(j) +
                                  " is not a distribution");
  }
  const int p = dim();
  if (p < 1) throw std::invalid_argument("HmmParams: empty emission dimension");
  for (int j = 0; j < k; ++j) {
    const auto& e = emissions[j];
    if (e.mean.size() != p || e.cov.rows() != p || e.cov.cols() != p)
      throw std::invalid_argument("HmmParams: emission shape mismatch at state " + std::to_string(j));
    if (!is_symmetric(e.cov, 1e-12))
      throw std::invalid_argument("HmmParams: covariance not symmetric at state " + std::to_string(j));
    if (!cholesky_ok(e.cov))
      throw std::invalid_argument("HmmParams: covariance not positive definite at state " +
                                  std::to_string(j));
  }
}

void NiwParams::validate() const {
  const int p = static_cast<int>(mean.size());
  if (p < 1) throw std::invalid_argument("NiwParams: empty mean");
  if (kappa <= 0.0) throw std::invalid_argument("NiwParams: kappa must be positive");
  if (dof <= p + 2) throw std::invalid_argument("NiwParams: dof must exceed p + 2");
  if (scale.rows() != p || scale.cols() != p)
    throw std::invalid_argument("NiwParams: scale shape mismatch");
  if (!is_symmetric(scale, 1e-12) || !cholesky_ok(scale))
    throw std::invalid_argument("NiwParams: scale must be symmetric positive definite");
}

void NiwNat::validate() const {
  const int p = dim();
  if (p < 1) throw std::invalid_argument("NiwNat: empty u1");
  if (u2 <= 0.0) throw std::invalid_argument("NiwNat: u2 must be positive");
  if (u3.rows() != p || u3.cols() != p) throw std::invalid_argument("NiwNat: u3 shape mismatch");
  if (u4 <= 2 * p + 4) throw std::invalid_argument("NiwNat: u4 must exceed 2p + 4");
  const Matrix scale = u3 - u1 * u1.transpose() / u2;
  if (!is_symmetric(scale, 1e-10 * (1.0 + scale.cwiseAbs().maxCoeff())) || !cholesky_ok(scale))
    throw std::invalid_argument("NiwNat: recovered scale is not positive definite");
}

void DirichletNat::validate() const {
  if (u.size() < 1) throw std::invalid_argument("DirichletNat: empty");
  if ((u.array() <= -1.0).any())
    throw std::invalid_argument("DirichletNat: entries must exceed -1");
}

Vector dirichlet_mean(const DirichletNat& nat) {
  Vector alpha = nat.u.array() + 1.0;
  return alpha / alpha.sum();
}

NiwNat niw_to_natural(const NiwParams& std_form) {
  std_form.validate();
  NiwNat nat;
  nat.u1 = std_form.kappa * std_form.mean;
  nat.u2 = std_form.kappa;
  nat.u3 = std_form.scale + std_form.kappa * std_form.mean * std_form.mean.transpose();
  nat.u4 = std_form.dof + 2 + static_cast<int>(std_form.mean.size());
  return nat;
}

NiwParams niw_from_natural(const NiwNat& nat) {
  nat.validate();
  NiwParams out;
  out.kappa = nat.u2;
  out.mean = nat.u1 / nat.u2;
  out.scale = nat.u3 - nat.u1 * nat.u1.transpose() / nat.u2;
  // Symmetrize away accumulation roundoff in the outer-product update.
  out.scale = 0.5 * (out.scale + out.scale.transpose()).eval();
  out.dof = nat.u4 - 2 - nat.dim();
  return out;
}

void GlobalVariational::validate() const {
  const int k = num_states();
  if (k < 1 || static_cast<int>(emissions.size()) != k)
    throw std::invalid_argument("GlobalVariational: inconsistent state count");
  prior_trans.validate();
  prior_emission.validate();
  for (const auto& row : trans_rows) {
    row.validate();
    if (row.u.size() != k) throw std::invalid_argument("GlobalVariational: row length mismatch");
  }
  for (const auto& e : emissions) e.validate();
}

Vector stationary_distribution(const Matrix& trans) {
  const int k = static_cast<int>(trans.rows());
  if (trans.cols() != k || k < 1) throw std::invalid_argument("stationary_distribution: square matrix required");
  for (int j = 0; j < k; ++j) {
    if ((trans.row(j).array() < 0.0).any() || std::abs(trans.row(j).sum() - 1.0) > 1e-10)
      throw std::invalid_argument("stationary_distribution: matrix is not row-stochastic");
  }
  constexpr int kMaxIters = 10000;
  constexpr double kTol = 1e-12;
  Vector x = Vector::Constant(k, 1.0 / k);
  Vector next(k);
  for (int it = 0; it < kMaxIters; ++it) {
    next.noalias() = trans.transpose() * x;
    next /= next.sum();
    const double diff = (next - x).cwiseAbs().sum();
    x = next;
    if (diff < kTol) return x;
  }
  throw std::runtime_error(
      "stationary_distribution: power iteration did not converge (reducible or periodic chain)");
}

HmmSample sample_hmm(const HmmParams& params, long T, std::uint64_t seed) {
  params.validate();
  if (T < 1) throw std::invalid_argument("sample_hmm: T must be at least 1");
  const int k = params.num_states();
  const int p = params.dim();

  std::vector<Matrix> chol(k);
  for (int j = 0; j < k; ++j) {
    Eigen::LLT<Matrix> llt(params.emissions[j].cov);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("sample_hmm: covariance Cholesky failed");
    chol[j] = llt.matrixL();
  }

  SplitMix64 rng(seed);
  HmmSample out;
  out.states.resize(T);
  out.obs.resize(T, p);

  auto draw_state = [&](const Vector& dist) {
    double u = rng.uniform();
    double acc = 0.0;
    for (int j = 0; j < k; ++j) {
      acc += dist[j];
      if (u < acc) return j;
    }
    return k - 1;
  };

  Vector z(p);
  for (long t = 0; t < T; ++t) {
    const int s = (t == 0) ? draw_state(params.init_dist)
                           : draw_state(params.trans.row(out.states[t - 1]).transpose());
    out.states[t] = s;
    for (int i = 0; i < p; ++i) z[i] = rng.normal();
    out.obs.row(t) = (params.emissions[s].mean + chol[s] * z).transpose();
  }
  return out;
}

}  // namespace svihmm
