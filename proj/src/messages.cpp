#include "svihmm/messages.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "svihmm/special.hpp"

namespace svihmm {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
constexpr double kEmissionFloor = -1e300;
}  // namespace

Matrix expected_transition(const std::vector<DirichletNat>& trans_rows) {
  const int k = static_cast<int>(trans_rows.size());
  Matrix out(k, k);
  for (int j = 0; j < k; ++j) {
    trans_rows[j].validate();
    const Vector alpha = trans_rows[j].u.array() + 1.0;
    const double total = digamma(alpha.sum());
    for (int l = 0; l < k; ++l) out(j, l) = std::exp(digamma(alpha[l]) - total);
  }
  return out;
}

Vector estimate_pi(const std::vector<DirichletNat>& trans_rows) {
  const int k = static_cast<int>(trans_rows.size());
  Matrix mean(k, k);
  for (int j = 0; j < k; ++j) mean.row(j) = dirichlet_mean(trans_rows[j]).transpose();
  return stationary_distribution(mean);
}

EmissionExpectation EmissionExpectation::prepare(const NiwNat& nat) {
  const NiwParams std_form = niw_from_natural(nat);
  const int p = nat.dim();

  EmissionExpectation e;
  e.mean_ = std_form.mean;
  e.dof_ = std_form.dof;
  Eigen::LLT<Matrix> llt(std_form.scale);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("EmissionExpectation: corrupted variational state (scale not SPD)");
  e.chol_scale_ = llt.matrixL();

  double log_det = 0.0;
  for (int i = 0; i < p; ++i) log_det += std::log(e.chol_scale_(i, i));
  log_det *= 2.0;

  // E[ln det precision] = mv_digamma(dof/2, p) + p ln 2 - ln det scale.
  const double elog_det_prec = mv_digamma(0.5 * std_form.dof, p) + p * std::log(2.0) - log_det;
  e.constant_ = 0.5 * elog_det_prec - 0.5 * p / std_form.kappa - 0.5 * p * kLogTwoPi;
  return e;
}

double EmissionExpectation::log_density(const Eigen::Ref<const Vector>& y) const {
  const Vector solved = chol_scale_.triangularView<Eigen::Lower>().solve(y - mean_);
  const double v = constant_ - 0.5 * dof_ * solved.squaredNorm();
  return v < kEmissionFloor ? kEmissionFloor : v;
}

double expected_log_density(const NiwNat& nat, const Eigen::Ref<const Vector>& y) {
  return EmissionExpectation::prepare(nat).log_density(y);
}

void emission_log_densities_serial(const std::vector<EmissionExpectation>& states,
                                   const Eigen::Ref<const RowMatrix>& obs, long begin, long len,
                                   RowMatrix& out) {
  const int k = static_cast<int>(states.size());
  if (out.rows() < len || out.cols() != k) out.resize(len, k);
  for (long t = 0; t < len; ++t) {
    const Vector y = obs.row(begin + t).transpose();
    for (int j = 0; j < k; ++j) out(t, j) = states[j].log_density(y);
  }
}

void emission_log_densities(const std::vector<EmissionExpectation>& states,
                            const Eigen::Ref<const RowMatrix>& obs, long begin, long len,
                            RowMatrix& out) {
  const int k = static_cast<int>(states.size());
  if (out.rows() < len || out.cols() != k) out.resize(len, k);
#pragma omp parallel for schedule(static)
  for (long t = 0; t < len; ++t) {
    const Vector y = obs.row(begin + t).transpose();
    for (int j = 0; j < k; ++j) out(t, j) = states[j].log_density(y);
  }
}

Beliefs forward_backward(const Vector& init, const Matrix& trans, const RowMatrix& log_obs) {
  const long len = log_obs.rows();
  const int k = static_cast<int>(log_obs.cols());
  if (len < 1) throw std::invalid_argument("forward_backward: empty chain");
  if (trans.rows() != k || trans.cols() != k || init.size() != k)
    throw std::invalid_argument("forward_backward: shape mismatch");

  // Shift every emission row by its maximum before exponentiating; beliefs
  // are invariant to the shift and the total goes back into log_norm.
  RowMatrix pobs(len, k);
  double shift_total = 0.0;
  for (long t = 0; t < len; ++t) {
    const double m = log_obs.row(t).maxCoeff();
    if (!std::isfinite(m) || m <= kEmissionFloor)
      throw std::runtime_error("forward_backward: emission likelihood underflowed in every state");
    for (int j = 0; j < k; ++j) pobs(t, j) = std::exp(log_obs(t, j) - m);
    shift_total += m;
  }

  RowMatrix alpha(len, k);
  double log_scale = 0.0;
  {
    Eigen::RowVectorXd a = init.transpose().cwiseProduct(pobs.row(0));
    double c = a.sum();
    if (!(c > 0.0)) throw std::runtime_error("forward_backward: zero forward mass at t = 0");
    alpha.row(0) = a / c;
    log_scale += std::log(c);
    for (long t = 1; t < len; ++t) {
      a = (alpha.row(t - 1) * trans).cwiseProduct(pobs.row(t));
      c = a.sum();
      if (!(c > 0.0)) throw std::runtime_error("forward_backward: zero forward mass");
      alpha.row(t) = a / c;
      log_scale += std::log(c);
    }
  }

  RowMatrix beta(len, k);
  beta.row(len - 1).setConstant(1.0 / k);
  for (long t = len - 2; t >= 0; --t) {
    Eigen::RowVectorXd b = (trans * beta.row(t + 1).cwiseProduct(pobs.row(t + 1)).transpose()).transpose();
    const double d = b.sum();
    if (!(d > 0.0)) throw std::runtime_error("forward_backward: zero backward mass");
    beta.row(t) = b / d;
  }

  Beliefs out;
  out.log_norm = log_scale + shift_total;
  out.marginals.resize(len, k);
  for (long t = 0; t < len; ++t) {
    Eigen::RowVectorXd g = alpha.row(t).cwiseProduct(beta.row(t));
    out.marginals.row(t) = g / g.sum();
  }
  out.pairwise.assign(static_cast<std::size_t>(std::max<long>(len - 1, 0)) * k * k, 0.0);
  for (long t = 0; t + 1 < len; ++t) {
    double total = 0.0;
    for (int j = 0; j < k; ++j)
      for (int l = 0; l < k; ++l) {
        const double v = alpha(t, j) * trans(j, l) * pobs(t + 1, l) * beta(t + 1, l);
        out.pair(t, j, l) = v;
        total += v;
      }
    const double inv = 1.0 / total;
    for (int j = 0; j < k; ++j)
      for (int l = 0; l < k; ++l) out.pair(t, j, l) *= inv;
  }
  return out;
}

Beliefs brute_force_beliefs(const Vector& init, const Matrix& trans, const RowMatrix& log_obs) {
  const long len = log_obs.rows();
  const int k = static_cast<int>(log_obs.cols());
  double count = 1.0;
  for (long t = 0; t < len; ++t) {
    count *= k;
    if (count > 1e7) throw std::invalid_argument("brute_force_beliefs: K^L exceeds enumeration cap");
  }
  const long total = static_cast<long>(count);

  // Log-mass per sequence, then a stable exp-normalize.
  std::vector<double> log_mass(total);
  std::vector<int> x(len);
  double best = -std::numeric_limits<double>::infinity();
  for (long idx = 0; idx < total; ++idx) {
    long rest = idx;
    for (long t = 0; t < len; ++t) {
      x[t] = static_cast<int>(rest % k);
      rest /= k;
    }
    double lw = std::log(init[x[0]]) + log_obs(0, x[0]);
    for (long t = 1; t < len; ++t)
      lw += std::log(trans(x[t - 1], x[t])) + log_obs(t, x[t]);
    log_mass[idx] = lw;
    if (lw > best) best = lw;
  }
  double z = 0.0;
  for (double lw : log_mass) z += std::exp(lw - best);

  Beliefs out;
  out.log_norm = best + std::log(z);
  out.marginals = RowMatrix::Zero(len, k);
  out.pairwise.assign(static_cast<std::size_t>(std::max<long>(len - 1, 0)) * k * k, 0.0);
  for (long idx = 0; idx < total; ++idx) {
    const double w = std::exp(log_mass[idx] - best) / z;
    long rest = idx;
    for (long t = 0; t < len; ++t) {
      x[t] = static_cast<int>(rest % k);
      rest /= k;
    }
    for (long t = 0; t < len; ++t) out.marginals(t, x[t]) += w;
    for (long t = 0; t + 1 < len; ++t) out.pair(t, x[t], x[t + 1]) += w;
  }
  return out;
}

}  // namespace svihmm
