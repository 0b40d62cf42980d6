#include "svihmm/batch_vb.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "svihmm/rng.hpp"
#include "svihmm/special.hpp"

namespace svihmm {

GlobalVariational global_update(const DirichletNat& prior_trans, const NiwNat& prior_emission,
                                const ExpectedStats& stats) {
  const int k = stats.num_states();
  GlobalVariational w;
  w.prior_trans = prior_trans;
  w.prior_emission = prior_emission;
  w.trans_rows.resize(k);
  w.emissions.resize(k);
  for (int j = 0; j < k; ++j) {
    w.trans_rows[j].u = prior_trans.u + stats.trans.row(j).transpose();
    NiwNat& e = w.emissions[j];
    e.u1 = prior_emission.u1 + stats.emit[j].sum_y;
    e.u2 = prior_emission.u2 + stats.emit[j].count;
    e.u3 = prior_emission.u3 + stats.emit[j].sum_outer;
    e.u4 = prior_emission.u4 + stats.emit[j].s4();
    e.validate();  // SPD failure here means numerically broken statistics
  }
  return w;
}

double dirichlet_kl(const DirichletNat& q, const DirichletNat& p) {
  const Vector a = q.u.array() + 1.0;
  const Vector b = p.u.array() + 1.0;
  const double ahat = a.sum();
  double kl = std::lgamma(ahat) - std::lgamma(b.sum());
  const double dig_ahat = digamma(ahat);
  for (int i = 0; i < a.size(); ++i) {
    kl += std::lgamma(b[i]) - std::lgamma(a[i]);
    kl += (a[i] - b[i]) * (digamma(a[i]) - dig_ahat);
  }
  return kl;
}

double niw_kl(const NiwNat& qn, const NiwNat& pn) {
  const NiwParams q = niw_from_natural(qn);
  const NiwParams p = niw_from_natural(pn);
  const int d = static_cast<int>(q.mean.size());

  Eigen::LLT<Matrix> llt_q(q.scale);
  Eigen::LLT<Matrix> llt_p(p.scale);
  if (llt_q.info() != Eigen::Success || llt_p.info() != Eigen::Success)
    throw std::runtime_error("niw_kl: scale matrix not SPD");
  auto log_det = [&](const Eigen::LLT<Matrix>& llt) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += std::log(Matrix(llt.matrixL())(i, i));
    return 2.0 * s;
  };
  const double ldq = log_det(llt_q);
  const double ldp = log_det(llt_p);

  // Conditional Gaussian part, in expectation over q(cov).
  const Vector diff = q.mean - p.mean;
  const double mahal = llt_q.matrixL().solve(diff).squaredNorm();  // diff^T S_q^{-1} diff
  const double gauss = 0.5 * (d * (p.kappa / q.kappa - 1.0 + std::log(q.kappa / p.kappa)) +
                              p.kappa * q.dof * mahal);

  // Inverse-Wishart part via the Wishart duality on the precision.
  const double tr = llt_q.solve(p.scale).trace();  // tr(S_p S_q^{-1})
  const double wish = -0.5 * p.dof * (ldp - ldq) + 0.5 * q.dof * (tr - d) +
                      mv_lgamma(0.5 * p.dof, d) - mv_lgamma(0.5 * q.dof, d) +
                      0.5 * (q.dof - p.dof) * mv_digamma(0.5 * q.dof, d);
  return gauss + wish;
}

double compute_elbo(const GlobalVariational& w, double log_norm) {
  double elbo = log_norm;
  for (const auto& row : w.trans_rows) elbo -= dirichlet_kl(row, w.prior_trans);
  for (const auto& e : w.emissions) elbo -= niw_kl(e, w.prior_emission);
  return elbo;
}

std::pair<DirichletNat, NiwNat> default_prior(const Eigen::Ref<const RowMatrix>& data,
                                              int num_states) {
  const long T = data.rows();
  const int p = static_cast<int>(data.cols());
  if (T < 2) throw std::invalid_argument("default_prior: need at least two observations");

  DirichletNat prior_trans;
  prior_trans.u = Vector::Zero(num_states);  // alpha = 1

  Vector mean = Vector::Zero(p);
  for (long t = 0; t < T; ++t) mean += data.row(t).transpose();
  mean /= static_cast<double>(T);
  Matrix cov = Matrix::Zero(p, p);
  for (long t = 0; t < T; ++t) {
    const Vector c = data.row(t).transpose() - mean;
    cov += c * c.transpose();
  }
  cov /= static_cast<double>(T);
  // Tiny ridge keeps degenerate inputs factorizable.
  cov += Matrix::Identity(p, p) * (1e-10 * (1.0 + cov.trace() / p));

  NiwParams prior_std;
  prior_std.mean = mean;
  prior_std.kappa = 1.0;
  prior_std.scale = cov;
  prior_std.dof = p + 3;
  return {prior_trans, niw_to_natural(prior_std)};
}

GlobalVariational initialize_global(const Eigen::Ref<const RowMatrix>& data, int num_states,
                                    const DirichletNat& prior_trans, const NiwNat& prior_emission,
                                    std::uint64_t seed) {
  const long T = data.rows();
  const int p = static_cast<int>(data.cols());
  if (T < num_states) throw std::invalid_argument("initialize_global: fewer observations than states");
  SplitMix64 rng(seed);

  // Evenly strided subsample of at most 10,000 rows.
  const long n = std::min<long>(T, 10000);
  std::vector<long> idx(n);
  for (long i = 0; i < n; ++i) idx[i] = i * T / n;

  // Farthest-point scan for distinct, spread-out emission means.
  std::vector<long> centers;
  centers.push_back(idx[rng.uniform_below(static_cast<std::uint64_t>(n))]);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < num_states) {
    long best = -1;
    double best_d2 = -1.0;
    for (long i = 0; i < n; ++i) {
      const double d2 = (data.row(idx[i]) - data.row(centers.back())).squaredNorm();
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    centers.push_back(idx[best]);
  }

  Vector mean = Vector::Zero(p);
  for (long t = 0; t < T; ++t) mean += data.row(t).transpose();
  mean /= static_cast<double>(T);
  Matrix cov = Matrix::Zero(p, p);
  for (long t = 0; t < T; ++t) {
    const Vector c = data.row(t).transpose() - mean;
    cov += c * c.transpose();
  }
  cov /= static_cast<double>(T);
  cov += Matrix::Identity(p, p) * (1e-10 * (1.0 + cov.trace() / p));

  GlobalVariational w;
  w.prior_trans = prior_trans;
  w.prior_emission = prior_emission;
  w.trans_rows.resize(num_states);
  w.emissions.resize(num_states);
  for (int j = 0; j < num_states; ++j) {
    Vector noise(num_states);
    for (int l = 0; l < num_states; ++l) noise[l] = -std::log(rng.uniform_pos());  // Gamma(1,1)
    w.trans_rows[j].u = prior_trans.u + noise;

    NiwParams init;
    init.mean = data.row(centers[j]).transpose();
    init.kappa = 1.0;
    init.dof = p + 3;
    init.scale = cov * (init.dof - p - 1);  // E[cov] equals the empirical covariance
    w.emissions[j] = niw_to_natural(init);
  }
  return w;
}

std::pair<ExpectedStats, double> full_chain_stats(const GlobalVariational& w,
                                                  const Eigen::Ref<const RowMatrix>& data) {
  const long T = data.rows();
  const int k = w.num_states();
  const int p = static_cast<int>(data.cols());
  if (T < 2) throw std::invalid_argument("full_chain_stats: need at least two observations");

  const Matrix trans = expected_transition(w.trans_rows);
  const Vector init = estimate_pi(w.trans_rows);
  std::vector<EmissionExpectation> emis;
  emis.reserve(k);
  for (const auto& e : w.emissions) emis.push_back(EmissionExpectation::prepare(e));

  RowMatrix pobs(T, k);
  emission_log_densities(emis, data, 0, T, pobs);

  // Row-max shift, in place; each row is independent of the others.
  std::vector<double> shift(T);
#pragma omp parallel for schedule(static)
  for (long t = 0; t < T; ++t) {
    const double m = pobs.row(t).maxCoeff();
    shift[t] = m;
    for (int j = 0; j < k; ++j) pobs(t, j) = std::exp(pobs(t, j) - m);
  }
  double shift_total = 0.0;
  for (long t = 0; t < T; ++t) {
    if (!std::isfinite(shift[t]) || shift[t] <= -1e300)
      throw std::runtime_error("full_chain_stats: emission likelihood underflowed in every state");
    shift_total += shift[t];
  }

  RowMatrix alpha(T, k);
  double log_scale = 0.0;
  Eigen::RowVectorXd a = init.transpose().cwiseProduct(pobs.row(0));
  double c = a.sum();
  if (!(c > 0.0)) throw std::runtime_error("full_chain_stats: zero forward mass");
  alpha.row(0) = a / c;
  log_scale += std::log(c);
  for (long t = 1; t < T; ++t) {
    a = (alpha.row(t - 1) * trans).cwiseProduct(pobs.row(t));
    c = a.sum();
    if (!(c > 0.0)) throw std::runtime_error("full_chain_stats: zero forward mass");
    alpha.row(t) = a / c;
    log_scale += std::log(c);
  }

  // Backward pass streamed; statistics accumulate in descending t.
  ExpectedStats stats = ExpectedStats::zero(k, p);
  Eigen::RowVectorXd beta = Eigen::RowVectorXd::Constant(k, 1.0 / k);
  Eigen::RowVectorXd gamma(k), beta_prev(k);
  Matrix slice(k, k);
  auto add_emission = [&](long t, const Eigen::RowVectorXd& g) {
    const auto y = data.row(t);
    for (int j = 0; j < k; ++j) {
      stats.emit[j].count += g[j];
      stats.emit[j].sum_y += g[j] * y.transpose();
      stats.emit[j].sum_outer += g[j] * (y.transpose() * y);
    }
  };

  gamma = alpha.row(T - 1).cwiseProduct(beta);
  gamma /= gamma.sum();
  add_emission(T - 1, gamma);
  for (long t = T - 2; t >= 0; --t) {
    // Pairwise slice (t, t+1) from the not-yet-updated beta at t+1.
    double total = 0.0;
    for (int j = 0; j < k; ++j)
      for (int l = 0; l < k; ++l) {
        const double v = alpha(t, j) * trans(j, l) * pobs(t + 1, l) * beta[l];
        slice(j, l) = v;
        total += v;
      }
    stats.trans += slice / total;

    beta_prev = (trans * beta.cwiseProduct(pobs.row(t + 1)).transpose()).transpose();
    const double d = beta_prev.sum();
    if (!(d > 0.0)) throw std::runtime_error("full_chain_stats: zero backward mass");
    beta = beta_prev / d;

    gamma = alpha.row(t).cwiseProduct(beta);
    gamma /= gamma.sum();
    add_emission(t, gamma);
  }
  for (auto& e : stats.emit)
    e.sum_outer = (0.5 * (e.sum_outer + e.sum_outer.transpose())).eval();

  return {std::move(stats), log_scale + shift_total};
}

FitTrace run_batch_vb(const Eigen::Ref<const RowMatrix>& data, const GlobalVariational& init,
                      const BatchOptions& opts) {
  GlobalVariational w = init;
  FitTrace trace;
  double prev_elbo = std::numeric_limits<double>::quiet_NaN();
  const auto start = std::chrono::steady_clock::now();
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    auto [stats, log_norm] = full_chain_stats(w, data);
    const double elbo = compute_elbo(w, log_norm);
    if (!std::isfinite(elbo)) {
      std::cerr << "run_batch_vb: non-finite ELBO at iteration " << iter
                << " (log_norm = " << log_norm << "); dumping state\n";
      write_checkpoint("batch_vb_abort.ckpt", w);
      throw std::runtime_error("run_batch_vb: non-finite ELBO");
    }
    w = global_update(w.prior_trans, w.prior_emission, stats);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    trace.rows.push_back({iter, 1.0, elbo, 0, secs});
    if (iter > 0 && std::abs(elbo - prev_elbo) < opts.rel_tol * std::abs(elbo)) break;
    prev_elbo = elbo;
  }
  trace.final = std::move(w);
  return trace;
}

FitTrace run_batch_vb(const Eigen::Ref<const RowMatrix>& data, int num_states,
                      const DirichletNat& prior_trans, const NiwNat& prior_emission,
                      std::uint64_t seed, const BatchOptions& opts) {
  return run_batch_vb(data, initialize_global(data, num_states, prior_trans, prior_emission, seed),
                      opts);
}

namespace {

void write_vector(std::ostream& os, const Eigen::Ref<const Vector>& v) {
  for (int i = 0; i < v.size(); ++i) os << ' ' << v[i];
}

void write_matrix(std::ostream& os, const Matrix& m) {
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) os << ' ' << m(r, c);
}

Vector read_vector(std::istream& is, int n) {
  Vector v(n);
  for (int i = 0; i < n; ++i)
    if (!(is >> v[i])) throw std::runtime_error("checkpoint: truncated vector");
  return v;
}

Matrix read_matrix(std::istream& is, int r, int c) {
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      if (!(is >> m(i, j))) throw std::runtime_error("checkpoint: truncated matrix");
  return m;
}

void write_niw(std::ostream& os, const std::string& tag, const NiwNat& e) {
  os << tag << "_u1";
  write_vector(os, e.u1);
  os << '\n' << tag << "_u2 " << e.u2 << '\n';
  os << tag << "_u3";
  write_matrix(os, e.u3);
  os << '\n' << tag << "_u4 " << e.u4 << '\n';
}

NiwNat read_niw(std::istream& is, const std::string& tag, int p) {
  std::string key;
  NiwNat e;
  auto expect = [&](const std::string& want) {
    if (!(is >> key) || key != want)
      throw std::runtime_error("checkpoint: expected key " + want);
  };
  expect(tag + "_u1");
  e.u1 = read_vector(is, p);
  expect(tag + "_u2");
  if (!(is >> e.u2)) throw std::runtime_error("checkpoint: truncated u2");
  expect(tag + "_u3");
  e.u3 = read_matrix(is, p, p);
  expect(tag + "_u4");
  if (!(is >> e.u4)) throw std::runtime_error("checkpoint: truncated u4");
  return e;
}

}  // namespace

void write_checkpoint(const std::string& path, const GlobalVariational& w) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_checkpoint: cannot open " + path);
  os << std::setprecision(17);
  const int k = w.num_states();
  const int p = w.dim();
  os << "svihmm_checkpoint 1\n";
  os << "K " << k << '\n';
  os << "p " << p << '\n';
  os << "prior_trans";
  write_vector(os, w.prior_trans.u);
  os << '\n';
  write_niw(os, "prior_emission", w.prior_emission);
  for (int j = 0; j < k; ++j) {
    os << "trans_row " << j;
    write_vector(os, w.trans_rows[j].u);
    os << '\n';
  }
  for (int j = 0; j < k; ++j) {
    os << "emission " << j << '\n';
    write_niw(os, "e", w.emissions[j]);
  }
  if (!os) throw std::runtime_error("write_checkpoint: write failed for " + path);
}

GlobalVariational read_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_checkpoint: cannot open " + path);
  std::string key;
  int version = 0;
  if (!(is >> key >> version) || key != "svihmm_checkpoint" || version != 1)
    throw std::runtime_error("read_checkpoint: unrecognized header");
  int k = 0, p = 0;
  auto expect = [&](const std::string& want) {
    if (!(is >> key) || key != want)
      throw std::runtime_error("read_checkpoint: expected key " + want);
  };
  expect("K");
  is >> k;
  expect("p");
  is >> p;
  if (k < 1 || p < 1) throw std::runtime_error("read_checkpoint: bad dimensions");

  GlobalVariational w;
  expect("prior_trans");
  w.prior_trans.u = read_vector(is, k);
  w.prior_emission = read_niw(is, "prior_emission", p);
  w.trans_rows.resize(k);
  for (int j = 0; j < k; ++j) {
    int idx = -1;
    expect("trans_row");
    is >> idx;
    if (idx != j) throw std::runtime_error("read_checkpoint: row index mismatch");
    w.trans_rows[j].u = read_vector(is, k);
  }
  w.emissions.resize(k);
  for (int j = 0; j < k; ++j) {
    int idx = -1;
    expect("emission");
    is >> idx;
    if (idx != j) throw std::runtime_error("read_checkpoint: emission index mismatch");
    w.emissions[j] = read_niw(is, "e", p);
  }
  w.validate();
  return w;
}

}  // namespace svihmm
