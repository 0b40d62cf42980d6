#include "svihmm/svi.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include "svihmm/eval.hpp"

namespace svihmm {

void SviConfig::validate(long T) const {
  if (subchain_len < 2) throw std::invalid_argument("SviConfig: L must be at least 2");
  if (subchain_len > T) throw std::invalid_argument("SviConfig: L exceeds sequence length");
  if (minibatch < 1) throw std::invalid_argument("SviConfig: M must be at least 1");
  if (kappa < 0.5 || kappa > 1.0)
    throw std::invalid_argument("SviConfig: kappa must lie in [0.5, 1]");
  if (iters < 0) throw std::invalid_argument("SviConfig: negative iteration budget");
  if (epsilon <= 0.0) throw std::invalid_argument("SviConfig: epsilon must be positive");
  if (grow_step < 1) throw std::invalid_argument("SviConfig: grow_step must be at least 1");
}

SubchainSpec sample_subchain(long T, long L, SplitMix64& rng) {
  if (L < 2 || L > T) throw std::invalid_argument("sample_subchain: need 2 <= L <= T");
  SubchainSpec spec;
  spec.start = static_cast<long>(rng.uniform_below(static_cast<std::uint64_t>(T - L + 1)));
  spec.len = L;
  return spec;
}

BatchFactors batch_factors(long T, long L) {
  if (L < 2 || L > T) throw std::invalid_argument("batch_factors: need 2 <= L <= T");
  BatchFactors c;
  c.trans = static_cast<double>(T - L + 1) / static_cast<double>(L - 1);
  c.emission = static_cast<double>(T - L + 1) / static_cast<double>(L);
  return c;
}

double step_size(long n, double kappa) { return std::pow(1.0 + static_cast<double>(n), -kappa); }

namespace {

long packed_size(int k, int p) { return static_cast<long>(k) * k + static_cast<long>(k) * (p + 1 + p * p + 1); }

void pack_niw(double* out, const NiwNat& e, int p) {
  long at = 0;
  for (int i = 0; i < p; ++i) out[at++] = e.u1[i];
  out[at++] = e.u2;
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < p; ++c) out[at++] = e.u3(r, c);
  out[at++] = e.u4;
}

}  // namespace

Vector pack_natural(const GlobalVariational& w) {
  const int k = w.num_states();
  const int p = w.dim();
  Vector out(packed_size(k, p));
  long at = 0;
  for (int j = 0; j < k; ++j)
    for (int l = 0; l < k; ++l) out[at++] = w.trans_rows[j].u[l];
  const long block = p + 1 + p * p + 1;
  for (int j = 0; j < k; ++j, at += block) pack_niw(out.data() + at, w.emissions[j], p);
  return out;
}

Vector pack_target(const DirichletNat& prior_trans, const NiwNat& prior_emission,
                   const BatchFactors& c, const ExpectedStats& stats) {
  const int k = stats.num_states();
  const int p = prior_emission.dim();
  Vector out(packed_size(k, p));
  long at = 0;
  for (int j = 0; j < k; ++j)
    for (int l = 0; l < k; ++l) out[at++] = prior_trans.u[l] + c.trans * stats.trans(j, l);
  for (int j = 0; j < k; ++j) {
    const EmissionStats& e = stats.emit[j];
    for (int i = 0; i < p; ++i) out[at++] = prior_emission.u1[i] + c.emission * e.sum_y[i];
    out[at++] = prior_emission.u2 + c.emission * e.count;
    for (int r = 0; r < p; ++r)
      for (int col = 0; col < p; ++col)
        out[at++] = prior_emission.u3(r, col) + c.emission * e.sum_outer(r, col);
    out[at++] = prior_emission.u4 + c.emission * e.s4();
  }
  return out;
}

Vector natural_gradient(const GlobalVariational& w, const BatchFactors& c,
                        const ExpectedStats& stats) {
  return pack_target(w.prior_trans, w.prior_emission, c, stats) - pack_natural(w);
}

GlobalVariational minibatch_update(const GlobalVariational& w, const BatchFactors& c,
                                   const std::vector<ExpectedStats>& stats_list, double rho) {
  if (stats_list.empty()) throw std::invalid_argument("minibatch_update: empty minibatch");
  const int k = w.num_states();
  const double inv_m = 1.0 / static_cast<double>(stats_list.size());

  ExpectedStats avg = stats_list[0];
  for (std::size_t m = 1; m < stats_list.size(); ++m) avg += stats_list[m];
  avg.scale(inv_m);

  GlobalVariational next = w;
  const double keep = 1.0 - rho;
  for (int j = 0; j < k; ++j) {
    next.trans_rows[j].u =
        keep * w.trans_rows[j].u +
        rho * (w.prior_trans.u + c.trans * avg.trans.row(j).transpose()).eval();
    NiwNat& e = next.emissions[j];
    const EmissionStats& s = avg.emit[j];
    e.u1 = keep * w.emissions[j].u1 + rho * (w.prior_emission.u1 + c.emission * s.sum_y);
    e.u2 = keep * w.emissions[j].u2 + rho * (w.prior_emission.u2 + c.emission * s.count);
    e.u3 = keep * w.emissions[j].u3 + rho * (w.prior_emission.u3 + c.emission * s.sum_outer);
    e.u4 = keep * w.emissions[j].u4 + rho * (w.prior_emission.u4 + c.emission * s.s4());
    try {
      e.validate();
    } catch (const std::exception& ex) {
      throw std::runtime_error(std::string("minibatch_update: step left the natural domain at state ") +
                               std::to_string(j) + ": " + ex.what());
    }
  }
  return next;
}

namespace {

// Scaled messages over one buffered window. Forward rows are normalized per
// step (log factors accumulated), backward rows carry their own scaling, so
// either pass can be reused when only the other end of the window moves.
struct WindowPass {
  long begin = 0;  // global index of the window start
  long len = 0;
  RowMatrix pobs;
  std::vector<double> shift;
  RowMatrix alpha;
  std::vector<double> log_scale;
  RowMatrix beta;
};

void fill_pobs_rows(WindowPass& wp, const Eigen::Ref<const RowMatrix>& data,
                    const std::vector<EmissionExpectation>& emissions, long local_begin,
                    long count) {
  const int k = static_cast<int>(emissions.size());
  RowMatrix block(count, k);
  emission_log_densities(emissions, data, wp.begin + local_begin, count, block);
  for (long t = 0; t < count; ++t) {
    const double m = block.row(t).maxCoeff();
    if (!std::isfinite(m) || m <= -1e300)
      throw std::runtime_error("grow_buffer: emission likelihood underflowed in every state");
    wp.shift[local_begin + t] = m;
    for (int j = 0; j < k; ++j) wp.pobs(local_begin + t, j) = std::exp(block(t, j) - m);
  }
}

void forward_from(WindowPass& wp, const Matrix& trans, const Vector& init, long from) {
  const int k = static_cast<int>(trans.rows());
  Eigen::RowVectorXd a(k);
  for (long t = from; t < wp.len; ++t) {
    if (t == 0)
      a = init.transpose().cwiseProduct(wp.pobs.row(0));
    else
      a = (wp.alpha.row(t - 1) * trans).cwiseProduct(wp.pobs.row(t));
    const double c = a.sum();
    if (!(c > 0.0)) throw std::runtime_error("grow_buffer: zero forward mass");
    wp.alpha.row(t) = a / c;
    wp.log_scale[t] = std::log(c);
  }
}

// Computes beta rows from t = top down to t = bottom; row top + 1 must
// already be valid unless top is the last row.
void backward_range(WindowPass& wp, const Matrix& trans, long top, long bottom) {
  const int k = static_cast<int>(trans.rows());
  Eigen::RowVectorXd b(k);
  for (long t = top; t >= bottom; --t) {
    if (t == wp.len - 1) {
      wp.beta.row(t).setConstant(1.0 / k);
      continue;
    }
    b = (trans * wp.beta.row(t + 1).cwiseProduct(wp.pobs.row(t + 1)).transpose()).transpose();
    const double d = b.sum();
    if (!(d > 0.0)) throw std::runtime_error("grow_buffer: zero backward mass");
    wp.beta.row(t) = b / d;
  }
}

Eigen::RowVectorXd marginal_at(const WindowPass& wp, long t) {
  Eigen::RowVectorXd g = wp.alpha.row(t).cwiseProduct(wp.beta.row(t));
  return g / g.sum();
}

}  // namespace

GrowBufResult grow_buffer(const Eigen::Ref<const RowMatrix>& data, const SubchainSpec& spec,
                          const Matrix& trans_surrogate, const Vector& pi_hat,
                          const std::vector<EmissionExpectation>& emissions, double epsilon,
                          int grow_step) {
  const long T = data.rows();
  const int k = static_cast<int>(trans_surrogate.rows());
  if (epsilon <= 0.0) throw std::invalid_argument("grow_buffer: epsilon must be positive");
  if (grow_step < 1) throw std::invalid_argument("grow_buffer: grow_step must be at least 1");
  if (spec.start < 0 || spec.len < 1 || spec.start + spec.len > T ||
      spec.start - spec.buf_left < 0 || spec.start + spec.len + spec.buf_right > T)
    throw std::invalid_argument("grow_buffer: window out of range");

  WindowPass wp;
  wp.begin = spec.start - spec.buf_left;
  wp.len = spec.len + spec.buf_left + spec.buf_right;
  wp.pobs.resize(wp.len, k);
  wp.shift.resize(wp.len);
  wp.alpha.resize(wp.len, k);
  wp.log_scale.resize(wp.len);
  wp.beta.resize(wp.len, k);
  fill_pobs_rows(wp, data, emissions, 0, wp.len);
  forward_from(wp, trans_surrogate, pi_hat, 0);
  backward_range(wp, trans_surrogate, wp.len - 1, 0);

  GrowBufResult result;
  result.added = spec.buf_left + spec.buf_right;

  Eigen::RowVectorXd lo = marginal_at(wp, spec.start - wp.begin);
  Eigen::RowVectorXd hi = marginal_at(wp, spec.start + spec.len - 1 - wp.begin);

  while (wp.begin > 0 || wp.begin + wp.len < T) {
    const long grow_left = std::min<long>(grow_step, wp.begin);
    const long grow_right = std::min<long>(grow_step, T - (wp.begin + wp.len));

    WindowPass next;
    next.begin = wp.begin - grow_left;
    next.len = wp.len + grow_left + grow_right;
    next.pobs.resize(next.len, k);
    next.shift.resize(next.len);
    next.alpha.resize(next.len, k);
    next.log_scale.resize(next.len);
    next.beta.resize(next.len, k);

    // Emission terms never change while the window grows; copy the overlap.
    next.pobs.middleRows(grow_left, wp.len) = wp.pobs;
    std::copy(wp.shift.begin(), wp.shift.end(), next.shift.begin() + grow_left);
    if (grow_left > 0) fill_pobs_rows(next, data, emissions, 0, grow_left);
    if (grow_right > 0) fill_pobs_rows(next, data, emissions, grow_left + wp.len, grow_right);

    if (grow_left == 0) {
      // Forward messages over the old window stay valid; extend to the right.
      next.alpha.topRows(wp.len) = wp.alpha;
      std::copy(wp.log_scale.begin(), wp.log_scale.end(), next.log_scale.begin());
      forward_from(next, trans_surrogate, pi_hat, wp.len);
    } else {
      forward_from(next, trans_surrogate, pi_hat, 0);
    }
    if (grow_right == 0) {
      // Backward messages over the old window stay valid; extend to the left.
      next.beta.bottomRows(wp.len) = wp.beta;
      backward_range(next, trans_surrogate, grow_left - 1, 0);
    } else {
      backward_range(next, trans_surrogate, next.len - 1, 0);
    }

    wp = std::move(next);
    result.added += grow_left + grow_right;
    result.rounds += 1;

    const Eigen::RowVectorXd lo_new = marginal_at(wp, spec.start - wp.begin);
    const Eigen::RowVectorXd hi_new = marginal_at(wp, spec.start + spec.len - 1 - wp.begin);
    const double residual = std::max((lo_new - lo).cwiseAbs().sum(), (hi_new - hi).cwiseAbs().sum());
    lo = lo_new;
    hi = hi_new;
    if (residual <= epsilon) break;
  }

  // Beliefs restricted to the interior subchain; buffer beliefs discarded.
  const long off = spec.start - wp.begin;
  Beliefs& out = result.interior;
  out.marginals.resize(spec.len, k);
  for (long t = 0; t < spec.len; ++t) out.marginals.row(t) = marginal_at(wp, off + t);
  out.pairwise.assign(static_cast<std::size_t>(std::max<long>(spec.len - 1, 0)) * k * k, 0.0);
  for (long t = 0; t + 1 < spec.len; ++t) {
    double total = 0.0;
    for (int j = 0; j < k; ++j)
      for (int l = 0; l < k; ++l) {
        const double v = wp.alpha(off + t, j) * trans_surrogate(j, l) *
                         wp.pobs(off + t + 1, l) * wp.beta(off + t + 1, l);
        out.pair(t, j, l) = v;
        total += v;
      }
    const double inv = 1.0 / total;
    for (int j = 0; j < k; ++j)
      for (int l = 0; l < k; ++l) out.pair(t, j, l) *= inv;
  }
  double log_norm = 0.0;
  for (long t = 0; t < wp.len; ++t) log_norm += wp.log_scale[t] + wp.shift[t];
  out.log_norm = log_norm;  // normalizer of the buffered window
  return result;
}

FitTrace run_svihmm(const Eigen::Ref<const RowMatrix>& train, const GlobalVariational& init,
                    const SviConfig& config, const Eigen::Ref<const RowMatrix>& validation) {
  const long T = train.rows();
  config.validate(T);
  const int k = init.num_states();
  const long L = config.subchain_len;
  const int m = config.minibatch;
  const BatchFactors c = batch_factors(T, L);

  GlobalVariational w = init;
  SplitMix64 sampler = SplitMix64(config.seed).split();
  FitTrace trace;
  double cumulative = 0.0;

  std::vector<SubchainSpec> specs(m);
  std::vector<ExpectedStats> stats(m);
  std::vector<long> added(m);

  for (int n = 0; n < config.iters; ++n) {
    const auto t0 = std::chrono::steady_clock::now();

    const Matrix trans_surrogate = expected_transition(w.trans_rows);
    const Vector pi_hat = estimate_pi(w.trans_rows);
    std::vector<EmissionExpectation> emissions;
    emissions.reserve(k);
    for (const auto& e : w.emissions) emissions.push_back(EmissionExpectation::prepare(e));

    for (int i = 0; i < m; ++i) specs[i] = sample_subchain(T, L, sampler);

    // Local steps are independent; statistics are reduced in index order
    // below, so the result does not depend on the schedule.
#pragma omp parallel for schedule(dynamic, 1) if (m > 1)
    for (int i = 0; i < m; ++i) {
      added[i] = 0;
      if (config.use_growbuf) {
        GrowBufResult gb = grow_buffer(train, specs[i], trans_surrogate, pi_hat, emissions,
                                       config.epsilon, config.grow_step);
        stats[i] = expected_stats(gb.interior, train, specs[i].start);
        added[i] = gb.added;
      } else {
        RowMatrix log_obs(L, k);
        emission_log_densities(emissions, train, specs[i].start, L, log_obs);
        const Beliefs beliefs = forward_backward(pi_hat, trans_surrogate, log_obs);
        stats[i] = expected_stats(beliefs, train, specs[i].start);
      }
    }

    const double rho = step_size(n, config.kappa);
    w = minibatch_update(w, c, stats, rho);

    cumulative += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    long buffer_added = 0;
    for (int i = 0; i < m; ++i) buffer_added += added[i];

    double objective = std::numeric_limits<double>::quiet_NaN();
    if (validation.rows() > 0) {
      objective = predictive_log_prob(w, validation);  // untimed diagnostics
      if (!std::isfinite(objective)) {
        std::cerr << "run_svihmm: non-finite validation objective at iteration " << n << "\n";
        write_checkpoint("svihmm_abort.ckpt", w);
        throw std::runtime_error("run_svihmm: non-finite surrogate objective");
      }
    }
    trace.rows.push_back({n, rho, objective, buffer_added, cumulative});
  }
  trace.final = std::move(w);
  return trace;
}

FitTrace run_svihmm(const Eigen::Ref<const RowMatrix>& train, int num_states,
                    const DirichletNat& prior_trans, const NiwNat& prior_emission,
                    const SviConfig& config, const Eigen::Ref<const RowMatrix>& validation) {
  return run_svihmm(train,
                    initialize_global(train, num_states, prior_trans, prior_emission, config.seed),
                    config, validation);
}

AscentCheck ascent_halfplane_check(const Beliefs& exact, const Beliefs& approx,
                                   const GlobalVariational& w, const BatchFactors& c,
                                   const std::function<ExpectedStats(const Beliefs&)>& stats_fn,
                                   double c_stat_norm) {
  const Vector packed_w = pack_natural(w);
  const Vector g_exact =
      pack_target(w.prior_trans, w.prior_emission, c, stats_fn(exact)) - packed_w;
  const Vector g_approx =
      pack_target(w.prior_trans, w.prior_emission, c, stats_fn(approx)) - packed_w;

  AscentCheck out;
  out.dot = g_exact.dot(g_approx);
  out.grad_norm_max = std::max(g_exact.norm(), g_approx.norm());
  out.stat_norm = c_stat_norm;
  out.eps_bound = out.grad_norm_max / c_stat_norm;
  out.ok = out.dot > 0.0;
  return out;
}

double abs_stat_sum_norm(int num_states, const Eigen::Ref<const RowMatrix>& obs_window,
                         const BatchFactors& c) {
  const long len = obs_window.rows();
  const int k = num_states;
  const int p = static_cast<int>(obs_window.cols());
  double count = 1.0;
  for (long t = 0; t < len; ++t) {
    count *= k;
    if (count > 1e6) throw std::invalid_argument("abs_stat_sum_norm: K^L exceeds enumeration cap");
  }
  const long total = static_cast<long>(count);

  Matrix trans_abs = Matrix::Zero(k, k);
  std::vector<EmissionStats> emit(k);
  for (auto& e : emit) {
    e.sum_y = Vector::Zero(p);
    e.sum_outer = Matrix::Zero(p, p);
  }

  std::vector<int> x(len);
  Vector s1(p);
  Matrix s3(p, p);
  for (long idx = 0; idx < total; ++idx) {
    long rest = idx;
    for (long t = 0; t < len; ++t) {
      x[t] = static_cast<int>(rest % k);
      rest /= k;
    }
    for (long t = 1; t < len; ++t) trans_abs(x[t - 1], x[t]) += 1.0;  // counts are nonnegative
    for (int state = 0; state < k; ++state) {
      s1.setZero();
      s3.setZero();
      double cnt = 0.0;
      for (long t = 0; t < len; ++t) {
        if (x[t] != state) continue;
        s1 += obs_window.row(t).transpose();
        s3 += obs_window.row(t).transpose() * obs_window.row(t);
        cnt += 1.0;
      }
      emit[state].sum_y += s1.cwiseAbs();
      emit[state].sum_outer += s3.cwiseAbs();
      emit[state].count += cnt;
    }
  }

  double sq = 0.0;
  for (int j = 0; j < k; ++j)
    for (int l = 0; l < k; ++l) sq += std::pow(c.trans * trans_abs(j, l), 2);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < p; ++i) sq += std::pow(c.emission * emit[j].sum_y[i], 2);
    sq += std::pow(c.emission * emit[j].count, 2);  // s2
    for (int r = 0; r < p; ++r)
      for (int col = 0; col < p; ++col) sq += std::pow(c.emission * emit[j].sum_outer(r, col), 2);
    sq += std::pow(c.emission * emit[j].s4(), 2);  // s4
  }
  return std::sqrt(sq);
}

}  // namespace svihmm
