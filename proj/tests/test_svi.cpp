#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <omp.h>

#include "svihmm/eval.hpp"
#include "svihmm/svi.hpp"
#include "svihmm/synthetic.hpp"
#include "test_util.hpp"

using namespace svihmm;

namespace {

struct SmallInstance {
  Matrix trans;
  Vector pi;
  RowMatrix log_obs;
  RowMatrix y;
  GlobalVariational w;
  BatchFactors c;
};

SmallInstance random_instance(int k, long len, long T, SplitMix64& rng) {
  SmallInstance inst;
  inst.trans = testing::random_row_stochastic(k, rng);
  inst.pi = testing::random_simplex(k, rng);
  inst.log_obs = testing::random_log_obs(len, k, rng);
  inst.y.resize(len, 1);
  for (long t = 0; t < len; ++t) inst.y(t, 0) = rng.normal();
  inst.w = testing::random_global(k, 1, rng);
  inst.c = batch_factors(T, len);
  return inst;
}

}  // namespace

TEST_CASE("sample_subchain bounds and the degenerate full-length window") {
  SplitMix64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const SubchainSpec spec = sample_subchain(50, 50, rng);
    CHECK(spec.start == 0);
    CHECK(spec.len == 50);
  }
  for (int i = 0; i < 1000000; ++i) {
    const SubchainSpec spec = sample_subchain(1000, 7, rng);
    CHECK(spec.start >= 0);
    CHECK(spec.start + spec.len <= 1000);
  }
  CHECK_THROWS_AS(sample_subchain(5, 6, rng), std::invalid_argument);
}

TEST_CASE("sample_subchain start positions are uniform (chi-square)") {
  SplitMix64 rng(97);
  const long T = 100, L = 2;
  const int cells = static_cast<int>(T - L + 1);  // 99 start positions
  std::vector<long> counts(cells, 0);
  const long n = 100000;
  for (long i = 0; i < n; ++i) counts[sample_subchain(T, L, rng).start]++;
  const double expected = static_cast<double>(n) / cells;
  double chi2 = 0.0;
  for (long c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 0.999 quantile of chi-square with 98 degrees of freedom via
  // Wilson-Hilferty.
  const int df = cells - 1;
  const double z = 3.090232306167813;  // Phi^{-1}(0.999)
  const double h = 2.0 / (9.0 * df);
  const double crit = df * std::pow(1.0 - h + z * std::sqrt(h), 3);
  CHECK(chi2 <= crit);
}

TEST_CASE("batch factors") {
  BatchFactors c = batch_factors(100, 2);
  CHECK(c.trans == doctest::Approx(99.0));
  CHECK(c.emission == doctest::Approx(49.5));
  c = batch_factors(10, 5);
  CHECK(c.trans == doctest::Approx(1.5));
  CHECK(c.emission == doctest::Approx(1.2));
  SplitMix64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const long T = 2 + static_cast<long>(rng.uniform_below(1000));
    const long L = 2 + static_cast<long>(rng.uniform_below(T - 1));
    c = batch_factors(T, L);
    CHECK(c.trans > 0.0);
    CHECK(c.emission > 0.0);
  }
}

TEST_CASE("step size schedule") {
  CHECK(step_size(0, 0.51) == doctest::Approx(1.0));
  CHECK(step_size(0, 1.0) == doctest::Approx(1.0));
  CHECK(step_size(3, 0.5) == doctest::Approx(0.5));
  CHECK(step_size(99, 1.0) == doctest::Approx(0.01));
}

TEST_CASE("config validation") {
  SviConfig config;
  config.subchain_len = 10;
  config.kappa = 0.49;
  CHECK_THROWS_AS(config.validate(100), std::invalid_argument);
  config.kappa = 1.01;
  CHECK_THROWS_AS(config.validate(100), std::invalid_argument);
  config.kappa = 0.5;
  CHECK_NOTHROW(config.validate(100));
  config.subchain_len = 1;
  CHECK_THROWS_AS(config.validate(100), std::invalid_argument);
  config.subchain_len = 101;
  CHECK_THROWS_AS(config.validate(100), std::invalid_argument);
}

TEST_CASE("natural gradient fixed point and decay") {
  SplitMix64 rng(21);
  const int k = 2, p = 1;
  GlobalVariational w = testing::random_global(k, p, rng);
  ExpectedStats stats = ExpectedStats::zero(k, p);
  stats.trans << 0.5, 0.5, 0.25, 0.75;
  for (auto& e : stats.emit) {
    e.sum_y[0] = 0.4;
    e.count = 1.0;
    e.sum_outer(0, 0) = 0.9;
  }
  const BatchFactors c{3.0, 2.0};

  // Land exactly on the target, then the gradient vanishes.
  const GlobalVariational at_target = minibatch_update(w, c, {stats}, 1.0);
  CHECK(natural_gradient(at_target, c, stats).cwiseAbs().maxCoeff() <= 1e-12);

  // One rho = 1 step from anywhere lands on u + c * stats exactly.
  const Vector target = pack_target(w.prior_trans, w.prior_emission, c, stats);
  CHECK((pack_natural(at_target) - target).cwiseAbs().maxCoeff() <= 1e-12);

  // Zero prior, unit factors, zero statistics: the gradient is -w.
  GlobalVariational wz = w;
  wz.prior_trans.u = Vector::Zero(k);
  NiwParams zp;  // a valid emission prior with tiny natural parameters is not
  // representable at exactly zero, so check the transition block only.
  (void)zp;
  const Vector grad = natural_gradient(wz, {1.0, 1.0}, ExpectedStats::zero(k, p));
  for (int j = 0; j < k; ++j)
    for (int l = 0; l < k; ++l)
      CHECK(grad[j * k + l] == doctest::Approx(-w.trans_rows[j].u[l]).epsilon(1e-12));
}

TEST_CASE("minibatch update identities") {
  SplitMix64 rng(22);
  const int k = 2, p = 1;
  const GlobalVariational w = testing::random_global(k, p, rng);
  ExpectedStats stats = ExpectedStats::zero(k, p);
  stats.trans << 1.0, 2.0, 3.0, 4.0;
  for (auto& e : stats.emit) {
    e.sum_y[0] = 1.0;
    e.count = 2.0;
    e.sum_outer(0, 0) = 3.0;
  }
  const BatchFactors c{2.0, 1.5};

  // rho = 0 leaves w untouched.
  const GlobalVariational same = minibatch_update(w, c, {stats}, 0.0);
  CHECK((pack_natural(same) - pack_natural(w)).cwiseAbs().maxCoeff() == 0.0);

  // A minibatch of identical statistics equals the single-subchain update.
  const GlobalVariational one = minibatch_update(w, c, {stats}, 0.37);
  const GlobalVariational two = minibatch_update(w, c, {stats, stats}, 0.37);
  CHECK((pack_natural(one) - pack_natural(two)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("grow_buffer: full-sequence window returns immediately") {
  SplitMix64 rng(33);
  const int k = 2;
  const long T = 40;
  const SmallInstance inst = random_instance(k, T, T, rng);
  RowMatrix data(T, 1);
  for (long t = 0; t < T; ++t) data(t, 0) = rng.normal();
  std::vector<EmissionExpectation> emis;
  for (const auto& e : inst.w.emissions) emis.push_back(EmissionExpectation::prepare(e));

  SubchainSpec spec;
  spec.start = 0;
  spec.len = T;
  const GrowBufResult res = grow_buffer(data, spec, inst.trans, inst.pi, emis, 1e-6, 8);
  CHECK(res.added == 0);
  CHECK(res.rounds == 0);
}

TEST_CASE("grow_buffer: slack tolerance stops after one growth round") {
  SplitMix64 rng(34);
  const int k = 2;
  const long T = 200;
  RowMatrix data(T, 1);
  for (long t = 0; t < T; ++t) data(t, 0) = rng.normal();
  const GlobalVariational w = testing::random_global(k, 1, rng);
  const Matrix trans = expected_transition(w.trans_rows);
  const Vector pi = estimate_pi(w.trans_rows);
  std::vector<EmissionExpectation> emis;
  for (const auto& e : w.emissions) emis.push_back(EmissionExpectation::prepare(e));

  SubchainSpec spec;
  spec.start = 90;
  spec.len = 10;
  // epsilon = 2 can never be exceeded by an L1 distance of distributions.
  const GrowBufResult res = grow_buffer(data, spec, trans, pi, emis, 2.0, 5);
  CHECK(res.rounds == 1);
  CHECK(res.added == 10);  // grow_step per side
}

TEST_CASE("grow_buffer grown to the full sequence reproduces exact beliefs") {
  SplitMix64 rng(35);
  const int k = 3;
  const long T = 60;
  RowMatrix data(T, 2);
  for (long t = 0; t < T; ++t)
    for (int i = 0; i < 2; ++i) data(t, i) = rng.normal();
  const GlobalVariational w = testing::random_global(k, 2, rng);
  const Matrix trans = expected_transition(w.trans_rows);
  const Vector pi = estimate_pi(w.trans_rows);
  std::vector<EmissionExpectation> emis;
  for (const auto& e : w.emissions) emis.push_back(EmissionExpectation::prepare(e));

  SubchainSpec spec;
  spec.start = 25;
  spec.len = 8;
  // epsilon small enough that growth only stops at the sequence ends
  const GrowBufResult res = grow_buffer(data, spec, trans, pi, emis, 1e-300, 7);
  CHECK(res.added == T - spec.len);

  RowMatrix log_obs(T, k);
  emission_log_densities(emis, data, 0, T, log_obs);
  const Beliefs full = forward_backward(pi, trans, log_obs);
  for (long t = 0; t < spec.len; ++t)
    for (int j = 0; j < k; ++j)
      CHECK(std::abs(res.interior.marginals(t, j) - full.marginals(spec.start + t, j)) <= 1e-12);
  for (long t = 0; t + 1 < spec.len; ++t)
    for (int j = 0; j < k; ++j)
      for (int l = 0; l < k; ++l)
        CHECK(std::abs(res.interior.pair(t, j, l) - full.pair(spec.start + t, j, l)) <= 1e-12);
}

TEST_CASE("grow_buffer endpoint residuals shrink with buffer size") {
  // Monotone improvement of the endpoint beliefs as the buffer widens,
  // measured against the exact full-chain beliefs.
  const HmmParams truth = make_rc_params();
  const long T = 3000;
  const RowMatrix data = sample_hmm(truth, T, 17).obs;
  const int k = truth.num_states();

  // A sharply informed variational state built from the truth.
  GlobalVariational w;
  w.prior_trans.u = Vector::Zero(k);
  NiwParams prior_std;
  prior_std.mean = Vector::Zero(2);
  prior_std.kappa = 1.0;
  prior_std.scale = Matrix::Identity(2, 2);
  prior_std.dof = 5.0;
  w.prior_emission = niw_to_natural(prior_std);
  w.trans_rows.resize(k);
  w.emissions.resize(k);
  for (int j = 0; j < k; ++j) {
    w.trans_rows[j].u = 2000.0 * truth.trans.row(j).transpose();
    NiwParams e;
    e.mean = truth.emissions[j].mean;
    e.kappa = 1000.0;
    e.dof = 1000.0;
    e.scale = truth.emissions[j].cov * (e.dof - 3.0);
    w.emissions[j] = niw_to_natural(e);
  }
  const Matrix trans = expected_transition(w.trans_rows);
  const Vector pi = estimate_pi(w.trans_rows);
  std::vector<EmissionExpectation> emis;
  for (const auto& e : w.emissions) emis.push_back(EmissionExpectation::prepare(e));

  RowMatrix log_obs(T, k);
  emission_log_densities(emis, data, 0, T, log_obs);
  const Beliefs full = forward_backward(pi, trans, log_obs);

  SplitMix64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const SubchainSpec spec = sample_subchain(T - 200, 5, rng);
    SubchainSpec inner = spec;
    inner.start += 100;  // keep room for buffers on both sides
    double prev = std::numeric_limits<double>::infinity();
    for (long buf : {0L, 4L, 8L, 16L, 32L}) {
      SubchainSpec buffered = inner;
      buffered.buf_left = buffered.buf_right = buf;
      // epsilon tiny and grow_step large: a single fixed-size window pass
      const GrowBufResult res =
          grow_buffer(data, buffered, trans, pi, emis, 2.0, 1);
      double err = 0.0;
      for (int j = 0; j < k; ++j) {
        err = std::max(err, std::abs(res.interior.marginals(0, j) -
                                     full.marginals(inner.start, j)));
        err = std::max(err, std::abs(res.interior.marginals(inner.len - 1, j) -
                                     full.marginals(inner.start + inner.len - 1, j)));
      }
      CHECK(err <= prev + 1e-12);
      prev = err;
    }
  }
}

TEST_CASE("run_svihmm: zero iterations returns the initialization") {
  const HmmParams truth = make_dd_params();
  const RowMatrix y = sample_hmm(truth, 500, 2).obs;
  const auto [prior_trans, prior_emission] = default_prior(y, 4);
  const GlobalVariational init = initialize_global(y, 4, prior_trans, prior_emission, 3);
  SviConfig config;
  config.subchain_len = 10;
  config.iters = 0;
  config.seed = 3;
  const FitTrace trace = run_svihmm(y, init, config);
  CHECK(trace.rows.empty());
  CHECK((pack_natural(trace.final) - pack_natural(init)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("run_svihmm is deterministic given the seed, across thread counts") {
  const HmmParams truth = make_rc_params();
  const RowMatrix y = sample_hmm(truth, 2000, 8).obs;
  const auto [prior_trans, prior_emission] = default_prior(y, 8);
  SviConfig config;
  config.subchain_len = 20;
  config.minibatch = 6;
  config.iters = 15;
  config.kappa = 0.6;
  config.seed = 77;

  const FitTrace a = run_svihmm(y, 8, prior_trans, prior_emission, config);
  const FitTrace b = run_svihmm(y, 8, prior_trans, prior_emission, config);
  CHECK((pack_natural(a.final) - pack_natural(b.final)).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].rho == b.rows[i].rho);
    CHECK(a.rows[i].buffer_added == b.rows[i].buffer_added);
  }

  const int threads = omp_get_max_threads();
  omp_set_num_threads(1);
  const FitTrace c = run_svihmm(y, 8, prior_trans, prior_emission, config);
  omp_set_num_threads(threads);
  CHECK((pack_natural(a.final) - pack_natural(c.final)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one svi step with L = T lands on the degenerate-factor target") {
  SplitMix64 rng(404);
  const long T = 30;
  const int k = 2;
  RowMatrix y(T, 1);
  for (long t = 0; t < T; ++t) y(t, 0) = rng.normal();
  const auto [prior_trans, prior_emission] = default_prior(y, k);
  const GlobalVariational init = initialize_global(y, k, prior_trans, prior_emission, 11);

  SviConfig config;
  config.subchain_len = T;  // the single admissible window is the whole chain
  config.minibatch = 1;
  config.kappa = 1.0;  // rho_0 = 1 regardless
  config.iters = 1;
  config.use_growbuf = false;
  config.seed = 11;
  const FitTrace trace = run_svihmm(y, init, config);

  // Expected stats under the init surrogates over the whole chain.
  const Matrix trans = expected_transition(init.trans_rows);
  const Vector pi = estimate_pi(init.trans_rows);
  std::vector<EmissionExpectation> emis;
  for (const auto& e : init.emissions) emis.push_back(EmissionExpectation::prepare(e));
  RowMatrix log_obs(T, k);
  emission_log_densities(emis, y, 0, T, log_obs);
  const ExpectedStats stats = expected_stats(forward_backward(pi, trans, log_obs), y);

  const BatchFactors c = batch_factors(T, T);
  CHECK(c.trans == doctest::Approx(1.0 / (T - 1)).epsilon(1e-15));
  CHECK(c.emission == doctest::Approx(1.0 / T).epsilon(1e-15));
  const Vector target = pack_target(prior_trans, prior_emission, c, stats);
  CHECK((pack_natural(trace.final) - target).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("unbiasedness: subchain average equals edge-weighted batch statistics") {
  SplitMix64 rng(3141);
  const int k = 2;
  const long T = 30;
  for (long L : {3L, 5L}) {
    const Matrix trans = testing::random_row_stochastic(k, rng);
    const Vector pi = testing::random_simplex(k, rng);
    const RowMatrix log_obs = testing::random_log_obs(T, k, rng);
    RowMatrix y(T, 1);
    for (long t = 0; t < T; ++t) y(t, 0) = rng.normal();

    const Beliefs full = forward_backward(pi, trans, log_obs);
    const ExpectedStats batch = expected_stats(full, y);
    const BatchFactors c = batch_factors(T, L);
    const long windows = T - L + 1;

    // Average the c-scaled statistics of every subchain, with beliefs
    // restricted from the exact full-chain beliefs.
    ExpectedStats avg = ExpectedStats::zero(k, 1);
    for (long s = 0; s < windows; ++s) {
      Beliefs sub;
      sub.marginals = full.marginals.middleRows(s, L);
      sub.pairwise.assign(static_cast<std::size_t>(L - 1) * k * k, 0.0);
      for (long t = 0; t + 1 < L; ++t)
        for (int j = 0; j < k; ++j)
          for (int l = 0; l < k; ++l) sub.pair(t, j, l) = full.pair(s + t, j, l);
      ExpectedStats stats = expected_stats(sub, y, s);
      stats.trans *= c.trans;
      for (auto& e : stats.emit) {
        e.sum_y *= c.emission;
        e.count *= c.emission;
        e.sum_outer *= c.emission;
      }
      avg += stats;
    }
    avg.scale(1.0 / static_cast<double>(windows));

    // Edge-weighted batch statistics: transition t is covered by n_t
    // subchains, position t by m_t.
    ExpectedStats weighted = ExpectedStats::zero(k, 1);
    for (long t = 1; t < T; ++t) {
      const long n_t = std::min(t, windows) - std::max(t - L + 1, 0L) + ((t - L + 1 > 0) ? 0 : 0);
      const long lo = std::max(t - L + 1, 0L);
      const long hi = std::min(t - 1, windows - 1);
      const double cover = static_cast<double>(hi - lo + 1);
      (void)n_t;
      for (int j = 0; j < k; ++j)
        for (int l = 0; l < k; ++l)
          weighted.trans(j, l) += (c.trans * cover / windows) * full.pair(t - 1, j, l);
    }
    for (long t = 0; t < T; ++t) {
      const long lo = std::max(t - L + 1, 0L);
      const long hi = std::min(t, windows - 1);
      const double cover = static_cast<double>(hi - lo + 1);
      const double wgt = c.emission * cover / windows;
      for (int j = 0; j < k; ++j) {
        const double g = full.marginals(t, j);
        weighted.emit[j].sum_y[0] += wgt * g * y(t, 0);
        weighted.emit[j].count += wgt * g;
        weighted.emit[j].sum_outer(0, 0) += wgt * g * y(t, 0) * y(t, 0);
      }
    }

    CHECK((avg.trans - weighted.trans).cwiseAbs().maxCoeff() <= 1e-12 * T);
    for (int j = 0; j < k; ++j) {
      CHECK(std::abs(avg.emit[j].sum_y[0] - weighted.emit[j].sum_y[0]) <= 1e-12 * T);
      CHECK(std::abs(avg.emit[j].count - weighted.emit[j].count) <= 1e-12 * T);
      CHECK(std::abs(avg.emit[j].sum_outer(0, 0) - weighted.emit[j].sum_outer(0, 0)) <= 1e-12 * T);
    }

    // Count families deviate from the unweighted batch statistics only at the
    // sequence edges.
    const double bound = 2.0 * (L - 2) / static_cast<double>(T - 1) + 1e-12;
    CHECK((avg.trans - batch.trans).cwiseAbs().sum() / batch.trans.sum() <= bound);
    double count_dev = 0.0, count_total = 0.0;
    for (int j = 0; j < k; ++j) {
      count_dev += std::abs(avg.emit[j].count - batch.emit[j].count);
      count_total += batch.emit[j].count;
    }
    CHECK(count_dev / count_total <= bound);
  }
}

TEST_CASE("ascent half-plane check: identical beliefs and perturbed beliefs") {
  SplitMix64 rng(999);
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_below(2));
    const long len = 3 + static_cast<long>(rng.uniform_below(4));
    const long T = len + 5 + static_cast<long>(rng.uniform_below(50));
    SmallInstance inst = random_instance(k, len, T, rng);

    const Beliefs exact = brute_force_beliefs(inst.pi, inst.trans, inst.log_obs);
    auto stats_fn = [&](const Beliefs& b) { return expected_stats(b, inst.y); };
    const double stat_norm = abs_stat_sum_norm(k, inst.y, inst.c);

    // Identical beliefs: dot = ||grad||^2 >= 0.
    const AscentCheck self = ascent_halfplane_check(exact, exact, inst.w, inst.c, stats_fn, stat_norm);
    CHECK(self.dot >= 0.0);
    CHECK(self.ok);

    // Mix toward an independent random distribution, scaled so the joint
    // perturbation respects the theorem's epsilon bound.
    const Vector g_exact = natural_gradient(inst.w, inst.c, stats_fn(exact));
    const double eps_ok = g_exact.norm() / stat_norm;

    // Build the mixture joint and its marginalized beliefs by enumeration.
    const long total = static_cast<long>(std::pow(k, len));
    std::vector<double> q_star(total), r(total);
    double rz = 0.0;
    for (long idx = 0; idx < total; ++idx) {
      r[idx] = 0.05 + rng.uniform();
      rz += r[idx];
    }
    for (auto& v : r) v /= rz;
    {
      std::vector<int> x(len);
      for (long idx = 0; idx < total; ++idx) {
        long rest = idx;
        for (long t = 0; t < len; ++t) {
          x[t] = static_cast<int>(rest % k);
          rest /= k;
        }
        double lw = std::log(inst.pi[x[0]]) + inst.log_obs(0, x[0]);
        for (long t = 1; t < len; ++t)
          lw += std::log(inst.trans(x[t - 1], x[t])) + inst.log_obs(t, x[t]);
        q_star[idx] = lw;
      }
      const double mx = *std::max_element(q_star.begin(), q_star.end());
      double z = 0.0;
      for (auto& v : q_star) {
        v = std::exp(v - mx);
        z += v;
      }
      for (auto& v : q_star) v /= z;
    }
    double max_gap = 0.0;
    for (long idx = 0; idx < total; ++idx) max_gap = std::max(max_gap, std::abs(r[idx] - q_star[idx]));
    const double lambda = std::min(1.0, 0.99 * eps_ok / max_gap);

    Beliefs approx;
    approx.marginals = RowMatrix::Zero(len, k);
    approx.pairwise.assign(static_cast<std::size_t>(len - 1) * k * k, 0.0);
    approx.log_norm = exact.log_norm;
    {
      std::vector<int> x(len);
      for (long idx = 0; idx < total; ++idx) {
        const double q = (1.0 - lambda) * q_star[idx] + lambda * r[idx];
        long rest = idx;
        for (long t = 0; t < len; ++t) {
          x[t] = static_cast<int>(rest % k);
          rest /= k;
        }
        for (long t = 0; t < len; ++t) approx.marginals(t, x[t]) += q;
        for (long t = 0; t + 1 < len; ++t) approx.pair(t, x[t], x[t + 1]) += q;
      }
    }

    const AscentCheck check =
        ascent_halfplane_check(exact, approx, inst.w, inst.c, stats_fn, stat_norm);
    if (!check.ok) ++failures;
    CHECK(lambda * max_gap <= check.eps_bound + 1e-15);
  }
  CHECK(failures == 0);
}

TEST_CASE("ascent bound scaling identity in the batch factor") {
  SplitMix64 rng(1001);
  const int k = 2;
  const long len = 4, T = 40;
  SmallInstance inst = random_instance(k, len, T, rng);
  const Beliefs exact = brute_force_beliefs(inst.pi, inst.trans, inst.log_obs);
  auto stats_fn = [&](const Beliefs& b) { return expected_stats(b, inst.y); };

  for (double s : {1.0, 3.0, 10.0}) {
    const BatchFactors scaled{s * inst.c.trans, s * inst.c.emission};
    const double stat_norm = abs_stat_sum_norm(k, inst.y, scaled);
    const AscentCheck check =
        ascent_halfplane_check(exact, exact, inst.w, scaled, stats_fn, stat_norm);
    // eps_bound * ||c^T t|| recovers the max gradient norm exactly.
    CHECK(check.eps_bound * check.stat_norm == doctest::Approx(check.grad_norm_max).epsilon(1e-15));
  }
}
