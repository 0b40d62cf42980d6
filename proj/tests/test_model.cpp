#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "svihmm/model.hpp"
#include "svihmm/synthetic.hpp"
#include "test_util.hpp"

using namespace svihmm;

TEST_CASE("niw natural-parameter map, p = 1 hand values") {
  NiwParams a;
  a.mean = Vector::Constant(1, 0.0);
  a.kappa = 1.0;
  a.scale = Matrix::Constant(1, 1, 1.0);
  a.dof = 4.0;
  NiwNat na = niw_to_natural(a);
  CHECK(na.u1[0] == doctest::Approx(0.0));
  CHECK(na.u2 == doctest::Approx(1.0));
  CHECK(na.u3(0, 0) == doctest::Approx(1.0));
  CHECK(na.u4 == doctest::Approx(7.0));

  NiwParams b;
  b.mean = Vector::Constant(1, 2.0);
  b.kappa = 3.0;
  b.scale = Matrix::Constant(1, 1, 5.0);
  b.dof = 4.0;
  NiwNat nb = niw_to_natural(b);
  CHECK(nb.u1[0] == doctest::Approx(6.0));
  CHECK(nb.u2 == doctest::Approx(3.0));
  CHECK(nb.u3(0, 0) == doctest::Approx(17.0));
  CHECK(nb.u4 == doctest::Approx(7.0));

  const NiwParams back = niw_from_natural(nb);
  CHECK(back.mean[0] == doctest::Approx(2.0));
  CHECK(back.kappa == doctest::Approx(3.0));
  CHECK(back.scale(0, 0) == doctest::Approx(5.0));
  CHECK(back.dof == doctest::Approx(4.0));
}

TEST_CASE("niw round trip is the identity on valid parameters") {
  SplitMix64 rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const int p = 1 + static_cast<int>(rng.uniform_below(3));
    const NiwParams params = testing::random_niw_params(p, rng);
    const NiwParams back = niw_from_natural(niw_to_natural(params));
    CHECK((back.mean - params.mean).cwiseAbs().maxCoeff() <= 1e-12 * (1 + params.mean.cwiseAbs().maxCoeff()));
    CHECK(back.kappa == doctest::Approx(params.kappa).epsilon(1e-12));
    CHECK((back.scale - params.scale).cwiseAbs().maxCoeff() <=
          1e-12 * (1 + params.scale.cwiseAbs().maxCoeff()));
    CHECK(back.dof == doctest::Approx(params.dof).epsilon(1e-12));
  }
}

TEST_CASE("niw validation rejects bad inputs") {
  NiwParams bad;
  bad.mean = Vector::Constant(1, 0.0);
  bad.kappa = -1.0;
  bad.scale = Matrix::Constant(1, 1, 1.0);
  bad.dof = 4.0;
  CHECK_THROWS_AS(niw_to_natural(bad), std::invalid_argument);

  bad.kappa = 1.0;
  bad.scale = Matrix::Constant(1, 1, -2.0);
  CHECK_THROWS_AS(niw_to_natural(bad), std::invalid_argument);

  NiwNat nn;
  nn.u1 = Vector::Constant(1, 0.0);
  nn.u2 = -1.0;
  nn.u3 = Matrix::Constant(1, 1, 1.0);
  nn.u4 = 7.0;
  CHECK_THROWS_AS(niw_from_natural(nn), std::invalid_argument);
}

TEST_CASE("dirichlet mean lies on the simplex") {
  SplitMix64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_below(6));
    const Vector mean = dirichlet_mean(testing::random_dirichlet_nat(k, rng));
    CHECK(mean.minCoeff() >= 0.0);
    CHECK(mean.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("stationary distribution examples") {
  Matrix sym(2, 2);
  sym << 0.5, 0.5, 0.5, 0.5;
  Vector pi = stationary_distribution(sym);
  CHECK(pi[0] == doctest::Approx(0.5).epsilon(1e-12));

  Matrix a(2, 2);
  a << 0.9, 0.1, 0.5, 0.5;
  pi = stationary_distribution(a);
  CHECK(pi[0] == doctest::Approx(5.0 / 6.0).epsilon(1e-10));
  CHECK(pi[1] == doctest::Approx(1.0 / 6.0).epsilon(1e-10));

  const HmmParams dd = make_dd_params();
  pi = stationary_distribution(dd.trans);
  for (int j = 0; j < 8; ++j) CHECK(pi[j] == doctest::Approx(0.125).epsilon(1e-10));
}

TEST_CASE("stationary distribution satisfies the fixed-point equation") {
  SplitMix64 rng(33);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_below(5));
    const Matrix a = testing::random_row_stochastic(k, rng);
    const Vector pi = stationary_distribution(a);
    CHECK((a.transpose() * pi - pi).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(pi.minCoeff() >= 0.0);
    CHECK(pi.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("stationary distribution rejects an oscillating chain") {
  Matrix a(3, 3);
  a << 0, 1, 0,
       0, 0, 1,
       0, 1, 0;
  CHECK_THROWS_AS(stationary_distribution(a), std::runtime_error);
}

TEST_CASE("sample_hmm absorbing dynamics and degenerate emissions") {
  HmmParams params;
  params.init_dist = Vector::Zero(2);
  params.init_dist[0] = 1.0;
  params.trans = Matrix::Identity(2, 2);
  params.emissions.resize(2);
  for (int j = 0; j < 2; ++j) {
    params.emissions[j].mean = Vector::Constant(1, j == 0 ? 4.0 : -4.0);
    params.emissions[j].cov = Matrix::Constant(1, 1, 1e-12);
  }
  const HmmSample sample = sample_hmm(params, 200, 5);
  for (long t = 0; t < 200; ++t) {
    CHECK(sample.states[t] == 0);
    CHECK(std::abs(sample.obs(t, 0) - 4.0) <= 1e-5);
  }
}

TEST_CASE("sample_hmm is bit-reproducible for a fixed seed") {
  const HmmParams params = make_rc_params();
  const HmmSample a = sample_hmm(params, 500, 99);
  const HmmSample b = sample_hmm(params, 500, 99);
  CHECK(a.states == b.states);
  CHECK((a.obs - b.obs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sample_hmm empirical transition frequencies match the DD matrix") {
  const HmmParams params = make_dd_params();
  const long T = 100000;
  const HmmSample sample = sample_hmm(params, T, 12345);
  const int k = params.num_states();
  Matrix counts = Matrix::Zero(k, k);
  Vector visits = Vector::Zero(k);
  for (long t = 1; t < T; ++t) {
    counts(sample.states[t - 1], sample.states[t]) += 1.0;
    visits[sample.states[t - 1]] += 1.0;
  }
  for (int j = 0; j < k; ++j) {
    if (visits[j] < 100) continue;  // a state the chain barely reached carries no signal
    for (int l = 0; l < k; ++l) {
      const double p = params.trans(j, l);
      const double freq = counts(j, l) / visits[j];
      const double se = std::sqrt(p * (1 - p) / visits[j]);
      CHECK(std::abs(freq - p) <= 3.0 * se + 1e-12);
    }
  }
}
