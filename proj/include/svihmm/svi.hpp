#pragma once

#include <cstdint>
#include <functional>

#include "svihmm/batch_vb.hpp"
#include "svihmm/rng.hpp"

namespace svihmm {

// Sampled window of the observation sequence. start is 0-based; the interior
// covers [start, start + len) and the buffers extend it on each side without
// ever leaving [0, T).
struct SubchainSpec {
  long start = 0;
  long len = 0;
  long buf_left = 0;
  long buf_right = 0;
};

struct SviConfig {
  long subchain_len = 2;    // L
  int minibatch = 1;        // M subchains per update
  double kappa = 0.5;       // forgetting rate of rho_n = (1 + n)^(-kappa)
  int iters = 100;
  double epsilon = 1e-6;    // buffer-growth tolerance
  int grow_step = 8;        // observations added per side and round
  bool use_growbuf = true;
  std::uint64_t seed = 1;

  void validate(long T) const;
};

// Uniform window start over the T - L + 1 admissible positions; buffers zero.
SubchainSpec sample_subchain(long T, long L, SplitMix64& rng);

// Scaling that makes a subchain gradient an unbiased estimate of the
// full-data natural gradient: trans = (T-L+1)/(L-1), emission = (T-L+1)/L.
struct BatchFactors {
  double trans = 1.0;
  double emission = 1.0;
};
BatchFactors batch_factors(long T, long L);

double step_size(long n, double kappa);

// Flat natural-parameter coordinates, used by the gradient diagnostics and
// perturbation tests. Layout: transition rows (row-major K*K), then per state
// u1 (p), u2, u3 (row-major p*p), u4.
Vector pack_natural(const GlobalVariational& w);
// u + c .* stats in the same layout.
Vector pack_target(const DirichletNat& prior_trans, const NiwNat& prior_emission,
                   const BatchFactors& c, const ExpectedStats& stats);

// Noisy natural gradient: (u + c .* stats) - w. Adding it to w with step 1
// lands exactly on the scaled-statistics target.
Vector natural_gradient(const GlobalVariational& w, const BatchFactors& c,
                        const ExpectedStats& stats);

// Robbins-Monro update over a minibatch of subchain statistics:
// w' = (1 - rho) w + rho (u + mean_S c .* stats_S). Statistics are averaged
// in index order so results do not depend on how the local steps were
// scheduled. Throws if the step leaves the natural-parameter domain.
GlobalVariational minibatch_update(const GlobalVariational& w, const BatchFactors& c,
                                   const std::vector<ExpectedStats>& stats_list, double rho);

struct GrowBufResult {
  Beliefs interior;   // beliefs restricted to the subchain, buffers discarded
  long added = 0;     // total buffer observations (both sides)
  int rounds = 0;     // growth rounds performed
};

// Adaptive buffering (the GrowBuf routine): repeatedly extend the window by
// grow_step observations per side, rerun message passing over the buffered
// window (initialized with pi at its left edge), and stop once the L1
// residual of the interior endpoint beliefs between consecutive rounds is at
// most epsilon, or the window has hit both sequence ends (messages exact).
// One-sided growth reuses the pass from the unchanged side; the returned
// log_norm is the buffered window's normalizer.
GrowBufResult grow_buffer(const Eigen::Ref<const RowMatrix>& data, const SubchainSpec& spec,
                          const Matrix& trans_surrogate, const Vector& pi_hat,
                          const std::vector<EmissionExpectation>& emissions, double epsilon,
                          int grow_step);

// Full SVIHMM loop (stochastic natural-gradient ascent on the ELBO with
// uniform subchain minibatches). validation may be empty; when present, the
// per-iteration objective is the average per-observation predictive
// log-probability on it, evaluated outside the timed region.
FitTrace run_svihmm(const Eigen::Ref<const RowMatrix>& train, int num_states,
                    const DirichletNat& prior_trans, const NiwNat& prior_emission,
                    const SviConfig& config,
                    const Eigen::Ref<const RowMatrix>& validation = RowMatrix());
FitTrace run_svihmm(const Eigen::Ref<const RowMatrix>& train, const GlobalVariational& init,
                    const SviConfig& config,
                    const Eigen::Ref<const RowMatrix>& validation = RowMatrix());

struct AscentCheck {
  double dot = 0.0;          // inner product of the two noisy gradients
  double eps_bound = 0.0;    // sufficient tolerance M / ||c^T t||_2
  double grad_norm_max = 0.0;
  double stat_norm = 0.0;    // the ||c^T t||_2 denominator, echoed
  bool ok = false;           // dot > 0
};

// Half-plane diagnostic for the ascent-direction guarantee. stats_fn maps
// beliefs to expected statistics over the same subchain; c_stat_norm is
// ||c^T t||_2 with sum_x |t_j(x, y)| per coordinate (see abs_stat_sum_norm).
AscentCheck ascent_halfplane_check(const Beliefs& exact, const Beliefs& approx,
                                   const GlobalVariational& w, const BatchFactors& c,
                                   const std::function<ExpectedStats(const Beliefs&)>& stats_fn,
                                   double c_stat_norm);

// Enumerates all K^L state sequences of a small window and returns
// sqrt( sum_j (c_j sum_x |t_j(x, y)|)^2 ). Refuses K^L > 10^6.
double abs_stat_sum_norm(int num_states, const Eigen::Ref<const RowMatrix>& obs_window,
                         const BatchFactors& c);

}  // namespace svihmm
