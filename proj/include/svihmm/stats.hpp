#pragma once

#include <vector>

#include "svihmm/messages.hpp"
#include "svihmm/model.hpp"

namespace svihmm {

// Expected sufficient statistics of one emission block under the local
// beliefs. The two count statistics of the NIW family coincide, so the weight
// is stored once; s4() aliases s2().
struct EmissionStats {
  Vector sum_y;     // s1: sum_t y_t q(x_t = k)
  double count = 0.0;  // s2 = s4: sum_t q(x_t = k)
  Matrix sum_outer;    // s3: sum_t y_t y_t^T q(x_t = k)

  double s2() const { return count; }
  double s4() const { return count; }
};

struct ExpectedStats {
  Matrix trans;                     // K x K expected transition counts
  std::vector<EmissionStats> emit;  // one block per state

  int num_states() const { return static_cast<int>(emit.size()); }
  static ExpectedStats zero(int num_states, int dim);
  ExpectedStats& operator+=(const ExpectedStats& other);
  ExpectedStats& scale(double factor);
};

// trans(j, k) = sum over pairwise slices. With fewer than two timesteps the
// result is all zeros and *no_transitions (if given) is set.
Matrix expected_transition_stats(const Beliefs& beliefs, bool* no_transitions = nullptr);
Matrix expected_transition_stats_serial(const Beliefs& beliefs, bool* no_transitions = nullptr);

// Per-state emission statistics. obs rows [begin, begin + beliefs.len()) pair
// with the belief rows. The OpenMP variant parallelizes over states; each
// state accumulates sequentially over t, so results match the serial
// reference bitwise for any thread count.
std::vector<EmissionStats> expected_emission_stats(const Beliefs& beliefs,
                                                   const Eigen::Ref<const RowMatrix>& obs,
                                                   long begin = 0);
std::vector<EmissionStats> expected_emission_stats_serial(const Beliefs& beliefs,
                                                          const Eigen::Ref<const RowMatrix>& obs,
                                                          long begin = 0);

ExpectedStats expected_stats(const Beliefs& beliefs, const Eigen::Ref<const RowMatrix>& obs,
                             long begin = 0);

}  // namespace svihmm
