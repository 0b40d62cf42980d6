#include "svihmm/stats.hpp"

#include <stdexcept>

namespace svihmm {

ExpectedStats ExpectedStats::zero(int num_states, int dim) {
  ExpectedStats s;
  s.trans = Matrix::Zero(num_states, num_states);
  s.emit.resize(num_states);
  for (auto& e : s.emit) {
    e.sum_y = Vector::Zero(dim);
    e.count = 0.0;
    e.sum_outer = Matrix::Zero(dim, dim);
  }
  return s;
}

ExpectedStats& ExpectedStats::operator+=(const ExpectedStats& other) {
  trans += other.trans;
  for (std::size_t k = 0; k < emit.size(); ++k) {
    emit[k].sum_y += other.emit[k].sum_y;
    emit[k].count += other.emit[k].count;
    emit[k].sum_outer += other.emit[k].sum_outer;
  }
  return *this;
}

ExpectedStats& ExpectedStats::scale(double factor) {
  trans *= factor;
  for (auto& e : emit) {
    e.sum_y *= factor;
    e.count *= factor;
    e.sum_outer *= factor;
  }
  return *this;
}

Matrix expected_transition_stats_serial(const Beliefs& beliefs, bool* no_transitions) {
  const int k = beliefs.num_states();
  const long slices = beliefs.len() - 1;
  if (no_transitions) *no_transitions = slices < 1;
  Matrix trans = Matrix::Zero(k, k);
  for (int j = 0; j < k; ++j)
    for (int l = 0; l < k; ++l) {
      double acc = 0.0;
      for (long t = 0; t < slices; ++t) acc += beliefs.pair(t, j, l);
      trans(j, l) = acc;
    }
  return trans;
}

Matrix expected_transition_stats(const Beliefs& beliefs, bool* no_transitions) {
  const int k = beliefs.num_states();
  const long slices = beliefs.len() - 1;
  if (no_transitions) *no_transitions = slices < 1;
  Matrix trans = Matrix::Zero(k, k);
#pragma omp parallel for schedule(static) collapse(2)
  for (int j = 0; j < k; ++j)
    for (int l = 0; l < k; ++l) {
      double acc = 0.0;
      for (long t = 0; t < slices; ++t) acc += beliefs.pair(t, j, l);
      trans(j, l) = acc;
    }
  return trans;
}

namespace {

EmissionStats state_stats(const Beliefs& beliefs, const Eigen::Ref<const RowMatrix>& obs,
                          long begin, int state) {
  const long len = beliefs.len();
  const int p = static_cast<int>(obs.cols());
  EmissionStats e;
  e.sum_y = Vector::Zero(p);
  e.sum_outer = Matrix::Zero(p, p);
  for (long t = 0; t < len; ++t) {
    const double g = beliefs.marginals(t, state);
    const auto y = obs.row(begin + t);
    e.count += g;
    e.sum_y += g * y.transpose();
    e.sum_outer += g * (y.transpose() * y);
  }
  // Keep s3 exactly symmetric despite accumulation order.
  e.sum_outer = (0.5 * (e.sum_outer + e.sum_outer.transpose())).eval();
  return e;
}

}  // namespace

std::vector<EmissionStats> expected_emission_stats_serial(const Beliefs& beliefs,
                                                          const Eigen::Ref<const RowMatrix>& obs,
                                                          long begin) {
  if (begin + beliefs.len() > obs.rows())
    throw std::invalid_argument("expected_emission_stats: observation window out of range");
  const int k = beliefs.num_states();
  std::vector<EmissionStats> out(k);
  for (int state = 0; state < k; ++state) out[state] = state_stats(beliefs, obs, begin, state);
  return out;
}

std::vector<EmissionStats> expected_emission_stats(const Beliefs& beliefs,
                                                   const Eigen::Ref<const RowMatrix>& obs,
                                                   long begin) {
  if (begin + beliefs.len() > obs.rows())
    throw std::invalid_argument("expected_emission_stats: observation window out of range");
  const int k = beliefs.num_states();
  std::vector<EmissionStats> out(k);
#pragma omp parallel for schedule(static)
  for (int state = 0; state < k; ++state) out[state] = state_stats(beliefs, obs, begin, state);
  return out;
}

ExpectedStats expected_stats(const Beliefs& beliefs, const Eigen::Ref<const RowMatrix>& obs,
                             long begin) {
  ExpectedStats s;
  s.trans = expected_transition_stats(beliefs);
  s.emit = expected_emission_stats(beliefs, obs, begin);
  return s;
}

}  // namespace svihmm
