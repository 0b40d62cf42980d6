#pragma once

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>

namespace svihmm {

inline double digamma(double x) { return boost::math::digamma(x); }

// Multivariate digamma: sum_{i=1..p} psi(a + (1 - i) / 2).
inline double mv_digamma(double a, int p) {
  double s = 0.0;
  for (int i = 1; i <= p; ++i) s += digamma(a + 0.5 * (1 - i));
  return s;
}

// Log multivariate gamma: p(p-1)/4 * ln(pi) + sum_{i=1..p} lgamma(a + (1 - i) / 2).
inline double mv_lgamma(double a, int p) {
  double s = 0.25 * p * (p - 1) * 1.1447298858494001741434273513531;
  for (int i = 1; i <= p; ++i) s += std::lgamma(a + 0.5 * (1 - i));
  return s;
}

}  // namespace svihmm
