#pragma once

#include <cmath>
#include <initializer_list>
#include <span>
#include <vector>

namespace gramsr {

// Correctly rounded sum of a sequence of doubles (Shewchuk partials with a
// half-even fix-up on the final rounding). Inputs must be finite.
inline double exact_sum(std::span<const double> xs) {
  std::vector<double> partials;
  for (double x : xs) {
    std::size_t i = 0;
    for (double y : partials) {
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  std::size_t n = partials.size();
  if (n == 0) return 0.0;
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    lo = y - (hi - x);
    if (lo != 0.0) break;
  }
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

inline double exact_sum(std::initializer_list<double> xs) { return exact_sum(std::span(xs.begin(), xs.size())); }

// Correctly rounded sum_k coeff[k] * value[k]. Each product is split into
// its rounded value and exact error term before summation.
inline double exact_dot(std::span<const double> coeff, std::span<const double> value) {
  std::vector<double> terms;
  terms.reserve(2 * coeff.size());
  for (std::size_t k = 0; k < coeff.size(); ++k) {
    const double p = coeff[k] * value[k];
    terms.push_back(p);
    terms.push_back(std::fma(coeff[k], value[k], -p));
  }
  return exact_sum(terms);
}

}  // namespace gramsr
