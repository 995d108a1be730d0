#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "trace/error.hpp"

namespace trace {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// Unit-normalize with a fixpoint guard: vectors whose norm is already within
// 1e-12 of one are returned unchanged, so repeated normalization is
// byte-stable (round-trip files re-serialize identically).
inline std::vector<double> normalized_unit(std::vector<double> v) {
  const double n = norm(v);
  if (n == 0.0) throw NumericError("cannot normalize a zero-norm vector");
  if (std::abs(n - 1.0) <= 1e-12) return v;
  for (double& x : v) x /= n;
  return v;
}

}  // namespace trace
