#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace softdag {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(sum_i exp(x_i)) with max subtraction. Empty input gives -inf.
inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return kNegInf;
  const double m = *std::max_element(xs.begin(), xs.end());
  if (m == kNegInf) return kNegInf;
  if (std::isinf(m)) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

// log(exp(a) + exp(b))
inline double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == kNegInf) return a;
  return a + std::log1p(std::exp(b - a));
}

// In-place log-softmax with optional inverse temperature applied first.
inline void log_softmax_inplace(std::span<double> xs, double scale = 1.0) {
  for (double& x : xs) x *= scale;
  const double z = log_sum_exp(xs);
  for (double& x : xs) x -= z;
}

inline std::vector<double> log_softmax(std::span<const double> xs, double scale = 1.0) {
  std::vector<double> out(xs.begin(), xs.end());
  log_softmax_inplace(out, scale);
  return out;
}

}  // namespace softdag
