#pragma once

#include <random>

#include "nasopt/rng.hpp"
#include "nasopt/tensor.hpp"

namespace testing {

inline nasopt::Tensor random_tensor(nasopt::Shape s, nasopt::Rng& rng, double lo = -1.0, double hi = 1.0) {
  nasopt::Tensor t(std::move(s));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline double max_abs_diff(const nasopt::Tensor& a, const nasopt::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Conv-path cell: 1 -> 2 -> 7 with a 3x3 conv at node 2.
inline constexpr const char* kConvPath = "E:100000000010000000000|O:00000|B:0";

}  // namespace testing
