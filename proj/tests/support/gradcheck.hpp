#pragma once

// Finite-difference gradient checking against Parameter storage. The forward
// callback must rebuild the whole computation from the Parameter's current
// float values (typically on a Precision::f64 graph with the tape disabled,
// so the FD noise floor sits far below the tolerance being enforced).

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "synseg/tensor.hpp"

namespace synseg::testing {

inline double fd_grad_entry(Parameter& p, int64_t i, const std::function<double()>& forward,
                            double eps) {
  const float saved = p.value[i];
  p.value[i] = static_cast<float>(static_cast<double>(saved) + eps);
  const double up = forward();
  p.value[i] = static_cast<float>(static_cast<double>(saved) - eps);
  const double dn = forward();
  p.value[i] = saved;
  return (up - dn) / (2.0 * eps);
}

struct GradAgreement {
  double max_rel = 0;
  double worst_analytic = 0;
  double worst_fd = 0;
  std::string worst_where;
  int checked = 0;
};

// Relative error with an absolute floor so near-zero entries do not explode
// the ratio.
inline void update_agreement(GradAgreement& agg, const std::string& where, double analytic,
                             double fd, double atol = 1e-5) {
  const double rel = std::abs(analytic - fd) / std::max(std::abs(fd), atol);
  agg.checked += 1;
  if (rel > agg.max_rel) {
    agg.max_rel = rel;
    agg.worst_analytic = analytic;
    agg.worst_fd = fd;
    agg.worst_where = where;
  }
}

}  // namespace synseg::testing
