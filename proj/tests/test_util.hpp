#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "mnnh2/common.hpp"
#include "mnnh2/tensor.hpp"

namespace testutil {

inline mnnh2::Tensor random_tensor(std::vector<std::int64_t> shape, std::uint64_t seed,
                                   double scale = 1.0) {
  mnnh2::Tensor t(std::move(shape));
  mnnh2::RngStream rng(seed);
  for (auto& v : t.data) v = scale * rng.normal();
  return t;
}

inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / b.norm();
}

inline double rel_err(const mnnh2::Tensor& a, const mnnh2::Tensor& b) {
  double num = 0.0, den = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    num += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    den += b.data[i] * b.data[i];
  }
  return std::sqrt(num / den);
}

inline double max_abs_diff(const mnnh2::Tensor& a, const mnnh2::Tensor& b) {
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  return worst;
}

}  // namespace testutil
