#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "laygen/tensor.hpp"

namespace laygen {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

template <typename Real>
struct BasicAdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<Real>> first_moment;
  std::vector<std::vector<Real>> second_moment;
};

using AdamState = BasicAdamState<float>;
using AdamState64 = BasicAdamState<double>;

// Bias-corrected Adam update of every parameter from its accumulated gradient.
// Parameters without a gradient are treated as having a zero gradient. Moment
// buffers are created on the first call. Throws NumericalError on NaN/Inf.
template <typename Real>
void adam_step(std::span<BasicTensor<Real>> params, BasicAdamState<Real>& state);

// Rescales all gradients so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
template <typename Real>
double clip_grad_norm(std::span<BasicTensor<Real>> params, double max_norm);

struct GradCheckReport {
  std::vector<double> max_rel_error;  // one per leaf
  double worst = 0.0;
  std::size_t checked = 0;
  bool passed(double tolerance) const { return worst < tolerance; }
};

// Compares reverse-mode gradients of the scalar produced by `build` against
// central finite differences for every coordinate of every leaf (or a seeded
// sample of `max_coords_per_leaf` coordinates). The relative error of a
// coordinate is |analytic - numeric| / max(|analytic|, |numeric|, floor).
// The floor keeps structurally zero gradients, where the difference quotient
// is pure roundoff (about 1e-10 at h = 1e-5), from reading as large errors.
GradCheckReport grad_check(const std::function<Tensor64(const std::vector<Tensor64>&)>& build,
                           std::vector<Tensor64> leaves, double h = 1e-5, std::size_t max_coords_per_leaf = 0,
                           std::uint64_t seed = 0, double floor = 1e-5);

}  // namespace laygen
