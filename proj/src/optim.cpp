#include "laygen/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "laygen/errors.hpp"
#include "laygen/rng.hpp"

namespace laygen {

template <typename Real>
void adam_step(std::span<BasicTensor<Real>> params, BasicAdamState<Real>& state) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.numel(), Real(0));
      state.second_moment.emplace_back(p.numel(), Real(0));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam: state holds " + std::to_string(state.first_moment.size()) +
                     " moments for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state.first_moment[k].size() != params[k].numel()) {
      throw ShapeError("adam: moment size mismatch for parameter " + std::to_string(k) + " of shape " +
                       shape_str(params[k].shape()));
    }
    for (Real g : params[k].grad()) {
      if (!std::isfinite(g)) {
        throw NumericalError("non-finite gradient in parameter " + std::to_string(k) + " at step " +
                             std::to_string(state.step + 1));
      }
    }
  }

  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const Real b1 = static_cast<Real>(c.beta1), b2 = static_cast<Real>(c.beta2);
  const Real correction1 = static_cast<Real>(1.0 - std::pow(c.beta1, t));
  const Real correction2 = static_cast<Real>(1.0 - std::pow(c.beta2, t));
  const Real lr = static_cast<Real>(c.lr), eps = static_cast<Real>(c.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].data();
    auto grad = params[k].grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Real g = grad.empty() ? Real(0) : grad[i];
      m[i] = b1 * m[i] + (Real(1) - b1) * g;
      v[i] = b2 * v[i] + (Real(1) - b2) * g * g;
      const Real m_hat = m[i] / correction1;
      const Real v_hat = v[i] / correction2;
      data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename Real>
double clip_grad_norm(std::span<BasicTensor<Real>> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (Real g : p.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const Real factor = static_cast<Real>(max_norm / norm);
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (Real& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

template void adam_step<float>(std::span<Tensor>, BasicAdamState<float>&);
template void adam_step<double>(std::span<Tensor64>, BasicAdamState<double>&);
template double clip_grad_norm<float>(std::span<Tensor>, double);
template double clip_grad_norm<double>(std::span<Tensor64>, double);

GradCheckReport grad_check(const std::function<Tensor64(const std::vector<Tensor64>&)>& build,
                           std::vector<Tensor64> leaves, double h, std::size_t max_coords_per_leaf,
                           std::uint64_t seed, double floor) {
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor64 loss = build(leaves);
    backward(loss, tape);
  }

  auto evaluate = [&] {
    // No tape: plain forward evaluation.
    return build(leaves).item();
  };

  GradCheckReport report;
  Rng rng(seed);
  for (auto& leaf : leaves) {
    std::vector<std::size_t> coords(leaf.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_leaf > 0 && coords.size() > max_coords_per_leaf) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(max_coords_per_leaf);
    }
    const std::vector<double> analytic = leaf.has_grad()
                                             ? std::vector<double>(leaf.grad().begin(), leaf.grad().end())
                                             : std::vector<double>(leaf.numel(), 0.0);
    double worst = 0.0;
    auto data = leaf.data();
    for (std::size_t i : coords) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = evaluate();
      data[i] = saved - h;
      const double down = evaluate();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
      ++report.checked;
    }
    report.max_rel_error.push_back(worst);
    report.worst = std::max(report.worst, worst);
  }
  return report;
}

}  // namespace laygen
