#include <doctest.h>

#include <cmath>
#include <limits>

#include "laygen/errors.hpp"
#include "laygen/optim.hpp"
#include "laygen/tensor.hpp"
#include "op_cases.hpp"

using namespace laygen;
namespace o = laygen::ops;

TEST_CASE("forward examples") {
  const auto sm = o::softmax(Tensor64::from({3}, {1, 1, 1}));
  for (double v : sm.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));

  const auto ln = o::layer_norm(Tensor64::from({4}, {2, 2, 2, 2}), Tensor64::full({4}, 1.0), Tensor64::zeros({4}));
  for (double v : ln.data()) CHECK(v == 0.0);

  const auto mm = o::matmul(Tensor64::full({2, 3}, 1.0), Tensor64::full({3, 2}, 1.0));
  CHECK(mm.shape() == Shape{2, 2});
  for (double v : mm.data()) CHECK(v == 3.0);
}

TEST_CASE("backward of simple reductions") {
  Tape tape;
  Tape::Scope scope(tape);
  auto x = Tensor64::from({2, 3}, {1, -2, 3, 0.5, 4, -1}, true);
  backward(o::sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);
  CHECK(tape.empty());

  x.zero_grad();
  backward(o::sum(o::mul(x, x)));
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == 2 * x.data()[i]);
}

TEST_CASE("backward requires a scalar") {
  Tape tape;
  Tape::Scope scope(tape);
  auto x = Tensor64::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(o::scale(x, 2.0)), NotScalar);
}

TEST_CASE("ops without gradient inputs are not recorded") {
  Tape tape;
  Tape::Scope scope(tape);
  auto x = Tensor64::from({2}, {1, 2});
  (void)o::sum(o::mul(x, x));
  CHECK(tape.empty());
  x.set_requires_grad(true);
  (void)o::sum(o::mul(x, x));
  CHECK(tape.size() == 2);
}

TEST_CASE("shape errors name both shapes") {
  auto a = Tensor64::zeros({2, 3});
  auto b = Tensor64::zeros({3, 2});
  try {
    (void)o::add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("[2, 3]") != std::string::npos);
    CHECK(what.find("[3, 2]") != std::string::npos);
  }
  CHECK_THROWS_AS(o::matmul(a, a), ShapeError);
  CHECK_THROWS_AS(o::reshape(a, {4}), ShapeError);
  CHECK_THROWS_AS(o::slice(a, 1, 2, 4), ShapeError);
  CHECK_THROWS_AS(Tensor64::from({2, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("softmax rows are distributions and -inf gives exact zeros") {
  Rng rng(1);
  auto x = oracle::random_tensor({5, 7}, rng, -10, 10);
  std::vector<std::uint8_t> mask(35, 0);
  for (std::size_t i = 0; i < 35; i += 3) mask[i] = 1;
  const auto p = o::softmax(o::masked_fill(x, mask, -std::numeric_limits<double>::infinity()));
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 7; ++c) {
      const double v = p.data()[r * 7 + c];
      if (mask[r * 7 + c]) CHECK(v == 0.0);
      s += v;
    }
    CHECK(std::fabs(s - 1.0) < 1e-9);
  }
  // A fully masked row yields zeros rather than NaN.
  const auto all = o::softmax(o::masked_fill(Tensor64::zeros({1, 3}), std::vector<std::uint8_t>{1, 1, 1},
                                             -std::numeric_limits<double>::infinity()));
  for (double v : all.data()) CHECK(v == 0.0);
}

TEST_CASE("dropout semantics") {
  Rng rng(2);
  const auto x = oracle::random_tensor({50, 40}, rng);
  const auto same = [](const Tensor64& a, const Tensor64& b) {
    return std::equal(a.data().begin(), a.data().end(), b.data().begin());
  };
  CHECK(same(o::dropout(x, 0.0, 5, true), x));
  CHECK(same(o::dropout(x, 0.5, 5, false), x));
  const auto y = o::dropout(x, 0.25, 5, true);
  CHECK(same(y, o::dropout(x, 0.25, 5, true)));
  std::size_t kept = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (y.data()[i] != 0.0) {
      ++kept;
      CHECK(y.data()[i] == doctest::Approx(x.data()[i] / 0.75).epsilon(1e-15));
    }
  }
  CHECK(std::fabs(kept / 2000.0 - 0.75) < 0.04);
}

TEST_CASE("every differentiable op passes a finite-difference check") {
  for (auto& c : oracle::differentiable_op_cases()) {
    CAPTURE(c.name);
    const auto report = grad_check(c.build, c.leaves);
    CHECK(report.worst < 1e-4);
    CHECK(report.checked > 0);
  }
}

TEST_CASE("linear layer gradient is accurate to 1e-6") {
  Rng rng(4);
  auto x = oracle::random_tensor({4, 5}, rng);
  auto build = [](const std::vector<Tensor64>& l) {
    return oracle::weighted(o::add(o::matmul(l[0], l[1]), l[2]));
  };
  const auto report = grad_check(build, {x, oracle::random_tensor({5, 3}, rng), oracle::random_tensor({3}, rng)});
  CHECK(report.worst < 1e-6);
}

TEST_CASE("transformer block passes the gradient check") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto c = oracle::block_case(seed);
    const auto report = grad_check(c.build, c.leaves);
    CHECK(report.worst < 1e-4);
  }
}

TEST_CASE("whole tiny model gradient agrees with finite differences") {
  const auto c = oracle::transformer_case(oracle::tiny_model_config(), 3);
  const auto report = grad_check(c.build, c.leaves);
  CHECK(report.worst < 1e-4);
}

TEST_CASE("adam examples") {
  AdamState64 fresh;
  fresh.config = AdamConfig{0.1, 0.9, 0.99, 1e-8};
  std::vector<Tensor64> p{Tensor64::from({1}, {0.0}, true)};

  p[0].mutable_grad()[0] = 0.0;
  adam_step<double>(p, fresh);
  CHECK(p[0].data()[0] == 0.0);

  AdamState64 st;
  st.config = AdamConfig{0.1, 0.9, 0.99, 1e-8};
  p[0].mutable_grad()[0] = 1.0;
  adam_step<double>(p, st);
  CHECK(p[0].data()[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(st.step == 1);
}

TEST_CASE("adam decreases a convex quadratic") {
  std::vector<Tensor64> p{Tensor64::from({3}, {1.0, -2.0, 0.5}, true)};
  AdamState64 st;
  st.config.lr = 0.05;
  auto value = [&] {
    double s = 0;
    for (double v : p[0].data()) s += v * v;
    return s;
  };
  const double before = value();
  for (int i = 0; i < 2; ++i) {
    auto g = p[0].mutable_grad();
    for (std::size_t k = 0; k < 3; ++k) g[k] = 2 * p[0].data()[k];
    adam_step<double>(p, st);
  }
  CHECK(value() < before);
}

TEST_CASE("adam rejects non-finite gradients") {
  std::vector<Tensor64> p{Tensor64::from({2}, {1.0, 1.0}, true)};
  AdamState64 st;
  p[0].mutable_grad()[1] = std::nan("");
  CHECK_THROWS_AS(adam_step<double>(p, st), NumericalError);
}

TEST_CASE("gradient clipping") {
  std::vector<Tensor64> p{Tensor64::from({2}, {0, 0}, true)};
  p[0].mutable_grad()[0] = 3;
  p[0].mutable_grad()[1] = 4;
  CHECK(clip_grad_norm<double>(p, 1.0) == doctest::Approx(5.0));
  CHECK(p[0].grad()[0] == doctest::Approx(0.6));
  CHECK(p[0].grad()[1] == doctest::Approx(0.8));
}

TEST_CASE("forward is bit-identical across runs") {
  Rng a(9), b(9);
  const auto x = oracle::random_tensor({3, 8}, a);
  const auto y = oracle::random_tensor({3, 8}, b);
  const auto f = [](const Tensor64& t) {
    return o::softmax(o::matmul(o::relu(t), o::transpose(t)));
  };
  const auto fx = f(x), fy = f(y);
  CHECK(std::equal(fx.data().begin(), fx.data().end(), fy.data().begin()));
}
