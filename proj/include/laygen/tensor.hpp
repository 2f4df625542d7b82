#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace laygen {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Append-only record of differentiable operations. Operations are appended in
// execution order, so the record is topologically sorted by construction and
// backward() simply replays it in reverse.
//
// Ops record onto the tape made current by a Tape::Scope on this thread. A
// tape is single-threaded.
class Tape {
 public:
  struct Op {
    std::string_view kind;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::string_view kind, std::function<void()> backward);
  std::size_t size() const noexcept { return ops_.size(); }
  bool empty() const noexcept { return ops_.empty(); }
  const std::vector<Op>& ops() const noexcept { return ops_; }

  // Runs every recorded backward closure in reverse, then clears the tape.
  void replay_backward();
  void clear() { ops_.clear(); }

  static Tape* current() noexcept;

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  std::vector<Op> ops_;
};

// Dense row-major tensor with shared storage. Copies alias the same buffer;
// use clone() for a deep copy.
template <typename Real>
class BasicTensor {
 public:
  using value_type = Real;

  struct Impl {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;  // empty until a gradient flows in
    bool requires_grad = false;

    std::span<Real> ensure_grad() {
      if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
      return grad;
    }
  };

  BasicTensor() : impl_(std::make_shared<Impl>()) {}

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, Real value, bool requires_grad = false);
  static BasicTensor from(Shape shape, std::vector<Real> data, bool requires_grad = false);
  static BasicTensor scalar(Real value, bool requires_grad = false);

  const Shape& shape() const noexcept { return impl_->shape; }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t rank() const noexcept { return impl_->shape.size(); }
  std::size_t numel() const noexcept { return impl_->data.size(); }

  std::span<Real> data() noexcept { return impl_->data; }
  std::span<const Real> data() const noexcept { return impl_->data; }
  // Empty span when no gradient has been accumulated.
  std::span<const Real> grad() const noexcept { return impl_->grad; }
  std::span<Real> mutable_grad() { return impl_->ensure_grad(); }
  bool has_grad() const noexcept { return !impl_->grad.empty(); }
  void zero_grad() { impl_->grad.clear(); }

  bool requires_grad() const noexcept { return impl_->requires_grad; }
  BasicTensor& set_requires_grad(bool value) {
    impl_->requires_grad = value;
    return *this;
  }

  Real item() const;
  BasicTensor clone() const;
  // Same values, no gradient history.
  BasicTensor detach() const { return clone().set_requires_grad(false); }

  const std::shared_ptr<Impl>& impl() const noexcept { return impl_; }

 private:
  explicit BasicTensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<Impl> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Differentiable operations. Each records onto Tape::current() when any input
// requires a gradient. Shape violations throw ShapeError naming both shapes.
namespace ops {

// Elementwise; `b` may equal a's shape, be a trailing suffix of it, or hold a
// single element. It is broadcast across the leading dimensions of `a`.
template <typename R> BasicTensor<R> add(const BasicTensor<R>& a, const BasicTensor<R>& b);
template <typename R> BasicTensor<R> sub(const BasicTensor<R>& a, const BasicTensor<R>& b);
template <typename R> BasicTensor<R> mul(const BasicTensor<R>& a, const BasicTensor<R>& b);

// a[..., m, k] x b[k, n] -> [..., m, n], or batched a[B, m, k] x b[B, k, n].
template <typename R> BasicTensor<R> matmul(const BasicTensor<R>& a, const BasicTensor<R>& b);
// Swap the last two dimensions.
template <typename R> BasicTensor<R> transpose(const BasicTensor<R>& a);
template <typename R> BasicTensor<R> permute(const BasicTensor<R>& a, const std::vector<std::size_t>& order);
template <typename R> BasicTensor<R> reshape(const BasicTensor<R>& a, Shape shape);
template <typename R> BasicTensor<R> concat(const std::vector<BasicTensor<R>>& parts, std::size_t dim);
// Half-open range [start, stop) along `dim`.
template <typename R> BasicTensor<R> slice(const BasicTensor<R>& a, std::size_t dim, std::size_t start, std::size_t stop);
// table[V, d] gathered by ids of shape `ids_shape` -> ids_shape + [d].
template <typename R> BasicTensor<R> embedding(const BasicTensor<R>& table, std::span<const int> ids, Shape ids_shape);

template <typename R> BasicTensor<R> softmax(const BasicTensor<R>& a);
template <typename R> BasicTensor<R> log_softmax(const BasicTensor<R>& a);
// Over the last dimension with learnable gain and bias.
template <typename R> BasicTensor<R> layer_norm(const BasicTensor<R>& x, const BasicTensor<R>& gain, const BasicTensor<R>& bias, double eps = 1e-5);
template <typename R> BasicTensor<R> relu(const BasicTensor<R>& a);
// Counter-based mask: element i is kept iff hash_uniform(seed, i) >= p and
// scaled by 1/(1-p). Identity when !training or p == 0.
template <typename R> BasicTensor<R> dropout(const BasicTensor<R>& a, double p, std::uint64_t seed, bool training);
template <typename R> BasicTensor<R> scale(const BasicTensor<R>& a, double factor);
// Positions with mask[i] != 0 become `value` and receive no gradient.
template <typename R> BasicTensor<R> masked_fill(const BasicTensor<R>& a, std::span<const std::uint8_t> mask, double value);
template <typename R> BasicTensor<R> sum(const BasicTensor<R>& a);
template <typename R> BasicTensor<R> mean(const BasicTensor<R>& a);
template <typename R> BasicTensor<R> log(const BasicTensor<R>& a);
// mean |pred - target|
template <typename R> BasicTensor<R> l1_loss(const BasicTensor<R>& pred, const BasicTensor<R>& target);

}  // namespace ops

// Backpropagates from a scalar loss through the current tape and consumes it.
// Throws NotScalar.
template <typename R> void backward(const BasicTensor<R>& loss);
template <typename R> void backward(const BasicTensor<R>& loss, Tape& tape);

}  // namespace laygen
