#include "laygen/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "laygen/errors.hpp"
#include "laygen/rng.hpp"

namespace laygen {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {
thread_local Tape* g_current_tape = nullptr;
}

void Tape::record(std::string_view kind, std::function<void()> backward) {
  ops_.push_back(Op{kind, std::move(backward)});
}

void Tape::replay_backward() {
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->backward();
  ops_.clear();
}

Tape* Tape::current() noexcept { return g_current_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }
Tape::Scope::~Scope() { g_current_tape = previous_; }

template <typename R>
BasicTensor<R> BasicTensor<R>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), R(0), requires_grad);
}

template <typename R>
BasicTensor<R> BasicTensor<R>::full(Shape shape, R value, bool requires_grad) {
  auto impl = std::make_shared<Impl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return BasicTensor(std::move(impl));
}

template <typename R>
BasicTensor<R> BasicTensor<R>::from(Shape shape, std::vector<R> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                     " values");
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return BasicTensor(std::move(impl));
}

template <typename R>
BasicTensor<R> BasicTensor<R>::scalar(R value, bool requires_grad) {
  return from(Shape{}, {value}, requires_grad);
}

template <typename R>
R BasicTensor<R>::item() const {
  if (numel() != 1) throw NotScalar("tensor of shape " + shape_str(shape()) + " is not a scalar");
  return impl_->data[0];
}

template <typename R>
BasicTensor<R> BasicTensor<R>::clone() const {
  auto impl = std::make_shared<Impl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  impl->requires_grad = impl_->requires_grad;
  return BasicTensor(std::move(impl));
}

namespace ops {
namespace {

template <typename R>
using ImplPtr = std::shared_ptr<typename BasicTensor<R>::Impl>;

template <typename R>
using MatMap = Eigen::Map<Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename R>
using ConstMatMap = Eigen::Map<const Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename R>
bool tracking(std::initializer_list<const BasicTensor<R>*> inputs) {
  if (Tape::current() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](auto* t) { return t->requires_grad(); });
}

// Marks `out` as differentiable and records `fn` on the current tape.
template <typename R, typename Fn>
void record(std::string_view kind, BasicTensor<R>& out, Fn&& fn) {
  out.set_requires_grad(true);
  Tape::current()->record(kind, std::forward<Fn>(fn));
}

[[noreturn]] void shape_error(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// Size of the repeating block of `b` within `a` for broadcasting binary ops.
std::size_t broadcast_block(std::string_view op, const Shape& a, const Shape& b) {
  const std::size_t nb = shape_numel(b);
  if (a == b || nb == 1) return nb;
  if (b.size() <= a.size() && std::equal(b.rbegin(), b.rend(), a.rbegin())) return nb;
  shape_error(op, a, b);
}

Shape with_last(Shape s, std::size_t n) {
  s.back() = n;
  return s;
}

template <typename R>
void check_rank(std::string_view op, const BasicTensor<R>& a, std::size_t min_rank) {
  if (a.rank() < min_rank) {
    throw ShapeError(std::string(op) + ": rank " + std::to_string(a.rank()) + " tensor " +
                     shape_str(a.shape()) + " needs rank >= " + std::to_string(min_rank));
  }
}

}  // namespace

template <typename R>
BasicTensor<R> add(const BasicTensor<R>& a, const BasicTensor<R>& b) {
  const std::size_t nb = broadcast_block("add", a.shape(), b.shape());
  auto out = BasicTensor<R>::zeros(a.shape());
  auto ad = a.data(), bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + bd[i % nb];
  if (tracking<R>({&a, &b})) {
    record("add", out, [ai = a.impl(), bi = b.impl(), oi = out.impl(), nb] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      if (ai->requires_grad) {
        auto ga = ai->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bi->requires_grad) {
        auto gb = bi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i];
      }
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> sub(const BasicTensor<R>& a, const BasicTensor<R>& b) {
  const std::size_t nb = broadcast_block("sub", a.shape(), b.shape());
  auto out = BasicTensor<R>::zeros(a.shape());
  auto ad = a.data(), bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] - bd[i % nb];
  if (tracking<R>({&a, &b})) {
    record("sub", out, [ai = a.impl(), bi = b.impl(), oi = out.impl(), nb] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      if (ai->requires_grad) {
        auto ga = ai->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bi->requires_grad) {
        auto gb = bi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] -= g[i];
      }
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> mul(const BasicTensor<R>& a, const BasicTensor<R>& b) {
  const std::size_t nb = broadcast_block("mul", a.shape(), b.shape());
  auto out = BasicTensor<R>::zeros(a.shape());
  auto ad = a.data(), bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * bd[i % nb];
  if (tracking<R>({&a, &b})) {
    record("mul", out, [ai = a.impl(), bi = b.impl(), oi = out.impl(), nb] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      if (ai->requires_grad) {
        auto ga = ai->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bi->data[i % nb];
      }
      if (bi->requires_grad) {
        auto gb = bi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i] * ai->data[i];
      }
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> matmul(const BasicTensor<R>& a, const BasicTensor<R>& b) {
  check_rank("matmul", a, 2);
  check_rank("matmul", b, 2);
  const auto& as = a.shape();
  const auto& bs = b.shape();
  const std::size_t k = as.back();
  std::size_t batches = 1, m = 0, n = 0;
  bool shared_rhs = bs.size() == 2;
  if (shared_rhs) {
    if (bs[0] != k) shape_error("matmul", as, bs);
    m = a.numel() / k;
    n = bs[1];
  } else {
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || bs[1] != k) shape_error("matmul", as, bs);
    batches = as[0];
    m = as[1];
    n = bs[2];
  }
  auto out = BasicTensor<R>::zeros(with_last(as, n));
  const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k),
             ni = static_cast<Eigen::Index>(n);
  const std::size_t a_stride = shared_rhs ? 0 : m * k;
  const std::size_t b_stride = shared_rhs ? 0 : k * n;
  const std::size_t o_stride = shared_rhs ? 0 : m * n;
  for (std::size_t bi = 0; bi < batches; ++bi) {
    ConstMatMap<R> A(a.data().data() + bi * a_stride, mi, ki);
    ConstMatMap<R> B(b.data().data() + bi * b_stride, ki, ni);
    MatMap<R> C(out.data().data() + bi * o_stride, mi, ni);
    C.noalias() = A * B;
  }
  if (tracking<R>({&a, &b})) {
    record("matmul", out, [ai = a.impl(), bi_ = b.impl(), oi = out.impl(), batches, mi, ki, ni, a_stride,
                           b_stride, o_stride] {
      if (oi->grad.empty()) return;
      for (std::size_t bi = 0; bi < batches; ++bi) {
        ConstMatMap<R> G(oi->grad.data() + bi * o_stride, mi, ni);
        if (ai->requires_grad) {
          ConstMatMap<R> B(bi_->data.data() + bi * b_stride, ki, ni);
          MatMap<R> GA(ai->ensure_grad().data() + bi * a_stride, mi, ki);
          GA.noalias() += G * B.transpose();
        }
        if (bi_->requires_grad) {
          ConstMatMap<R> A(ai->data.data() + bi * a_stride, mi, ki);
          MatMap<R> GB(bi_->ensure_grad().data() + bi * b_stride, ki, ni);
          GB.noalias() += A.transpose() * G;
        }
      }
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> permute(const BasicTensor<R>& a, const std::vector<std::size_t>& order) {
  const auto& as = a.shape();
  const std::size_t rank = as.size();
  {
    std::vector<std::size_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    bool ok = sorted.size() == rank;
    for (std::size_t i = 0; ok && i < rank; ++i) ok = sorted[i] == i;
    if (!ok) shape_error("permute", as, Shape(order.begin(), order.end()));
  }
  Shape os(rank);
  for (std::size_t i = 0; i < rank; ++i) os[i] = as[order[i]];
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * as[i];
  // For each output position, the source offset in `a`.
  const std::size_t total = a.numel();
  std::vector<std::size_t> src(total);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t o = 0; o < total; ++o) {
    std::size_t off = 0;
    for (std::size_t d = 0; d < rank; ++d) off += idx[d] * in_strides[order[d]];
    src[o] = off;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < os[d]) break;
      idx[d] = 0;
    }
  }
  auto out = BasicTensor<R>::zeros(os);
  auto ad = a.data();
  auto od = out.data();
  for (std::size_t o = 0; o < total; ++o) od[o] = ad[src[o]];
  if (tracking<R>({&a})) {
    record("permute", out, [ai = a.impl(), oi = out.impl(), src = std::move(src)] {
      if (oi->grad.empty()) return;
      auto ga = ai->ensure_grad();
      for (std::size_t o = 0; o < src.size(); ++o) ga[src[o]] += oi->grad[o];
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> transpose(const BasicTensor<R>& a) {
  check_rank("transpose", a, 2);
  std::vector<std::size_t> order(a.rank());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::swap(order[a.rank() - 1], order[a.rank() - 2]);
  return permute(a, order);
}

template <typename R>
BasicTensor<R> reshape(const BasicTensor<R>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) shape_error("reshape", a.shape(), shape);
  auto out = BasicTensor<R>::from(std::move(shape), std::vector<R>(a.data().begin(), a.data().end()));
  if (tracking<R>({&a})) {
    record("reshape", out, [ai = a.impl(), oi = out.impl()] {
      if (oi->grad.empty()) return;
      auto ga = ai->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += oi->grad[i];
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> concat(const std::vector<BasicTensor<R>>& parts, std::size_t dim) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (dim >= first.size()) shape_error("concat", first, Shape{dim});
  Shape os = first;
  os[dim] = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    if (ps.size() != first.size()) shape_error("concat", first, ps);
    for (std::size_t d = 0; d < ps.size(); ++d) {
      if (d != dim && ps[d] != first[d]) shape_error("concat", first, ps);
    }
    os[dim] += ps[dim];
  }
  const std::size_t outer = shape_numel(Shape(first.begin(), first.begin() + static_cast<long>(dim)));
  const std::size_t inner = shape_numel(Shape(first.begin() + static_cast<long>(dim) + 1, first.end()));
  auto out = BasicTensor<R>::zeros(os);
  auto od = out.data();
  const std::size_t out_row = os[dim] * inner;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.shape()[dim] * inner;
    auto pd = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pd.begin() + static_cast<long>(o * chunk), chunk, od.begin() + static_cast<long>(o * out_row + offset));
    }
    offset += chunk;
  }
  bool any = false;
  for (const auto& p : parts) any = any || tracking<R>({&p});
  if (any) {
    std::vector<ImplPtr<R>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    record("concat", out, [impls, oi = out.impl(), offsets, outer, out_row, inner, dim] {
      if (oi->grad.empty()) return;
      for (std::size_t k = 0; k < impls.size(); ++k) {
        if (!impls[k]->requires_grad) continue;
        auto gp = impls[k]->ensure_grad();
        const std::size_t chunk = impls[k]->shape[dim] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += oi->grad[o * out_row + offsets[k] + i];
        }
      }
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> slice(const BasicTensor<R>& a, std::size_t dim, std::size_t start, std::size_t stop) {
  const Shape& as = a.shape();
  if (dim >= as.size() || start > stop || stop > as[dim]) shape_error("slice", as, Shape{dim, start, stop});
  Shape os = as;
  os[dim] = stop - start;
  const std::size_t outer = shape_numel(Shape(as.begin(), as.begin() + static_cast<long>(dim)));
  const std::size_t inner = shape_numel(Shape(as.begin() + static_cast<long>(dim) + 1, as.end()));
  const std::size_t in_row = as[dim] * inner;
  const std::size_t chunk = os[dim] * inner;
  const std::size_t first = start * inner;
  auto out = BasicTensor<R>::zeros(os);
  auto ad = a.data();
  auto od = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(ad.begin() + static_cast<long>(o * in_row + first), chunk, od.begin() + static_cast<long>(o * chunk));
  }
  if (tracking<R>({&a})) {
    record("slice", out, [ai = a.impl(), oi = out.impl(), outer, in_row, chunk, first] {
      if (oi->grad.empty()) return;
      auto ga = ai->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < chunk; ++i) ga[o * in_row + first + i] += oi->grad[o * chunk + i];
      }
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> embedding(const BasicTensor<R>& table, std::span<const int> ids, Shape ids_shape) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + shape_str(table.shape()));
  if (shape_numel(ids_shape) != ids.size()) shape_error("embedding", ids_shape, Shape{ids.size()});
  const std::size_t rows = table.dim(0), width = table.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= rows) {
      throw ShapeError("embedding: index " + std::to_string(id) + " outside table " + shape_str(table.shape()));
    }
  }
  Shape os = ids_shape;
  os.push_back(width);
  auto out = BasicTensor<R>::zeros(os);
  auto td = table.data();
  auto od = out.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(td.begin() + static_cast<long>(static_cast<std::size_t>(ids[i]) * width), width,
                od.begin() + static_cast<long>(i * width));
  }
  if (tracking<R>({&table})) {
    record("embedding", out, [ti = table.impl(), oi = out.impl(), idv = std::vector<int>(ids.begin(), ids.end()), width] {
      if (oi->grad.empty()) return;
      auto gt = ti->ensure_grad();
      for (std::size_t i = 0; i < idv.size(); ++i) {
        const std::size_t row = static_cast<std::size_t>(idv[i]) * width;
        for (std::size_t j = 0; j < width; ++j) gt[row + j] += oi->grad[i * width + j];
      }
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> softmax(const BasicTensor<R>& a) {
  check_rank("softmax", a, 1);
  const std::size_t width = a.shape().back();
  const std::size_t rows = width == 0 ? 0 : a.numel() / width;
  auto out = BasicTensor<R>::zeros(a.shape());
  auto ad = a.data();
  auto od = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const R* x = ad.data() + r * width;
    R* y = od.data() + r * width;
    const R mx = *std::max_element(x, x + width);
    if (mx == -std::numeric_limits<R>::infinity()) continue;  // fully masked row stays zero
    R total = 0;
    for (std::size_t j = 0; j < width; ++j) total += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < width; ++j) y[j] /= total;
  }
  if (tracking<R>({&a})) {
    record("softmax", out, [ai = a.impl(), oi = out.impl(), rows, width] {
      if (oi->grad.empty()) return;
      auto ga = ai->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const R* y = oi->data.data() + r * width;
        const R* g = oi->grad.data() + r * width;
        R dot = 0;
        for (std::size_t j = 0; j < width; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < width; ++j) ga[r * width + j] += y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> log_softmax(const BasicTensor<R>& a) {
  check_rank("log_softmax", a, 1);
  const std::size_t width = a.shape().back();
  const std::size_t rows = width == 0 ? 0 : a.numel() / width;
  auto out = BasicTensor<R>::zeros(a.shape());
  auto ad = a.data();
  auto od = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const R* x = ad.data() + r * width;
    R* y = od.data() + r * width;
    const R mx = *std::max_element(x, x + width);
    R total = 0;
    for (std::size_t j = 0; j < width; ++j) total += std::exp(x[j] - mx);
    const R lse = mx + std::log(total);
    for (std::size_t j = 0; j < width; ++j) y[j] = x[j] - lse;
  }
  if (tracking<R>({&a})) {
    record("log_softmax", out, [ai = a.impl(), oi = out.impl(), rows, width] {
      if (oi->grad.empty()) return;
      auto ga = ai->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const R* y = oi->data.data() + r * width;
        const R* g = oi->grad.data() + r * width;
        R gsum = 0;
        for (std::size_t j = 0; j < width; ++j) gsum += g[j];
        for (std::size_t j = 0; j < width; ++j) ga[r * width + j] += g[j] - std::exp(y[j]) * gsum;
      }
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> layer_norm(const BasicTensor<R>& x, const BasicTensor<R>& gain, const BasicTensor<R>& bias,
                          double eps) {
  check_rank("layer_norm", x, 1);
  const std::size_t width = x.shape().back();
  if (gain.shape() != Shape{width}) shape_error("layer_norm", x.shape(), gain.shape());
  if (bias.shape() != Shape{width}) shape_error("layer_norm", x.shape(), bias.shape());
  const std::size_t rows = x.numel() / width;
  auto out = BasicTensor<R>::zeros(x.shape());
  std::vector<R> xhat(x.numel());
  std::vector<R> rstd(rows);
  auto xd = x.data();
  auto gd = gain.data(), bd = bias.data();
  auto od = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const R* row = xd.data() + r * width;
    R mu = 0;
    for (std::size_t j = 0; j < width; ++j) mu += row[j];
    mu /= static_cast<R>(width);
    R var = 0;
    for (std::size_t j = 0; j < width; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<R>(width);
    rstd[r] = R(1) / std::sqrt(var + static_cast<R>(eps));
    for (std::size_t j = 0; j < width; ++j) {
      const R h = (row[j] - mu) * rstd[r];
      xhat[r * width + j] = h;
      od[r * width + j] = h * gd[j] + bd[j];
    }
  }
  if (tracking<R>({&x, &gain, &bias})) {
    record("layer_norm", out,
           [xi = x.impl(), gi = gain.impl(), bi = bias.impl(), oi = out.impl(), xhat = std::move(xhat),
            rstd = std::move(rstd), rows, width] {
             if (oi->grad.empty()) return;
             const auto& g = oi->grad;
             if (bi->requires_grad) {
               auto gb = bi->ensure_grad();
               for (std::size_t i = 0; i < g.size(); ++i) gb[i % width] += g[i];
             }
             if (gi->requires_grad) {
               auto gg = gi->ensure_grad();
               for (std::size_t i = 0; i < g.size(); ++i) gg[i % width] += g[i] * xhat[i];
             }
             if (!xi->requires_grad) return;
             auto gx = xi->ensure_grad();
             std::vector<R> dxhat(width);
             for (std::size_t r = 0; r < rows; ++r) {
               R mean_d = 0, mean_dx = 0;
               for (std::size_t j = 0; j < width; ++j) {
                 dxhat[j] = g[r * width + j] * gi->data[j];
                 mean_d += dxhat[j];
                 mean_dx += dxhat[j] * xhat[r * width + j];
               }
               mean_d /= static_cast<R>(width);
               mean_dx /= static_cast<R>(width);
               for (std::size_t j = 0; j < width; ++j) {
                 gx[r * width + j] += rstd[r] * (dxhat[j] - mean_d - xhat[r * width + j] * mean_dx);
               }
             }
           });
  }
  return out;
}

template <typename R>
BasicTensor<R> relu(const BasicTensor<R>& a) {
  auto out = BasicTensor<R>::zeros(a.shape());
  auto ad = a.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] > R(0) ? ad[i] : R(0);
  if (tracking<R>({&a})) {
    record("relu", out, [ai = a.impl(), oi = out.impl()] {
      if (oi->grad.empty()) return;
      auto ga = ai->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) {
        if (ai->data[i] > R(0)) ga[i] += oi->grad[i];
      }
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> dropout(const BasicTensor<R>& a, double p, std::uint64_t seed, bool training) {
  if (!training || p <= 0.0) return a;
  if (p >= 1.0) throw InvalidConfig("dropout probability must be < 1");
  std::vector<R> keep(a.numel());
  const R factor = static_cast<R>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = hash_uniform(seed, i) >= p ? factor : R(0);
  auto out = BasicTensor<R>::zeros(a.shape());
  auto ad = a.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * keep[i];
  if (tracking<R>({&a})) {
    record("dropout", out, [ai = a.impl(), oi = out.impl(), keep = std::move(keep)] {
      if (oi->grad.empty()) return;
      auto ga = ai->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += oi->grad[i] * keep[i];
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> scale(const BasicTensor<R>& a, double factor) {
  const R f = static_cast<R>(factor);
  auto out = BasicTensor<R>::zeros(a.shape());
  auto ad = a.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * f;
  if (tracking<R>({&a})) {
    record("scale", out, [ai = a.impl(), oi = out.impl(), f] {
      if (oi->grad.empty()) return;
      auto ga = ai->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += oi->grad[i] * f;
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> masked_fill(const BasicTensor<R>& a, std::span<const std::uint8_t> mask, double value) {
  if (mask.size() != a.numel()) shape_error("masked_fill", a.shape(), Shape{mask.size()});
  auto out = BasicTensor<R>::zeros(a.shape());
  auto ad = a.data();
  auto od = out.data();
  const R v = static_cast<R>(value);
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = mask[i] ? v : ad[i];
  if (tracking<R>({&a})) {
    record("masked_fill", out, [ai = a.impl(), oi = out.impl(), m = std::vector<std::uint8_t>(mask.begin(), mask.end())] {
      if (oi->grad.empty()) return;
      auto ga = ai->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) {
        if (!m[i]) ga[i] += oi->grad[i];
      }
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> sum(const BasicTensor<R>& a) {
  R total = 0;
  for (R v : a.data()) total += v;
  auto out = BasicTensor<R>::scalar(total);
  if (tracking<R>({&a})) {
    record("sum", out, [ai = a.impl(), oi = out.impl()] {
      if (oi->grad.empty()) return;
      auto ga = ai->ensure_grad();
      for (auto& g : ga) g += oi->grad[0];
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> mean(const BasicTensor<R>& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

template <typename R>
BasicTensor<R> log(const BasicTensor<R>& a) {
  auto out = BasicTensor<R>::zeros(a.shape());
  auto ad = a.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = std::log(ad[i]);
  if (tracking<R>({&a})) {
    record("log", out, [ai = a.impl(), oi = out.impl()] {
      if (oi->grad.empty()) return;
      auto ga = ai->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += oi->grad[i] / ai->data[i];
    });
  }
  return out;
}

template <typename R>
BasicTensor<R> l1_loss(const BasicTensor<R>& pred, const BasicTensor<R>& target) {
  if (pred.shape() != target.shape()) shape_error("l1_loss", pred.shape(), target.shape());
  if (pred.numel() == 0) throw ShapeError("l1_loss of empty tensor");
  const std::size_t n = pred.numel();
  R total = 0;
  auto pd = pred.data(), td = target.data();
  for (std::size_t i = 0; i < n; ++i) total += std::abs(pd[i] - td[i]);
  auto out = BasicTensor<R>::scalar(total / static_cast<R>(n));
  if (tracking<R>({&pred, &target})) {
    record("l1_loss", out, [pi = pred.impl(), ti = target.impl(), oi = out.impl(), n] {
      if (oi->grad.empty()) return;
      const R g = oi->grad[0] / static_cast<R>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const R diff = pi->data[i] - ti->data[i];
        const R s = diff > 0 ? R(1) : (diff < 0 ? R(-1) : R(0));
        if (pi->requires_grad) pi->ensure_grad()[i] += g * s;
        if (ti->requires_grad) ti->ensure_grad()[i] -= g * s;
      }
    });
  }
  return out;
}

}  // namespace ops

template <typename R>
void backward(const BasicTensor<R>& loss, Tape& tape) {
  if (loss.numel() != 1) {
    throw NotScalar("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  auto g = loss.impl()->ensure_grad();
  g[0] += R(1);
  tape.replay_backward();
}

template <typename R>
void backward(const BasicTensor<R>& loss) {
  Tape* tape = Tape::current();
  if (tape == nullptr) throw UsageError("NoTape", "backward called without an active tape");
  backward(loss, *tape);
}

#define LAYGEN_INSTANTIATE(R)                                                                          \
  template class BasicTensor<R>;                                                                       \
  template void backward<R>(const BasicTensor<R>&);                                                    \
  template void backward<R>(const BasicTensor<R>&, Tape&);                                             \
  namespace ops {                                                                                      \
  template BasicTensor<R> add(const BasicTensor<R>&, const BasicTensor<R>&);                           \
  template BasicTensor<R> sub(const BasicTensor<R>&, const BasicTensor<R>&);                           \
  template BasicTensor<R> mul(const BasicTensor<R>&, const BasicTensor<R>&);                           \
  template BasicTensor<R> matmul(const BasicTensor<R>&, const BasicTensor<R>&);                        \
  template BasicTensor<R> transpose(const BasicTensor<R>&);                                            \
  template BasicTensor<R> permute(const BasicTensor<R>&, const std::vector<std::size_t>&);             \
  template BasicTensor<R> reshape(const BasicTensor<R>&, Shape);                                       \
  template BasicTensor<R> concat(const std::vector<BasicTensor<R>>&, std::size_t);                     \
  template BasicTensor<R> slice(const BasicTensor<R>&, std::size_t, std::size_t, std::size_t);         \
  template BasicTensor<R> embedding(const BasicTensor<R>&, std::span<const int>, Shape);               \
  template BasicTensor<R> softmax(const BasicTensor<R>&);                                              \
  template BasicTensor<R> log_softmax(const BasicTensor<R>&);                                          \
  template BasicTensor<R> layer_norm(const BasicTensor<R>&, const BasicTensor<R>&, const BasicTensor<R>&, double); \
  template BasicTensor<R> relu(const BasicTensor<R>&);                                                 \
  template BasicTensor<R> dropout(const BasicTensor<R>&, double, std::uint64_t, bool);                 \
  template BasicTensor<R> scale(const BasicTensor<R>&, double);                                        \
  template BasicTensor<R> masked_fill(const BasicTensor<R>&, std::span<const std::uint8_t>, double);   \
  template BasicTensor<R> sum(const BasicTensor<R>&);                                                  \
  template BasicTensor<R> mean(const BasicTensor<R>&);                                                 \
  template BasicTensor<R> log(const BasicTensor<R>&);                                                  \
  template BasicTensor<R> l1_loss(const BasicTensor<R>&, const BasicTensor<R>&);                       \
  }

LAYGEN_INSTANTIATE(float)
LAYGEN_INSTANTIATE(double)

#undef LAYGEN_INSTANTIATE

}  // namespace laygen
