#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace trajkit {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One node of the differentiation graph.  `parents` keeps the inputs alive;
// `backward_fn` reads this node's grad and accumulates into the parents'.
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until first accumulation
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  bool is_leaf() const { return !backward_fn; }
  void ensure_grad();
};

}  // namespace detail

// Dense row-major tensor of 64-bit scalars participating in a reverse-mode
// differentiation graph.  Copying a Tensor copies the handle; the buffer and
// graph node are shared.  Shapes are immutable after construction.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::int64_t dim(std::size_t axis) const;
  std::int64_t numel() const;
  bool requires_grad() const;

  std::span<const double> data() const;
  // Leaf tensors only; mutating an op result would desynchronize the graph.
  std::span<double> mutable_data();
  std::span<const double> grad() const;
  double item() const;
  double grad_item() const;
  void zero_grad();

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

  static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl) {
    return Tensor(std::move(impl));
  }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;
};

// Elementwise sum.  `b` may broadcast to `a` along leading dimensions: after
// stripping leading 1s, b's shape must be a suffix of a's.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor neg(const Tensor& a);

// Standard matrix product for 2-D tensors [m x k] . [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Cross-correlation of input [N x C x H x W] with kernel [O x C x kh x kw].
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::int64_t stride,
              std::int64_t padding);

// Adds bias [C] to every spatial position of x [N x C x H x W].
Tensor bias_add_channels(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& x);

// [N x C x H x W] -> [N x C], mean over the spatial extent.
Tensor global_avg_pool(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);

// Softmax / log-sum-exp along `axis`, computed with a max shift.
// logsumexp removes the reduced axis from the shape.
Tensor softmax(const Tensor& x, int axis);
Tensor logsumexp(const Tensor& x, int axis);

Tensor sum(const Tensor& x);                // -> rank-0 scalar
Tensor sum_axis(const Tensor& x, int axis); // removes the reduced axis

// Sub-tensor of `length` entries along `axis`, starting at `start`.
Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length);

// Populates grad for every requires_grad tensor reachable from `loss`.
// `loss` must be a single scalar.  Leaf grads accumulate across calls;
// zero_grad resets them.
void backward(const Tensor& loss);

}  // namespace trajkit
