#include "trajkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "trajkit/error.hpp"

namespace trajkit {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) {
      os << ',';
    }
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

void TensorImpl::ensure_grad() {
  if (grad.size() != data.size()) {
    grad.assign(data.size(), 0.0);
  }
}

}  // namespace detail

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

namespace {

void validate_shape(const Shape& shape) {
  for (std::int64_t d : shape) {
    require(d > 0, ErrorKind::invalid,
            "tensor dimensions must be positive, got " + shape_str(shape));
  }
}

ImplPtr make_impl(Shape shape, std::vector<double> data, bool requires_grad) {
  validate_shape(shape);
  require(shape_numel(shape) == static_cast<std::int64_t>(data.size()),
          ErrorKind::invalid,
          "data length " + std::to_string(data.size()) +
              " does not match shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return impl;
}

// Wires an op result into the graph.  Parents and the backward function are
// kept only when some input requires grad, so constant subgraphs stay flat.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<ImplPtr> parents,
                   std::function<void(TensorImpl&)> backward_fn) {
  bool needs_grad = false;
  for (const auto& p : parents) {
    needs_grad = needs_grad || p->requires_grad;
  }
  ImplPtr impl = make_impl(std::move(shape), std::move(data), needs_grad);
  if (needs_grad) {
    impl->parents = std::move(parents);
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor::wrap(std::move(impl));
}

void accumulate(TensorImpl& node, std::span<const double> contribution) {
  node.ensure_grad();
  for (std::size_t i = 0; i < contribution.size(); ++i) {
    node.grad[i] += contribution[i];
  }
}

// b broadcasts to a when, after stripping b's leading 1s, its shape is a
// suffix of a's shape.  This covers bias vectors and [1 x ...] prefixes; no
// interior broadcasting is supported.
bool broadcastable(const Shape& a, const Shape& b) {
  std::size_t lead = 0;
  while (lead < b.size() && b[lead] == 1) {
    ++lead;
  }
  const std::size_t tail = b.size() - lead;
  if (tail > a.size()) {
    return false;
  }
  for (std::size_t k = 0; k < tail; ++k) {
    if (b[lead + k] != a[a.size() - tail + k]) {
      return false;
    }
  }
  return true;
}

void check_binary(const char* op, const Tensor& a, const Tensor& b) {
  require(a.defined() && b.defined(), ErrorKind::invalid,
          std::string(op) + ": undefined operand");
  require(broadcastable(a.shape(), b.shape()), ErrorKind::invalid,
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
              " vs " + shape_str(b.shape()));
}

// Sums a full-size gradient down to the broadcast operand's size.
std::vector<double> reduce_to_operand(std::span<const double> grad,
                                      std::int64_t operand_numel) {
  std::vector<double> out(static_cast<std::size_t>(operand_numel), 0.0);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    out[i % static_cast<std::size_t>(operand_numel)] += grad[i];
  }
  return out;
}

std::int64_t normalize_axis(const char* op, int axis, std::size_t rank) {
  require(axis >= 0 && static_cast<std::size_t>(axis) < rank,
          ErrorKind::invalid,
          std::string(op) + ": axis " + std::to_string(axis) +
              " invalid for rank " + std::to_string(rank));
  return axis;
}

struct AxisSpan {
  std::int64_t outer = 1;
  std::int64_t n = 1;
  std::int64_t inner = 1;
};

AxisSpan axis_span(const Shape& shape, std::int64_t axis) {
  AxisSpan s;
  for (std::int64_t i = 0; i < axis; ++i) {
    s.outer *= shape[static_cast<std::size_t>(i)];
  }
  s.n = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) {
    s.inner *= shape[i];
  }
  return s;
}

Shape drop_axis(const Shape& shape, std::int64_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (static_cast<std::int64_t>(i) != axis) {
      out.push_back(shape[i]);
    }
  }
  return out;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = static_cast<std::size_t>(shape_numel(shape));
  return Tensor::wrap(make_impl(std::move(shape), std::vector<double>(n, 0.0),
                                requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = static_cast<std::size_t>(shape_numel(shape));
  return Tensor::wrap(make_impl(std::move(shape), std::vector<double>(n, value),
                                requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  return Tensor::wrap(make_impl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor::wrap(make_impl(Shape{}, std::vector<double>{value}, requires_grad));
}

const Shape& Tensor::shape() const {
  require(defined(), ErrorKind::invalid, "shape() on undefined tensor");
  return impl_->shape;
}

std::int64_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  require(axis < s.size(), ErrorKind::invalid,
          "dim(" + std::to_string(axis) + ") out of range for " + shape_str(s));
  return s[axis];
}

std::int64_t Tensor::numel() const {
  require(defined(), ErrorKind::invalid, "numel() on undefined tensor");
  return impl_->numel();
}

bool Tensor::requires_grad() const {
  return defined() && impl_->requires_grad;
}

std::span<const double> Tensor::data() const {
  require(defined(), ErrorKind::invalid, "data() on undefined tensor");
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  require(defined(), ErrorKind::invalid, "mutable_data() on undefined tensor");
  require(impl_->is_leaf(), ErrorKind::invalid,
          "mutable_data() is only valid on leaf tensors");
  return impl_->data;
}

std::span<const double> Tensor::grad() const {
  require(defined(), ErrorKind::invalid, "grad() on undefined tensor");
  return impl_->grad;
}

double Tensor::item() const {
  require(numel() == 1, ErrorKind::invalid,
          "item() requires a single-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::grad_item() const {
  require(numel() == 1 && impl_->grad.size() == 1, ErrorKind::invalid,
          "grad_item() requires a single-element tensor with populated grad");
  return impl_->grad[0];
}

void Tensor::zero_grad() {
  require(defined(), ErrorKind::invalid, "zero_grad() on undefined tensor");
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_binary("add", a, b);
  const auto& av = a.data();
  const auto& bv = b.data();
  const std::size_t bn = bv.size();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = av[i] + bv[i % bn];
  }
  auto pa = a.impl_ptr();
  auto pb = b.impl_ptr();
  return make_result(
      a.shape(), std::move(out), {pa, pb}, [pa, pb](TensorImpl& self) {
        if (pa->requires_grad) {
          accumulate(*pa, self.grad);
        }
        if (pb->requires_grad) {
          auto gb = reduce_to_operand(self.grad, pb->numel());
          accumulate(*pb, gb);
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_binary("sub", a, b);
  const auto& av = a.data();
  const auto& bv = b.data();
  const std::size_t bn = bv.size();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = av[i] - bv[i % bn];
  }
  auto pa = a.impl_ptr();
  auto pb = b.impl_ptr();
  return make_result(
      a.shape(), std::move(out), {pa, pb}, [pa, pb](TensorImpl& self) {
        if (pa->requires_grad) {
          accumulate(*pa, self.grad);
        }
        if (pb->requires_grad) {
          auto gb = reduce_to_operand(self.grad, pb->numel());
          for (double& g : gb) {
            g = -g;
          }
          accumulate(*pb, gb);
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_binary("mul", a, b);
  const auto& av = a.data();
  const auto& bv = b.data();
  const std::size_t bn = bv.size();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = av[i] * bv[i % bn];
  }
  auto pa = a.impl_ptr();
  auto pb = b.impl_ptr();
  return make_result(
      a.shape(), std::move(out), {pa, pb}, [pa, pb](TensorImpl& self) {
        const std::size_t nb = pb->data.size();
        if (pa->requires_grad) {
          std::vector<double> ga(self.grad.size());
          for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] = self.grad[i] * pb->data[i % nb];
          }
          accumulate(*pa, ga);
        }
        if (pb->requires_grad) {
          std::vector<double> gb(nb, 0.0);
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            gb[i % nb] += self.grad[i] * pa->data[i];
          }
          accumulate(*pb, gb);
        }
      });
}

Tensor scale(const Tensor& a, double factor) {
  require(a.defined(), ErrorKind::invalid, "scale: undefined operand");
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = av[i] * factor;
  }
  auto pa = a.impl_ptr();
  return make_result(a.shape(), std::move(out), {pa},
                     [pa, factor](TensorImpl& self) {
                       std::vector<double> g(self.grad.size());
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] = self.grad[i] * factor;
                       }
                       accumulate(*pa, g);
                     });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.defined() && b.defined(), ErrorKind::invalid,
          "matmul: undefined operand");
  require(a.rank() == 2 && b.rank() == 2, ErrorKind::invalid,
          "matmul: expects 2-D operands, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  const std::int64_t m = a.dim(0);
  const std::int64_t k = a.dim(1);
  const std::int64_t n = b.dim(1);
  require(b.dim(0) == k, ErrorKind::invalid,
          "matmul: inner dimensions disagree, " + shape_str(a.shape()) +
              " vs " + shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::int64_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::int64_t l = 0; l < k; ++l) {
      const double av = ad[i * k + l];
      const double* brow = bd + l * n;
      for (std::int64_t j = 0; j < n; ++j) {
        orow[j] += av * brow[j];
      }
    }
  }
  auto pa = a.impl_ptr();
  auto pb = b.impl_ptr();
  return make_result(
      Shape{m, n}, std::move(out), {pa, pb}, [pa, pb, m, k, n](TensorImpl& self) {
        const double* g = self.grad.data();
        if (pa->requires_grad) {
          // dA = dC . B^T
          std::vector<double> ga(static_cast<std::size_t>(m * k), 0.0);
          const double* bd = pb->data.data();
          for (std::int64_t i = 0; i < m; ++i) {
            const double* grow = g + i * n;
            double* garow = ga.data() + i * k;
            for (std::int64_t l = 0; l < k; ++l) {
              const double* brow = bd + l * n;
              double acc = 0.0;
              for (std::int64_t j = 0; j < n; ++j) {
                acc += grow[j] * brow[j];
              }
              garow[l] += acc;
            }
          }
          accumulate(*pa, ga);
        }
        if (pb->requires_grad) {
          // dB = A^T . dC
          std::vector<double> gb(static_cast<std::size_t>(k * n), 0.0);
          const double* ad = pa->data.data();
          for (std::int64_t i = 0; i < m; ++i) {
            const double* grow = g + i * n;
            for (std::int64_t l = 0; l < k; ++l) {
              const double av = ad[i * k + l];
              double* gbrow = gb.data() + l * n;
              for (std::int64_t j = 0; j < n; ++j) {
                gbrow[j] += av * grow[j];
              }
            }
          }
          accumulate(*pb, gb);
        }
      });
}

namespace {

struct ConvDims {
  std::int64_t batch, in_ch, in_h, in_w;
  std::int64_t out_ch, k_h, k_w;
  std::int64_t stride, pad;
  std::int64_t out_h, out_w;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernel,
                   std::int64_t stride, std::int64_t padding) {
  require(input.rank() == 4, ErrorKind::invalid,
          "conv2d: input must be [N,C,H,W], got " + shape_str(input.shape()));
  require(kernel.rank() == 4, ErrorKind::invalid,
          "conv2d: kernel must be [O,C,kh,kw], got " + shape_str(kernel.shape()));
  require(stride >= 1, ErrorKind::invalid, "conv2d: stride must be >= 1");
  require(padding >= 0, ErrorKind::invalid, "conv2d: padding must be >= 0");
  ConvDims d;
  d.batch = input.dim(0);
  d.in_ch = input.dim(1);
  d.in_h = input.dim(2);
  d.in_w = input.dim(3);
  d.out_ch = kernel.dim(0);
  d.k_h = kernel.dim(2);
  d.k_w = kernel.dim(3);
  d.stride = stride;
  d.pad = padding;
  require(kernel.dim(1) == d.in_ch, ErrorKind::invalid,
          "conv2d: kernel channels " + std::to_string(kernel.dim(1)) +
              " do not match input channels " + std::to_string(d.in_ch));
  require(d.k_h <= d.in_h + 2 * padding && d.k_w <= d.in_w + 2 * padding,
          ErrorKind::invalid,
          "conv2d: kernel " + shape_str(kernel.shape()) +
              " larger than padded input " + shape_str(input.shape()) +
              " with padding " + std::to_string(padding));
  d.out_h = (d.in_h + 2 * padding - d.k_h) / stride + 1;
  d.out_w = (d.in_w + 2 * padding - d.k_w) / stride + 1;
  return d;
}

// Output-column range [lo, hi) for which the input column stays in bounds.
inline void col_range(std::int64_t kj, const ConvDims& d, std::int64_t& lo,
                      std::int64_t& hi) {
  const std::int64_t off = kj - d.pad;  // iw = ow*stride + off
  lo = off >= 0 ? 0 : (-off + d.stride - 1) / d.stride;
  const std::int64_t max_num = d.in_w - 1 - off;
  hi = max_num < 0 ? 0 : std::min(d.out_w, max_num / d.stride + 1);
  if (hi < lo) {
    hi = lo;
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::int64_t stride,
              std::int64_t padding) {
  const ConvDims d = conv_dims(input, kernel, stride, padding);
  std::vector<double> out(
      static_cast<std::size_t>(d.batch * d.out_ch * d.out_h * d.out_w), 0.0);
  const double* in = input.data().data();
  const double* ker = kernel.data().data();
  for (std::int64_t n = 0; n < d.batch; ++n) {
    for (std::int64_t o = 0; o < d.out_ch; ++o) {
      double* outp = out.data() + (n * d.out_ch + o) * d.out_h * d.out_w;
      for (std::int64_t c = 0; c < d.in_ch; ++c) {
        const double* inp = in + (n * d.in_ch + c) * d.in_h * d.in_w;
        const double* kp = ker + (o * d.in_ch + c) * d.k_h * d.k_w;
        for (std::int64_t ki = 0; ki < d.k_h; ++ki) {
          for (std::int64_t kj = 0; kj < d.k_w; ++kj) {
            const double w = kp[ki * d.k_w + kj];
            std::int64_t lo, hi;
            col_range(kj, d, lo, hi);
            for (std::int64_t oh = 0; oh < d.out_h; ++oh) {
              const std::int64_t ih = oh * d.stride + ki - d.pad;
              if (ih < 0 || ih >= d.in_h) {
                continue;
              }
              const double* inrow = inp + ih * d.in_w + (kj - d.pad);
              double* outrow = outp + oh * d.out_w;
              for (std::int64_t ow = lo; ow < hi; ++ow) {
                outrow[ow] += w * inrow[ow * d.stride];
              }
            }
          }
        }
      }
    }
  }
  auto pi = input.impl_ptr();
  auto pk = kernel.impl_ptr();
  return make_result(
      Shape{d.batch, d.out_ch, d.out_h, d.out_w}, std::move(out), {pi, pk},
      [pi, pk, d](TensorImpl& self) {
        const double* g = self.grad.data();
        if (pi->requires_grad) {
          std::vector<double> gin(pi->data.size(), 0.0);
          const double* ker = pk->data.data();
          for (std::int64_t n = 0; n < d.batch; ++n) {
            for (std::int64_t o = 0; o < d.out_ch; ++o) {
              const double* gout = g + (n * d.out_ch + o) * d.out_h * d.out_w;
              for (std::int64_t c = 0; c < d.in_ch; ++c) {
                double* ginp = gin.data() + (n * d.in_ch + c) * d.in_h * d.in_w;
                const double* kp = ker + (o * d.in_ch + c) * d.k_h * d.k_w;
                for (std::int64_t ki = 0; ki < d.k_h; ++ki) {
                  for (std::int64_t kj = 0; kj < d.k_w; ++kj) {
                    const double w = kp[ki * d.k_w + kj];
                    std::int64_t lo, hi;
                    col_range(kj, d, lo, hi);
                    for (std::int64_t oh = 0; oh < d.out_h; ++oh) {
                      const std::int64_t ih = oh * d.stride + ki - d.pad;
                      if (ih < 0 || ih >= d.in_h) {
                        continue;
                      }
                      double* ginrow = ginp + ih * d.in_w + (kj - d.pad);
                      const double* grow = gout + oh * d.out_w;
                      for (std::int64_t ow = lo; ow < hi; ++ow) {
                        ginrow[ow * d.stride] += w * grow[ow];
                      }
                    }
                  }
                }
              }
            }
          }
          accumulate(*pi, gin);
        }
        if (pk->requires_grad) {
          std::vector<double> gker(pk->data.size(), 0.0);
          const double* in = pi->data.data();
          for (std::int64_t n = 0; n < d.batch; ++n) {
            for (std::int64_t o = 0; o < d.out_ch; ++o) {
              const double* gout = g + (n * d.out_ch + o) * d.out_h * d.out_w;
              for (std::int64_t c = 0; c < d.in_ch; ++c) {
                const double* inp = in + (n * d.in_ch + c) * d.in_h * d.in_w;
                double* gkp = gker.data() + (o * d.in_ch + c) * d.k_h * d.k_w;
                for (std::int64_t ki = 0; ki < d.k_h; ++ki) {
                  for (std::int64_t kj = 0; kj < d.k_w; ++kj) {
                    std::int64_t lo, hi;
                    col_range(kj, d, lo, hi);
                    double acc = 0.0;
                    for (std::int64_t oh = 0; oh < d.out_h; ++oh) {
                      const std::int64_t ih = oh * d.stride + ki - d.pad;
                      if (ih < 0 || ih >= d.in_h) {
                        continue;
                      }
                      const double* inrow = inp + ih * d.in_w + (kj - d.pad);
                      const double* grow = gout + oh * d.out_w;
                      for (std::int64_t ow = lo; ow < hi; ++ow) {
                        acc += inrow[ow * d.stride] * grow[ow];
                      }
                    }
                    gkp[ki * d.k_w + kj] += acc;
                  }
                }
              }
            }
          }
          accumulate(*pk, gker);
        }
      });
}

Tensor bias_add_channels(const Tensor& x, const Tensor& bias) {
  require(x.defined() && bias.defined(), ErrorKind::invalid,
          "bias_add_channels: undefined operand");
  require(x.rank() == 4 && bias.rank() == 1 && bias.dim(0) == x.dim(1),
          ErrorKind::invalid,
          "bias_add_channels: expects [N,C,H,W] and [C], got " +
              shape_str(x.shape()) + " and " + shape_str(bias.shape()));
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<double> out(x.data().begin(), x.data().end());
  const double* bd = bias.data().data();
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < c; ++j) {
      double* row = out.data() + (i * c + j) * hw;
      const double b = bd[j];
      for (std::int64_t k = 0; k < hw; ++k) {
        row[k] += b;
      }
    }
  }
  auto px = x.impl_ptr();
  auto pb = bias.impl_ptr();
  return make_result(
      x.shape(), std::move(out), {px, pb}, [px, pb, n, c, hw](TensorImpl& self) {
        if (px->requires_grad) {
          accumulate(*px, self.grad);
        }
        if (pb->requires_grad) {
          std::vector<double> gb(static_cast<std::size_t>(c), 0.0);
          const double* g = self.grad.data();
          for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = 0; j < c; ++j) {
              const double* row = g + (i * c + j) * hw;
              double acc = 0.0;
              for (std::int64_t k = 0; k < hw; ++k) {
                acc += row[k];
              }
              gb[static_cast<std::size_t>(j)] += acc;
            }
          }
          accumulate(*pb, gb);
        }
      });
}

Tensor relu(const Tensor& x) {
  require(x.defined(), ErrorKind::invalid, "relu: undefined operand");
  const auto& xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  }
  auto px = x.impl_ptr();
  return make_result(x.shape(), std::move(out), {px}, [px](TensorImpl& self) {
    std::vector<double> g(self.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = px->data[i] > 0.0 ? self.grad[i] : 0.0;
    }
    accumulate(*px, g);
  });
}

Tensor global_avg_pool(const Tensor& x) {
  require(x.defined() && x.rank() == 4, ErrorKind::invalid,
          "global_avg_pool: expects [N,C,H,W], got " +
              (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<double> out(static_cast<std::size_t>(n * c), 0.0);
  const double* xd = x.data().data();
  for (std::int64_t i = 0; i < n * c; ++i) {
    const double* row = xd + i * hw;
    double acc = 0.0;
    for (std::int64_t k = 0; k < hw; ++k) {
      acc += row[k];
    }
    out[static_cast<std::size_t>(i)] = acc / static_cast<double>(hw);
  }
  auto px = x.impl_ptr();
  return make_result(Shape{n, c}, std::move(out), {px},
                     [px, n, c, hw](TensorImpl& self) {
                       std::vector<double> g(px->data.size());
                       const double inv = 1.0 / static_cast<double>(hw);
                       for (std::int64_t i = 0; i < n * c; ++i) {
                         const double gv = self.grad[static_cast<std::size_t>(i)] * inv;
                         double* row = g.data() + i * hw;
                         for (std::int64_t k = 0; k < hw; ++k) {
                           row[k] = gv;
                         }
                       }
                       accumulate(*px, g);
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(x.defined(), ErrorKind::invalid, "reshape: undefined operand");
  validate_shape(shape);
  require(shape_numel(shape) == x.numel(), ErrorKind::invalid,
          "reshape: cannot view " + shape_str(x.shape()) + " as " +
              shape_str(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  auto px = x.impl_ptr();
  return make_result(std::move(shape), std::move(out), {px},
                     [px](TensorImpl& self) { accumulate(*px, self.grad); });
}

Tensor softmax(const Tensor& x, int axis) {
  require(x.defined(), ErrorKind::invalid, "softmax: undefined operand");
  const std::int64_t ax = normalize_axis("softmax", axis, x.rank());
  const AxisSpan sp = axis_span(x.shape(), ax);
  const double* xd = x.data().data();
  std::vector<double> out(x.data().size());
  for (std::int64_t ou = 0; ou < sp.outer; ++ou) {
    for (std::int64_t in = 0; in < sp.inner; ++in) {
      const std::int64_t base = ou * sp.n * sp.inner + in;
      double m = xd[base];
      for (std::int64_t j = 1; j < sp.n; ++j) {
        m = std::max(m, xd[base + j * sp.inner]);
      }
      double z = 0.0;
      for (std::int64_t j = 0; j < sp.n; ++j) {
        const double e = std::exp(xd[base + j * sp.inner] - m);
        out[static_cast<std::size_t>(base + j * sp.inner)] = e;
        z += e;
      }
      for (std::int64_t j = 0; j < sp.n; ++j) {
        out[static_cast<std::size_t>(base + j * sp.inner)] /= z;
      }
    }
  }
  auto px = x.impl_ptr();
  return make_result(
      x.shape(), std::move(out), {px}, [px, sp](TensorImpl& self) {
        // dx_i = s_i * (g_i - sum_j g_j s_j) along the axis.
        std::vector<double> g(self.grad.size());
        const double* s = self.data.data();
        const double* go = self.grad.data();
        for (std::int64_t ou = 0; ou < sp.outer; ++ou) {
          for (std::int64_t in = 0; in < sp.inner; ++in) {
            const std::int64_t base = ou * sp.n * sp.inner + in;
            double dot = 0.0;
            for (std::int64_t j = 0; j < sp.n; ++j) {
              const std::int64_t k = base + j * sp.inner;
              dot += go[k] * s[k];
            }
            for (std::int64_t j = 0; j < sp.n; ++j) {
              const std::int64_t k = base + j * sp.inner;
              g[static_cast<std::size_t>(k)] = s[k] * (go[k] - dot);
            }
          }
        }
        accumulate(*px, g);
      });
}

Tensor logsumexp(const Tensor& x, int axis) {
  require(x.defined(), ErrorKind::invalid, "logsumexp: undefined operand");
  const std::int64_t ax = normalize_axis("logsumexp", axis, x.rank());
  const AxisSpan sp = axis_span(x.shape(), ax);
  const double* xd = x.data().data();
  std::vector<double> out(static_cast<std::size_t>(sp.outer * sp.inner));
  for (std::int64_t ou = 0; ou < sp.outer; ++ou) {
    for (std::int64_t in = 0; in < sp.inner; ++in) {
      const std::int64_t base = ou * sp.n * sp.inner + in;
      double m = xd[base];
      for (std::int64_t j = 1; j < sp.n; ++j) {
        m = std::max(m, xd[base + j * sp.inner]);
      }
      double z = 0.0;
      for (std::int64_t j = 0; j < sp.n; ++j) {
        z += std::exp(xd[base + j * sp.inner] - m);
      }
      out[static_cast<std::size_t>(ou * sp.inner + in)] = m + std::log(z);
    }
  }
  auto px = x.impl_ptr();
  return make_result(
      drop_axis(x.shape(), ax), std::move(out), {px}, [px, sp](TensorImpl& self) {
        // dx = g_out * softmax(x) along the axis.
        std::vector<double> g(px->data.size());
        const double* xd = px->data.data();
        for (std::int64_t ou = 0; ou < sp.outer; ++ou) {
          for (std::int64_t in = 0; in < sp.inner; ++in) {
            const std::int64_t base = ou * sp.n * sp.inner + in;
            const double lse = self.data[static_cast<std::size_t>(ou * sp.inner + in)];
            const double gv = self.grad[static_cast<std::size_t>(ou * sp.inner + in)];
            for (std::int64_t j = 0; j < sp.n; ++j) {
              const std::int64_t k = base + j * sp.inner;
              g[static_cast<std::size_t>(k)] = gv * std::exp(xd[k] - lse);
            }
          }
        }
        accumulate(*px, g);
      });
}

Tensor sum(const Tensor& x) {
  require(x.defined(), ErrorKind::invalid, "sum: undefined operand");
  double acc = 0.0;
  for (double v : x.data()) {
    acc += v;
  }
  auto px = x.impl_ptr();
  return make_result(Shape{}, std::vector<double>{acc}, {px},
                     [px](TensorImpl& self) {
                       std::vector<double> g(px->data.size(), self.grad[0]);
                       accumulate(*px, g);
                     });
}

Tensor sum_axis(const Tensor& x, int axis) {
  require(x.defined(), ErrorKind::invalid, "sum_axis: undefined operand");
  const std::int64_t ax = normalize_axis("sum_axis", axis, x.rank());
  const AxisSpan sp = axis_span(x.shape(), ax);
  const double* xd = x.data().data();
  std::vector<double> out(static_cast<std::size_t>(sp.outer * sp.inner), 0.0);
  for (std::int64_t ou = 0; ou < sp.outer; ++ou) {
    for (std::int64_t j = 0; j < sp.n; ++j) {
      const double* row = xd + (ou * sp.n + j) * sp.inner;
      double* orow = out.data() + ou * sp.inner;
      for (std::int64_t in = 0; in < sp.inner; ++in) {
        orow[in] += row[in];
      }
    }
  }
  auto px = x.impl_ptr();
  return make_result(
      drop_axis(x.shape(), ax), std::move(out), {px}, [px, sp](TensorImpl& self) {
        std::vector<double> g(px->data.size());
        for (std::int64_t ou = 0; ou < sp.outer; ++ou) {
          for (std::int64_t j = 0; j < sp.n; ++j) {
            double* row = g.data() + (ou * sp.n + j) * sp.inner;
            const double* grow = self.grad.data() + ou * sp.inner;
            for (std::int64_t in = 0; in < sp.inner; ++in) {
              row[in] = grow[in];
            }
          }
        }
        accumulate(*px, g);
      });
}

Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length) {
  require(x.defined(), ErrorKind::invalid, "slice: undefined operand");
  const std::int64_t ax = normalize_axis("slice", axis, x.rank());
  const AxisSpan sp = axis_span(x.shape(), ax);
  require(length >= 1 && start >= 0 && start + length <= sp.n,
          ErrorKind::invalid,
          "slice: range [" + std::to_string(start) + ", " +
              std::to_string(start + length) + ") invalid for axis size " +
              std::to_string(sp.n));
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(ax)] = length;
  std::vector<double> out(static_cast<std::size_t>(sp.outer * length * sp.inner));
  const double* xd = x.data().data();
  for (std::int64_t ou = 0; ou < sp.outer; ++ou) {
    for (std::int64_t j = 0; j < length; ++j) {
      const double* src = xd + (ou * sp.n + start + j) * sp.inner;
      double* dst = out.data() + (ou * length + j) * sp.inner;
      std::copy(src, src + sp.inner, dst);
    }
  }
  auto px = x.impl_ptr();
  return make_result(
      std::move(out_shape), std::move(out), {px},
      [px, sp, start, length](TensorImpl& self) {
        std::vector<double> g(px->data.size(), 0.0);
        for (std::int64_t ou = 0; ou < sp.outer; ++ou) {
          for (std::int64_t j = 0; j < length; ++j) {
            const double* src = self.grad.data() + (ou * length + j) * sp.inner;
            double* dst = g.data() + (ou * sp.n + start + j) * sp.inner;
            std::copy(src, src + sp.inner, dst);
          }
        }
        accumulate(*px, g);
      });
}

void backward(const Tensor& loss) {
  require(loss.defined(), ErrorKind::invalid, "backward: undefined tensor");
  require(loss.numel() == 1, ErrorKind::invalid,
          "backward: loss must be a scalar, got " + shape_str(loss.shape()));
  require(loss.requires_grad(), ErrorKind::invalid,
          "backward: loss does not depend on any differentiable tensor");

  // Post-order DFS yields a topological order with parents before children.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  struct Frame {
    TensorImpl* node;
    std::size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.impl(), 0});
  visited.insert(loss.impl());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      TensorImpl* p = f.node->parents[f.next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior grads are scratch space per invocation; leaf grads accumulate.
  for (TensorImpl* node : order) {
    if (!node->is_leaf()) {
      node->grad.assign(node->data.size(), 0.0);
    }
  }
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (!node->is_leaf() && !node->grad.empty()) {
      node->backward_fn(*node);
    }
  }
}

}  // namespace trajkit
