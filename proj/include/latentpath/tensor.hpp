#pragma once

// Dense f64 tensors with reverse-mode differentiation over a dynamically
// recorded graph. Covers exactly the layer set the models need: conv2d,
// dense, relu, sigmoid, upsample, reshape, plus the two losses.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "latentpath/common.hpp"
#include "latentpath/gemm.hpp"

namespace latentpath {

namespace detail {

struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // sized lazily during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(TensorNode&)> backprop;

  bool is_leaf() const { return parents.empty(); }
};

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

inline std::vector<double>& grad_buffer(TensorNode& node) {
  if (node.grad.size() != node.values.size()) node.grad.assign(node.values.size(), 0.0);
  return node.grad;
}

// Graph recording can be suspended for pure inference (frozen encoders,
// evaluation); ops then produce leaf tensors with no parents.
inline thread_local bool grad_mode_enabled = true;

}  // namespace detail

struct NoGradGuard {
  NoGradGuard() : previous_(detail::grad_mode_enabled) { detail::grad_mode_enabled = false; }
  ~NoGradGuard() { detail::grad_mode_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_mode() { return detail::grad_mode_enabled; }

// Value-semantic handle onto a graph node. Copies share storage, so the
// optimizer can update model parameters through any handle.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    return filled(std::move(shape), 0.0, requires_grad);
  }

  static Tensor filled(std::vector<std::size_t> shape, double value, bool requires_grad = false) {
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->values.assign(detail::shape_numel(node->shape), value);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor from_values(std::vector<std::size_t> shape, std::vector<double> values,
                            bool requires_grad = false) {
    if (detail::shape_numel(shape) != values.size()) {
      throw ConfigError("tensor shape does not match value count");
    }
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from_values({1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->values.size(); }
  std::size_t extent(std::size_t dim) const { return node_->shape.at(dim); }

  std::span<double> values() { return node_->values; }
  std::span<const double> values() const { return node_->values; }
  double* data() { return node_->values.data(); }
  const double* data() const { return node_->values.data(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  bool has_grad() const { return node_->grad.size() == node_->values.size(); }
  std::span<double> grad() {
    if (!has_grad()) throw UsageError("tensor has no gradient buffer");
    return node_->grad;
  }
  std::span<const double> grad() const {
    if (!has_grad()) throw UsageError("tensor has no gradient buffer");
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  double item() const {
    if (numel() != 1) throw UsageError("item() requires a single-element tensor");
    return node_->values[0];
  }

  double at(std::initializer_list<std::size_t> index) const {
    if (index.size() != node_->shape.size()) throw UsageError("index rank mismatch");
    std::size_t flat = 0;
    std::size_t dim = 0;
    for (std::size_t i : index) {
      if (i >= node_->shape[dim]) throw UsageError("index out of range");
      flat = flat * node_->shape[dim] + i;
      ++dim;
    }
    return node_->values[flat];
  }

  // Copy with no graph history and no gradient tracking.
  Tensor detach() const {
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = node_->shape;
    node->values = node_->values;
    return Tensor(std::move(node));
  }

  bool all_finite() const {
    for (double v : node_->values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor make_op_result(std::vector<std::size_t> shape,
                               std::vector<std::shared_ptr<detail::TensorNode>> parents,
                               std::function<void(detail::TensorNode&)> backprop);
};

inline Tensor make_op_result(std::vector<std::size_t> shape,
                             std::vector<std::shared_ptr<detail::TensorNode>> parents,
                             std::function<void(detail::TensorNode&)> backprop) {
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->values.resize(detail::shape_numel(node->shape));
  bool track = grad_mode();
  if (track) {
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    track = any;
  }
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return Tensor(std::move(node));
}

namespace detail {

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.shape().size() != rank) {
    throw ConfigError(std::string(what) + ": expected rank " + std::to_string(rank) +
                      ", got shape " + shape_string(t.shape()));
  }
}

// Expands one image plane into the [C*kh*kw, outH*outW] patch matrix.
inline void im2col(const double* src, std::size_t channels, std::size_t height,
                   std::size_t width, std::size_t kh, std::size_t kw, std::size_t stride,
                   std::size_t padding, std::size_t out_h, std::size_t out_w, double* cols) {
  const std::size_t plane = height * width;
  const std::size_t out_plane = out_h * out_w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* chan = src + c * plane;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx, ++row) {
        double* out_row = cols + row * out_plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t y =
              static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
          double* out_ptr = out_row + oy * out_w;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(out_ptr, out_ptr + out_w, 0.0);
            continue;
          }
          const double* src_row = chan + static_cast<std::size_t>(y) * width;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                     static_cast<std::ptrdiff_t>(padding);
            out_ptr[ox] = (x < 0 || x >= static_cast<std::ptrdiff_t>(width))
                              ? 0.0
                              : src_row[static_cast<std::size_t>(x)];
          }
        }
      }
    }
  }
}

// Scatter-add of a patch matrix back onto the padded image; inverse of im2col.
inline void col2im_accumulate(const double* cols, std::size_t channels, std::size_t height,
                              std::size_t width, std::size_t kh, std::size_t kw,
                              std::size_t stride, std::size_t padding, std::size_t out_h,
                              std::size_t out_w, double* dst) {
  const std::size_t plane = height * width;
  const std::size_t out_plane = out_h * out_w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    double* chan = dst + c * plane;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx, ++row) {
        const double* col_row = cols + row * out_plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t y =
              static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(height)) continue;
          double* dst_row = chan + static_cast<std::size_t>(y) * width;
          const double* col_ptr = col_row + oy * out_w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                     static_cast<std::ptrdiff_t>(padding);
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(width)) continue;
            dst_row[static_cast<std::size_t>(x)] += col_ptr[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2-D convolution, zero padding. input [N,C,H,W] * kernel [F,C,kh,kw] + bias
// [F] -> [N,F,H',W'] with H' = floor((H + 2p - kh)/stride) + 1.
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     std::size_t stride, std::size_t padding) {
  detail::require_rank(input, 4, "conv2d input");
  detail::require_rank(kernel, 4, "conv2d kernel");
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  const std::size_t batch = input.extent(0), channels = input.extent(1);
  const std::size_t height = input.extent(2), width = input.extent(3);
  const std::size_t filters = kernel.extent(0), kh = kernel.extent(2), kw = kernel.extent(3);
  if (kernel.extent(1) != channels) {
    throw ConfigError("conv2d: kernel channels " + std::to_string(kernel.extent(1)) +
                      " do not match input channels " + std::to_string(channels));
  }
  if (!bias.defined() || bias.shape() != std::vector<std::size_t>{filters}) {
    throw ConfigError("conv2d: bias must have shape [filters]");
  }
  if (kh > height + 2 * padding || kw > width + 2 * padding) {
    throw ConfigError("conv2d: kernel larger than padded input");
  }
  const std::size_t out_h = (height + 2 * padding - kh) / stride + 1;
  const std::size_t out_w = (width + 2 * padding - kw) / stride + 1;
  const std::size_t ckk = channels * kh * kw;
  const std::size_t out_plane = out_h * out_w;

  auto in_node = input.node();
  auto k_node = kernel.node();
  auto b_node = bias.node();

  Tensor out = make_op_result(
      {batch, filters, out_h, out_w}, {in_node, k_node, b_node},
      [in_node, k_node, b_node, stride, padding, batch, channels, height, width, filters, kh, kw,
       out_h, out_w, ckk, out_plane](detail::TensorNode& self) {
        std::vector<double> cols(ckk * out_plane);
        std::vector<double> dcols(ckk * out_plane);
        const bool need_input = in_node->requires_grad;
        const bool need_kernel = k_node->requires_grad;
        const bool need_bias = b_node->requires_grad;
        auto& dinput = need_input ? detail::grad_buffer(*in_node) : in_node->grad;
        auto& dkernel = need_kernel ? detail::grad_buffer(*k_node) : k_node->grad;
        auto& dbias = need_bias ? detail::grad_buffer(*b_node) : b_node->grad;
        for (std::size_t n = 0; n < batch; ++n) {
          const double* grad_out = self.grad.data() + n * filters * out_plane;
          if (need_kernel || need_input) {
            detail::im2col(in_node->values.data() + n * channels * height * width, channels,
                           height, width, kh, kw, stride, padding, out_h, out_w, cols.data());
          }
          if (need_kernel) {
            detail::gemm_nt(grad_out, cols.data(), dkernel.data(), filters, out_plane, ckk);
          }
          if (need_bias) {
            for (std::size_t f = 0; f < filters; ++f) {
              const double* row = grad_out + f * out_plane;
              double acc = 0.0;
              for (std::size_t i = 0; i < out_plane; ++i) acc += row[i];
              dbias[f] += acc;
            }
          }
          if (need_input) {
            std::fill(dcols.begin(), dcols.end(), 0.0);
            detail::gemm_tn(k_node->values.data(), grad_out, dcols.data(), ckk, filters,
                            out_plane);
            detail::col2im_accumulate(dcols.data(), channels, height, width, kh, kw, stride,
                                      padding, out_h, out_w,
                                      dinput.data() + n * channels * height * width);
          }
        }
      });

  std::vector<double> cols(ckk * out_plane);
  for (std::size_t n = 0; n < batch; ++n) {
    detail::im2col(input.data() + n * channels * height * width, channels, height, width, kh, kw,
                   stride, padding, out_h, out_w, cols.data());
    double* dst = out.data() + n * filters * out_plane;
    for (std::size_t f = 0; f < filters; ++f) {
      std::fill(dst + f * out_plane, dst + (f + 1) * out_plane, bias.data()[f]);
    }
    detail::gemm_nn(kernel.data(), cols.data(), dst, filters, ckk, out_plane);
  }
  return out;
}

// Fully connected layer: x [N,I] * w [I,O] + b [O] -> [N,O].
inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  detail::require_rank(x, 2, "dense input");
  detail::require_rank(w, 2, "dense weight");
  const std::size_t batch = x.extent(0), in_dim = x.extent(1), out_dim = w.extent(1);
  if (w.extent(0) != in_dim) {
    throw ConfigError("dense: weight rows " + std::to_string(w.extent(0)) +
                      " do not match input width " + std::to_string(in_dim));
  }
  if (!b.defined() || b.shape() != std::vector<std::size_t>{out_dim}) {
    throw ConfigError("dense: bias must have shape [out]");
  }
  auto x_node = x.node();
  auto w_node = w.node();
  auto b_node = b.node();
  Tensor out = make_op_result(
      {batch, out_dim}, {x_node, w_node, b_node},
      [x_node, w_node, b_node, batch, in_dim, out_dim](detail::TensorNode& self) {
        if (x_node->requires_grad) {
          detail::gemm_nt(self.grad.data(), w_node->values.data(),
                          detail::grad_buffer(*x_node).data(), batch, out_dim, in_dim);
        }
        if (w_node->requires_grad) {
          detail::gemm_tn(x_node->values.data(), self.grad.data(),
                          detail::grad_buffer(*w_node).data(), in_dim, batch, out_dim);
        }
        if (b_node->requires_grad) {
          auto& db = detail::grad_buffer(*b_node);
          for (std::size_t n = 0; n < batch; ++n) {
            const double* row = self.grad.data() + n * out_dim;
            for (std::size_t j = 0; j < out_dim; ++j) db[j] += row[j];
          }
        }
      });
  for (std::size_t n = 0; n < batch; ++n) {
    double* row = out.data() + n * out_dim;
    for (std::size_t j = 0; j < out_dim; ++j) row[j] = b.data()[j];
  }
  detail::gemm_nn(x.data(), w.data(), out.data(), batch, in_dim, out_dim);
  return out;
}

inline Tensor relu(const Tensor& x) {
  auto x_node = x.node();
  Tensor out = make_op_result(x.shape(), {x_node}, [x_node](detail::TensorNode& self) {
    if (!x_node->requires_grad) return;
    auto& dx = detail::grad_buffer(*x_node);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (x_node->values[i] > 0.0) dx[i] += self.grad[i];
    }
  });
  for (std::size_t i = 0; i < x.numel(); ++i) {
    out.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  }
  return out;
}

inline Tensor sigmoid(const Tensor& x) {
  auto x_node = x.node();
  Tensor out = make_op_result(x.shape(), {x_node}, [x_node](detail::TensorNode& self) {
    if (!x_node->requires_grad) return;
    auto& dx = detail::grad_buffer(*x_node);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.values[i];
      dx[i] += self.grad[i] * s * (1.0 - s);
    }
  });
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return out;
}

// Same storage order, new extents; numel must match.
inline Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
  if (detail::shape_numel(shape) != x.numel()) {
    throw ConfigError("reshape: element count mismatch");
  }
  auto x_node = x.node();
  Tensor out = make_op_result(std::move(shape), {x_node}, [x_node](detail::TensorNode& self) {
    if (!x_node->requires_grad) return;
    auto& dx = detail::grad_buffer(*x_node);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
  });
  std::copy(x.data(), x.data() + x.numel(), out.data());
  return out;
}

// [N,C,H,W] -> [N, C*H*W]
inline Tensor flatten(const Tensor& x) {
  detail::require_rank(x, 4, "flatten input");
  return reshape(x, {x.extent(0), x.extent(1) * x.extent(2) * x.extent(3)});
}

// Nearest-neighbor upsampling by an integer factor on [N,C,H,W].
inline Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  detail::require_rank(x, 4, "upsample input");
  if (factor < 1) throw ConfigError("upsample_nearest: factor must be >= 1");
  const std::size_t batch = x.extent(0), channels = x.extent(1);
  const std::size_t height = x.extent(2), width = x.extent(3);
  const std::size_t out_h = height * factor, out_w = width * factor;
  auto x_node = x.node();
  Tensor out = make_op_result(
      {batch, channels, out_h, out_w}, {x_node},
      [x_node, batch, channels, height, width, factor, out_h, out_w](detail::TensorNode& self) {
        if (!x_node->requires_grad) return;
        auto& dx = detail::grad_buffer(*x_node);
        const std::size_t planes = batch * channels;
        for (std::size_t p = 0; p < planes; ++p) {
          const double* gsrc = self.grad.data() + p * out_h * out_w;
          double* gdst = dx.data() + p * height * width;
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            const double* grow = gsrc + oy * out_w;
            double* drow = gdst + (oy / factor) * width;
            for (std::size_t ox = 0; ox < out_w; ++ox) drow[ox / factor] += grow[ox];
          }
        }
      });
  const std::size_t planes = batch * channels;
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.data() + p * height * width;
    double* dst = out.data() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const double* srow = src + (oy / factor) * width;
      double* drow = dst + oy * out_w;
      for (std::size_t ox = 0; ox < out_w; ++ox) drow[ox] = srow[ox / factor];
    }
  }
  return out;
}

// Sum of all elements -> scalar.
inline Tensor sum(const Tensor& x) {
  auto x_node = x.node();
  Tensor out = make_op_result({1}, {x_node}, [x_node](detail::TensorNode& self) {
    if (!x_node->requires_grad) return;
    auto& dx = detail::grad_buffer(*x_node);
    for (double& g : dx) g += self.grad[0];
  });
  out.data()[0] = std::accumulate(x.data(), x.data() + x.numel(), 0.0);
  return out;
}

// Mean squared error over all elements. The target must not carry gradient.
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ConfigError("mse_loss: shape mismatch " + detail::shape_string(pred.shape()) + " vs " +
                      detail::shape_string(target.shape()));
  }
  if (target.requires_grad()) throw UsageError("mse_loss: target must not require grad");
  auto p_node = pred.node();
  auto t_node = target.node();
  const double inv_n = 1.0 / static_cast<double>(pred.numel());
  Tensor out =
      make_op_result({1}, {p_node}, [p_node, t_node, inv_n](detail::TensorNode& self) {
        if (!p_node->requires_grad) return;
        auto& dp = detail::grad_buffer(*p_node);
        const double scale = 2.0 * inv_n * self.grad[0];
        for (std::size_t i = 0; i < dp.size(); ++i) {
          dp[i] += scale * (p_node->values[i] - t_node->values[i]);
        }
      });
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = pred.data()[i] - target.data()[i];
    acc += d * d;
  }
  out.data()[0] = acc * inv_n;
  if (!std::isfinite(out.data()[0])) throw NumericError("mse_loss: non-finite result");
  return out;
}

// Mean over the batch of -log softmax(logits)[label]; max-subtraction for
// numerical stability. logits [N,K], labels in [0,K).
inline Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  detail::require_rank(logits, 2, "softmax_cross_entropy logits");
  const std::size_t batch = logits.extent(0), classes = logits.extent(1);
  if (labels.size() != batch) {
    throw InputError("softmax_cross_entropy: label count does not match batch");
  }
  for (std::size_t n = 0; n < batch; ++n) {
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= classes) {
      throw InputError("softmax_cross_entropy: label out of range at row " + std::to_string(n));
    }
  }
  auto l_node = logits.node();
  // Softmax probabilities are shared with the backward closure.
  auto probs = std::make_shared<std::vector<double>>(batch * classes);
  const double inv_batch = 1.0 / static_cast<double>(batch);
  Tensor out = make_op_result(
      {1}, {l_node}, [l_node, probs, labels, batch, classes, inv_batch](detail::TensorNode& self) {
        if (!l_node->requires_grad) return;
        auto& dl = detail::grad_buffer(*l_node);
        const double scale = inv_batch * self.grad[0];
        for (std::size_t n = 0; n < batch; ++n) {
          const double* p = probs->data() + n * classes;
          double* g = dl.data() + n * classes;
          for (std::size_t k = 0; k < classes; ++k) g[k] += scale * p[k];
          g[static_cast<std::size_t>(labels[n])] -= scale;
        }
      });
  double loss = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const double* row = logits.data() + n * classes;
    double* p = probs->data() + n * classes;
    double max_v = row[0];
    for (std::size_t k = 1; k < classes; ++k) max_v = std::max(max_v, row[k]);
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      p[k] = std::exp(row[k] - max_v);
      denom += p[k];
    }
    for (std::size_t k = 0; k < classes; ++k) p[k] /= denom;
    loss -= std::log(p[static_cast<std::size_t>(labels[n])]);
  }
  out.data()[0] = loss * inv_batch;
  if (!std::isfinite(out.data()[0])) {
    throw NumericError("softmax_cross_entropy: non-finite result");
  }
  return out;
}

// Reverse-mode sweep from a scalar loss. Gradients of interior nodes are
// recomputed per call; leaf gradients accumulate across calls until the
// caller resets them.
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1) throw UsageError("backward: loss must be scalar");
  auto root = loss.node();
  if (!root->requires_grad) return;

  std::vector<detail::TensorNode*> order;
  std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
  std::vector<detail::TensorNode*> visited;
  auto mark = [&](detail::TensorNode* n) {
    // Small graphs: linear scan keeps this allocation-free and simple.
    for (auto* v : visited) {
      if (v == n) return true;
    }
    visited.push_back(n);
    return false;
  };
  stack.emplace_back(root.get(), 0);
  mark(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::TensorNode* parent = node->parents[next].get();
      ++next;
      if (parent->requires_grad && !parent->parents.empty() && !mark(parent)) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads are scratch for this sweep; leaves keep accumulating.
  for (auto* node : order) {
    detail::grad_buffer(*node);
    std::fill(node->grad.begin(), node->grad.end(), 0.0);
  }
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* node = *it;
    if (node->backprop) node->backprop(*node);
  }
}

}  // namespace latentpath
