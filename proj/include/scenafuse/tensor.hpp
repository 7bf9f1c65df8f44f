// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace scenafuse {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first touched by a backward pass
  bool requires_grad = false;
  bool tracked = false;  // participates in the currently recording graph

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Dense row-major f64 tensor. Copies are shallow (shared storage); use
/// clone() for an independent buffer.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c);
  double operator()(std::size_t r, std::size_t c) const;
  double item() const;  // scalar access, throws unless numel() == 1

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  std::span<const double> grad() const { return impl_->grad; }
  bool has_grad() const { return !impl_->grad.empty(); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }
  bool tracked() const { return impl_->tracked || impl_->requires_grad; }

  void zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }
  Tensor clone() const;
  Tensor detached() const;  // deep copy that never requires grad

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Reverse-mode tape. Ops record onto the active tape (see Scope); replaying
/// backward() accumulates gradients additively into every reachable tensor
/// with requires_grad set. A tape and its tensors belong to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active();

  void record(std::shared_ptr<detail::TensorImpl> output, std::function<void()> fn);
  void backward(const Tensor& loss);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<detail::TensorImpl> output;
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
};

void backward(Tape& tape, const Tensor& loss);

// --- primitive ops -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);

// Binary elementwise ops accept equal shapes, or a rank-2 `b` broadcast as a
// single row (1 x t against l x t) or a single column (l x 1 against l x t).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);
Tensor sum(const Tensor& x);
Tensor gather_rows(const Tensor& table, std::span<const int> ids);
Tensor reshape(const Tensor& x, Shape shape);

/// Central finite differences against the analytic gradients of loss_fn.
/// Perturbs each coordinate of each param by +-eps and returns
/// max over coordinates of |a - n| / max(1e-8, |a| + |n|).
/// Zeroes the params' accumulated gradients as a side effect.
double grad_check(const std::function<Tensor()>& loss_fn,
                  std::span<Tensor> params, double eps = 1e-5);

bool all_finite(const Tensor& x);

}  // namespace scenafuse
