// SPDX-License-Identifier: Apache-2.0
#include "scenafuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace scenafuse {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + shape_str(a) +
                              " and " + shape_str(b));
}

using Impl = std::shared_ptr<detail::TensorImpl>;

// How the second operand of a binary op lines up with the first.
enum class Bcast { same, row, col };

Bcast bcast_kind(const std::string& op, const Shape& a, const Shape& b) {
  if (a == b) return Bcast::same;
  if (a.size() == 2 && b.size() == 2) {
    if (b[0] == 1 && b[1] == a[1]) return Bcast::row;
    if (b[1] == 1 && b[0] == a[0]) return Bcast::col;
  }
  if (a.size() == 2 && b.size() == 1 && b[0] == a[1]) return Bcast::row;
  shape_error(op, a, b);
}

bool should_record(const Tensor& a) { return Tape::active() && a.tracked(); }
bool should_record(const Tensor& a, const Tensor& b) {
  return Tape::active() && (a.tracked() || b.tracked());
}

Tensor make_output(Shape shape) { return Tensor::zeros(std::move(shape)); }

void mark_and_record(Tensor& out, std::function<void()> fn) {
  out.impl()->tracked = true;
  Tape::active()->record(out.impl(), std::move(fn));
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// --- Tensor --------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                " does not match data length " +
                                std::to_string(data.size()));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

std::size_t Tensor::rows() const {
  if (rank() != 2) {
    throw std::invalid_argument("rows(): tensor is not rank-2, shape " + shape_str(shape()));
  }
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) {
    throw std::invalid_argument("cols(): tensor is not rank-2, shape " + shape_str(shape()));
  }
  return impl_->shape[1];
}

double& Tensor::operator()(std::size_t r, std::size_t c) {
  return impl_->data[r * impl_->shape[1] + c];
}

double Tensor::operator()(std::size_t r, std::size_t c) const {
  return impl_->data[r * impl_->shape[1] + c];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item(): tensor is not scalar, shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->data, impl_->requires_grad);
  return t;
}

Tensor Tensor::detached() const {
  Tensor t(impl_->shape, impl_->data, false);
  return t;
}

// --- Tape ----------------------------------------------------------------

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<detail::TensorImpl> output, std::function<void()> fn) {
  nodes_.push_back(Node{std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  }
  const detail::TensorImpl* loss_impl = loss.impl().get();
  bool on_tape = false;
  for (const Node& n : nodes_) {
    if (n.output.get() == loss_impl) {
      on_tape = true;
      break;
    }
  }
  if (!on_tape) {
    throw std::invalid_argument("backward: loss was not produced on this tape");
  }
  // Intermediate grads restart every pass; leaf grads accumulate across passes.
  for (Node& n : nodes_) {
    n.output->ensure_grad();
    std::fill(n.output->grad.begin(), n.output->grad.end(), 0.0);
  }
  loss.impl()->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->fn();
  }
}

void backward(Tape& tape, const Tensor& loss) { tape.backward(loss); }

// --- ops -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    shape_error("matmul", a.shape(), b.shape());
  }
  const std::size_t m = a.rows(), p = a.cols(), n = b.cols();
  Tensor out = make_output({m, n});
  {
    const double* A = a.data().data();
    const double* B = b.data().data();
    double* C = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < p; ++k) {
        const double aik = A[i * p + k];
        const double* Bk = B + k * n;
        double* Ci = C + i * n;
        for (std::size_t j = 0; j < n; ++j) Ci[j] += aik * Bk[j];
      }
    }
  }
  if (should_record(a, b)) {
    mark_and_record(out, [ai = a.impl(), bi = b.impl(), oi = out.impl(), m, p, n]() {
      const double* dC = oi->grad.data();
      if (ai->tracked || ai->requires_grad) {
        ai->ensure_grad();
        double* dA = ai->grad.data();
        const double* B = bi->data.data();
        // dA = dC * B^T
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t k = 0; k < p; ++k) {
            const double* dCi = dC + i * n;
            const double* Bk = B + k * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += dCi[j] * Bk[j];
            dA[i * p + k] += acc;
          }
        }
      }
      if (bi->tracked || bi->requires_grad) {
        bi->ensure_grad();
        double* dB = bi->grad.data();
        const double* A = ai->data.data();
        // dB = A^T * dC
        for (std::size_t i = 0; i < m; ++i) {
          const double* dCi = dC + i * n;
          for (std::size_t k = 0; k < p; ++k) {
            const double aik = A[i * p + k];
            double* dBk = dB + k * n;
            for (std::size_t j = 0; j < n; ++j) dBk[j] += aik * dCi[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) {
    throw std::invalid_argument("transpose: operand must be rank-2, got " +
                                shape_str(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = make_output({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = x(i, j);
  if (should_record(x)) {
    mark_and_record(out, [xi = x.impl(), oi = out.impl(), m, n]() {
      if (!(xi->tracked || xi->requires_grad)) return;
      xi->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          xi->grad[i * n + j] += oi->grad[j * m + i];
    });
  }
  return out;
}

namespace {

// Treats x as a set of slices along `axis`; rank-1 tensors act as one row.
struct SliceView {
  std::size_t count;   // number of slices
  std::size_t len;     // elements per slice
  std::size_t stride;  // stride between consecutive elements of one slice
  std::size_t step;    // offset between the starts of consecutive slices
};

SliceView slice_view(const Tensor& x, std::size_t axis) {
  if (x.rank() == 1) {
    if (axis != 0) {
      throw std::invalid_argument("softmax: invalid axis " + std::to_string(axis) +
                                  " for rank-1 tensor");
    }
    return {1, x.numel(), 1, 0};
  }
  if (x.rank() != 2) {
    throw std::invalid_argument("softmax: operand must be rank-1 or rank-2");
  }
  if (axis >= 2) throw std::invalid_argument("softmax: invalid axis " + std::to_string(axis));
  const std::size_t m = x.rows(), n = x.cols();
  if (axis == 1) return {m, n, 1, n};  // each row is a slice
  return {n, m, n, 1};                 // each column is a slice
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
  const SliceView v = slice_view(x, axis);
  Tensor out = make_output(x.shape());
  const double* in = x.data().data();
  double* y = out.data().data();
  for (std::size_t s = 0; s < v.count; ++s) {
    const std::size_t base = s * v.step;
    double mx = in[base];
    for (std::size_t i = 1; i < v.len; ++i)
      mx = std::max(mx, in[base + i * v.stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < v.len; ++i) {
      const double e = std::exp(in[base + i * v.stride] - mx);
      y[base + i * v.stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < v.len; ++i) y[base + i * v.stride] /= total;
  }
  if (should_record(x)) {
    mark_and_record(out, [xi = x.impl(), oi = out.impl(), v]() {
      if (!(xi->tracked || xi->requires_grad)) return;
      xi->ensure_grad();
      const double* y = oi->data.data();
      const double* dy = oi->grad.data();
      for (std::size_t s = 0; s < v.count; ++s) {
        const std::size_t base = s * v.step;
        double dot = 0.0;
        for (std::size_t i = 0; i < v.len; ++i) {
          const std::size_t k = base + i * v.stride;
          dot += dy[k] * y[k];
        }
        for (std::size_t i = 0; i < v.len; ++i) {
          const std::size_t k = base + i * v.stride;
          xi->grad[k] += y[k] * (dy[k] - dot);
        }
      }
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != 2 || b.rank() != 2) shape_error("concat", a.shape(), b.shape());
  if (axis >= 2) throw std::invalid_argument("concat: invalid axis " + std::to_string(axis));
  const std::size_t other = 1 - axis;
  if (a.shape()[other] != b.shape()[other]) shape_error("concat", a.shape(), b.shape());
  Shape out_shape = a.shape();
  out_shape[axis] += b.shape()[axis];
  Tensor out = make_output(out_shape);
  const std::size_t m = out_shape[0], n = out_shape[1];
  const std::size_t am = a.shape()[0], an = a.shape()[1];
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double val;
      if (axis == 0) val = i < am ? a(i, j) : b(i - am, j);
      else val = j < an ? a(i, j) : b(i, j - an);
      out(i, j) = val;
    }
  }
  if (should_record(a, b)) {
    mark_and_record(out, [ai = a.impl(), bi = b.impl(), oi = out.impl(), axis, m, n, am, an]() {
      const bool ga = ai->tracked || ai->requires_grad;
      const bool gb = bi->tracked || bi->requires_grad;
      if (ga) ai->ensure_grad();
      if (gb) bi->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double g = oi->grad[i * n + j];
          if (axis == 0) {
            if (i < am) { if (ga) ai->grad[i * an + j] += g; }
            else if (gb) bi->grad[(i - am) * an + j] += g;
          } else {
            if (j < an) { if (ga) ai->grad[i * an + j] += g; }
            else if (gb) bi->grad[i * (n - an) + (j - an)] += g;
          }
        }
      }
    });
  }
  return out;
}

namespace {

template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_op(const std::string& name, const Tensor& a, const Tensor& b,
                 Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
  const Bcast kind = bcast_kind(name, a.shape(), b.shape());
  Tensor out = make_output(a.shape());
  const std::size_t n_total = a.numel();
  const std::size_t ncols = kind == Bcast::same ? 0 : a.cols();
  auto b_index = [kind, ncols](std::size_t flat) -> std::size_t {
    switch (kind) {
      case Bcast::same: return flat;
      case Bcast::row: return flat % ncols;
      case Bcast::col: return flat / ncols;
    }
    return flat;
  };
  {
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < n_total; ++i) po[i] = fwd(pa[i], pb[b_index(i)]);
  }
  if (should_record(a, b)) {
    mark_and_record(out, [ai = a.impl(), bi = b.impl(), oi = out.impl(), b_index,
                          n_total, bwd_a, bwd_b]() {
      const bool ga = ai->tracked || ai->requires_grad;
      const bool gb = bi->tracked || bi->requires_grad;
      if (ga) ai->ensure_grad();
      if (gb) bi->ensure_grad();
      const double* pa = ai->data.data();
      const double* pb = bi->data.data();
      const double* g = oi->grad.data();
      for (std::size_t i = 0; i < n_total; ++i) {
        const std::size_t k = b_index(i);
        if (ga) ai->grad[i] += bwd_a(g[i], pa[i], pb[k]);
        if (gb) bi->grad[k] += bwd_b(g[i], pa[i], pb[k]);
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd) {
  Tensor out = make_output(x.shape());
  const double* in = x.data().data();
  double* po = out.data().data();
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) po[i] = fwd(in[i]);
  if (should_record(x)) {
    mark_and_record(out, [xi = x.impl(), oi = out.impl(), n, bwd]() {
      if (!(xi->tracked || xi->requires_grad)) return;
      xi->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        xi->grad[i] += bwd(oi->grad[i], xi->data[i], oi->data[i]);
    });
  }
  return out;
}

}  // namespace

Tensor scale(const Tensor& x, double c) {
  return unary_op(
      x, [c](double v) { return c * v; },
      [c](double g, double, double) { return c * g; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary_op(
      x, [c](double v) { return v + c; },
      [](double g, double, double) { return g; });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::tanh(v); },
      [](double g, double, double y) { return g * (1.0 - y * y); });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double g, double, double y) { return g * y * (1.0 - y); });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
  return unary_op(
      x,
      [](double v) {
        return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
      },
      [](double g, double v, double) {
        const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        return g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() != 2) {
    throw std::invalid_argument("layer_norm: input must be rank-2, got " +
                                shape_str(x.shape()));
  }
  const std::size_t l = x.rows(), t = x.cols();
  if (gain.rank() != 1 || gain.numel() != t || bias.rank() != 1 || bias.numel() != t) {
    throw std::invalid_argument("layer_norm: gain/bias must be rank-1 of length " +
                                std::to_string(t));
  }
  Tensor out = make_output(x.shape());
  // keep the normalized rows and inverse stddevs for the backward pass
  auto norm = std::make_shared<std::vector<double>>(l * t);
  auto inv_std = std::make_shared<std::vector<double>>(l);
  const double* in = x.data().data();
  const double* g = gain.data().data();
  const double* b = bias.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < l; ++i) {
    const double* row = in + i * t;
    double mean = 0.0;
    for (std::size_t j = 0; j < t; ++j) mean += row[j];
    mean /= static_cast<double>(t);
    double var = 0.0;
    for (std::size_t j = 0; j < t; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(t);
    const double istd = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = istd;
    for (std::size_t j = 0; j < t; ++j) {
      const double y = (row[j] - mean) * istd;
      (*norm)[i * t + j] = y;
      po[i * t + j] = y * g[j] + b[j];
    }
  }
  if (Tape::active() && (x.tracked() || gain.tracked() || bias.tracked())) {
    mark_and_record(out, [xi = x.impl(), gi = gain.impl(), bi = bias.impl(),
                          oi = out.impl(), norm, inv_std, l, t]() {
      const double* dout = oi->grad.data();
      const double* y = norm->data();
      if (gi->tracked || gi->requires_grad) {
        gi->ensure_grad();
        for (std::size_t j = 0; j < t; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < l; ++i) acc += dout[i * t + j] * y[i * t + j];
          gi->grad[j] += acc;
        }
      }
      if (bi->tracked || bi->requires_grad) {
        bi->ensure_grad();
        for (std::size_t j = 0; j < t; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < l; ++i) acc += dout[i * t + j];
          bi->grad[j] += acc;
        }
      }
      if (xi->tracked || xi->requires_grad) {
        xi->ensure_grad();
        const double* g = gi->data.data();
        for (std::size_t i = 0; i < l; ++i) {
          double mean_dy = 0.0, mean_dyy = 0.0;
          for (std::size_t j = 0; j < t; ++j) {
            const double dy = dout[i * t + j] * g[j];
            mean_dy += dy;
            mean_dyy += dy * y[i * t + j];
          }
          mean_dy /= static_cast<double>(t);
          mean_dyy /= static_cast<double>(t);
          const double istd = (*inv_std)[i];
          for (std::size_t j = 0; j < t; ++j) {
            const double dy = dout[i * t + j] * g[j];
            xi->grad[i * t + j] += istd * (dy - mean_dy - y[i * t + j] * mean_dyy);
          }
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  Tensor lg = logits;
  if (lg.rank() == 1) lg = reshape(logits, {1, logits.numel()});
  if (lg.rank() != 2) {
    throw std::invalid_argument("cross_entropy: logits must be rank-1 or rank-2");
  }
  const std::size_t batch = lg.rows(), classes = lg.cols();
  if (labels.size() != batch) {
    throw std::invalid_argument("cross_entropy: got " + std::to_string(labels.size()) +
                                " labels for batch " + std::to_string(batch));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                  " out of range [0, " + std::to_string(classes) + ")");
    }
  }
  auto probs = std::make_shared<std::vector<double>>(batch * classes);
  const double* in = lg.data().data();
  double loss_value = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double* row = in + i * classes;
    double mx = row[0];
    for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      const double e = std::exp(row[j] - mx);
      (*probs)[i * classes + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < classes; ++j) (*probs)[i * classes + j] /= total;
    loss_value -= std::log(std::max((*probs)[i * classes + labels[i]], 1e-12));
  }
  loss_value /= static_cast<double>(batch);
  Tensor out = Tensor::scalar(loss_value);
  if (should_record(lg)) {
    std::vector<int> ys(labels.begin(), labels.end());
    out.impl()->tracked = true;
    Tape::active()->record(out.impl(), [li = lg.impl(), oi = out.impl(), probs,
                                        ys = std::move(ys), batch, classes]() {
      if (!(li->tracked || li->requires_grad)) return;
      li->ensure_grad();
      const double g = oi->grad[0] / static_cast<double>(batch);
      for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t j = 0; j < classes; ++j) {
          double d = (*probs)[i * classes + j];
          if (static_cast<std::size_t>(ys[i]) == j) d -= 1.0;
          li->grad[i * classes + j] += g * d;
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double total = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  Tensor out = Tensor::scalar(total);
  if (should_record(x)) {
    mark_and_record(out, [xi = x.impl(), oi = out.impl()]() {
      if (!(xi->tracked || xi->requires_grad)) return;
      xi->ensure_grad();
      const double g = oi->grad[0];
      for (double& v : xi->grad) v += g;
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) {
    throw std::invalid_argument("gather_rows: table must be rank-2");
  }
  const std::size_t v = table.rows(), d = table.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw std::invalid_argument("gather_rows: id " + std::to_string(id) +
                                  " out of range [0, " + std::to_string(v) + ")");
    }
  }
  Tensor out = make_output({ids.size(), d});
  const double* in = table.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy(in + ids[i] * d, in + (ids[i] + 1) * d, po + i * d);
  }
  if (should_record(table)) {
    std::vector<int> idv(ids.begin(), ids.end());
    mark_and_record(out, [ti = table.impl(), oi = out.impl(), idv = std::move(idv), d]() {
      if (!(ti->tracked || ti->requires_grad)) return;
      ti->ensure_grad();
      for (std::size_t i = 0; i < idv.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j)
          ti->grad[idv[i] * d + j] += oi->grad[i * d + j];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " cannot become " +
                                shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (should_record(x)) {
    mark_and_record(out, [xi = x.impl(), oi = out.impl()]() {
      if (!(xi->tracked || xi->requires_grad)) return;
      xi->ensure_grad();
      for (std::size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

double grad_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params,
                  double eps) {
  for (Tensor& p : params) p.zero_grad();
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = loss_fn();
    // A loss that never touched the tape (a constant) has all-zero gradients.
    if (loss.impl()->tracked) tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor& p : params) {
    analytic.emplace_back(p.grad().begin(), p.grad().end());
    if (analytic.back().empty()) analytic.back().assign(p.numel(), 0.0);
  }
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    std::span<double> data = params[pi].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = loss_fn().item();
      data[i] = saved - eps;
      const double down = loss_fn().item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double err = std::abs(a - numeric) /
                         std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

bool all_finite(const Tensor& x) {
  for (double v : x.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace scenafuse
