#include "zslmetric/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace zslmetric {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("zero extent in shape " + shape_str(shape));
  }
  st_ = std::make_shared<detail::Storage>();
  st_->shape = std::move(shape);
  st_->values = std::move(values);
}

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> v(shape_numel(shape), 0.0);
  return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::full(Shape shape, double x) {
  std::vector<double> v(shape_numel(shape), x);
  return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::param(Shape shape, std::vector<double> values) {
  Tensor t(std::move(shape), std::move(values));
  t.st_->tracked = true;
  return t;
}

double Tensor::value() const {
  if (!st_ || st_->values.size() != 1) {
    throw ContractError("value() requires a scalar tensor, got shape " +
                        (st_ ? shape_str(st_->shape) : std::string("<empty>")));
  }
  return st_->values[0];
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient buffer");
  return st_->grad;
}

Tensor Tensor::clone_values() const {
  return Tensor(st_->shape, st_->values);
}

// ---- tape ------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }
Tape* active_tape() { return g_active_tape; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward requires a scalar loss");
  }
  const auto root = loss.storage();
  bool produced_here = false;
  for (const auto& r : records_) {
    if (r.output == root) {
      produced_here = true;
      break;
    }
  }
  if (!produced_here) {
    throw ContractError("backward loss was not produced on this tape");
  }
  // Fresh zeroed gradient buffers for every tracked storage the tape touches.
  for (auto& r : records_) {
    for (auto& in : r.inputs) {
      if (in->tracked) in->grad.assign(in->values.size(), 0.0);
    }
    if (r.output->tracked) r.output->grad.assign(r.output->values.size(), 0.0);
  }
  root->grad.assign(1, 1.0);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    it->pull();
  }
}

// ---- op plumbing -----------------------------------------------------------

struct OpBuilder {
  // Builds the result tensor; records the pull closure when a tape is active
  // and at least one input is tracked. The closure sees grads already
  // allocated and zeroed by Tape::backward.
  static Tensor make_multi(const char* name, Shape out_shape,
                           std::vector<double> out_values,
                           const std::vector<Tensor>& inputs,
                           std::function<void(detail::Storage& out)> pull) {
    for (double v : out_values) {
      if (!std::isfinite(v)) {
        throw DomainError(std::string(name) + " produced a non-finite value");
      }
    }
    Tensor out(std::move(out_shape), std::move(out_values));
    Tape* tape = g_active_tape;
    bool any_tracked = false;
    for (const auto& t : inputs) any_tracked = any_tracked || t.tracked();
    if (tape != nullptr && any_tracked) {
      out.st_->tracked = true;
      Tape::Record rec;
      for (const auto& t : inputs) rec.inputs.push_back(t.st_);
      rec.output = out.st_;
      auto out_st = out.st_;
      rec.pull = [pull = std::move(pull), out_st]() { pull(*out_st); };
      tape->records_.push_back(std::move(rec));
    }
    return out;
  }

  static Tensor make(const char* name, Shape out_shape,
                     std::vector<double> out_values,
                     std::initializer_list<Tensor> inputs,
                     std::function<void(detail::Storage& out)> pull) {
    return make_multi(name, std::move(out_shape), std::move(out_values),
                      std::vector<Tensor>(inputs), std::move(pull));
  }
};

namespace {

void require_defined(const Tensor& t, const char* who) {
  if (!t.defined()) throw ContractError(std::string(who) + ": undefined tensor operand");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(who) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

// dst.grad += coeffs applied elementwise; helper for tracked inputs only.
inline void axpy(std::vector<double>& dst, const double* g, std::size_t n, double scale) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += scale * g[i];
}

Tensor elementwise_binary(const char* name, const Tensor& a, const Tensor& b,
                          double (*fwd)(double, double),
                          void (*pull_fn)(const detail::Storage&, detail::Storage&, detail::Storage&)) {
  require_defined(a, name);
  require_defined(b, name);
  require_same_shape(a, b, name);
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  auto sa = a.storage(), sb = b.storage();
  return OpBuilder::make(name, a.shape(), std::move(out), {a, b},
                         [sa, sb, pull_fn](detail::Storage& o) { pull_fn(o, *sa, *sb); });
}

}  // namespace

// ---- arithmetic ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](const detail::Storage& o, detail::Storage& sa, detail::Storage& sb) {
        if (sa.tracked) axpy(sa.grad, o.grad.data(), o.grad.size(), 1.0);
        if (sb.tracked) axpy(sb.grad, o.grad.data(), o.grad.size(), 1.0);
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](const detail::Storage& o, detail::Storage& sa, detail::Storage& sb) {
        if (sa.tracked) axpy(sa.grad, o.grad.data(), o.grad.size(), 1.0);
        if (sb.tracked) axpy(sb.grad, o.grad.data(), o.grad.size(), -1.0);
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto sa = a.storage(), sb = b.storage();
  return OpBuilder::make("mul", a.shape(), std::move(out), {a, b},
                         [sa, sb](detail::Storage& o) {
                           const auto& g = o.grad;
                           if (sa->tracked)
                             for (std::size_t i = 0; i < g.size(); ++i)
                               sa->grad[i] += g[i] * sb->values[i];
                           if (sb->tracked)
                             for (std::size_t i = 0; i < g.size(); ++i)
                               sb->grad[i] += g[i] * sa->values[i];
                         });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_defined(a, "div");
  require_defined(b, "div");
  require_same_shape(a, b, "div");
  auto av = a.values(), bv = b.values();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (bv[i] == 0.0) throw DomainError("div: division by zero at index " + std::to_string(i));
    out[i] = av[i] / bv[i];
  }
  auto sa = a.storage(), sb = b.storage();
  return OpBuilder::make("div", a.shape(), std::move(out), {a, b},
                         [sa, sb](detail::Storage& o) {
                           const auto& g = o.grad;
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             const double inv = 1.0 / sb->values[i];
                             if (sa->tracked) sa->grad[i] += g[i] * inv;
                             if (sb->tracked)
                               sb->grad[i] -= g[i] * sa->values[i] * inv * inv;
                           }
                         });
}

Tensor add_scalar(const Tensor& a, double s) {
  require_defined(a, "add_scalar");
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v += s;
  auto sa = a.storage();
  return OpBuilder::make("add_scalar", a.shape(), std::move(out), {a},
                         [sa](detail::Storage& o) {
                           if (sa->tracked) axpy(sa->grad, o.grad.data(), o.grad.size(), 1.0);
                         });
}

Tensor mul_scalar(const Tensor& a, double s) {
  require_defined(a, "mul_scalar");
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= s;
  auto sa = a.storage();
  return OpBuilder::make("mul_scalar", a.shape(), std::move(out), {a},
                         [sa, s](detail::Storage& o) {
                           if (sa->tracked) axpy(sa->grad, o.grad.data(), o.grad.size(), s);
                         });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

// ---- matmul ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (a.ndim() == 2 && b.ndim() == 2) {
    if (as[1] != bs[0]) {
      throw ShapeError("matmul: inner dimensions differ, " + shape_str(as) + " x " +
                       shape_str(bs));
    }
    const std::size_t m = as[0], k = as[1], n = bs[1];
    std::vector<double> out(m * n, 0.0);
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t t = 0; t < k; ++t) {
        const double aik = av[i * k + t];
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aik * bv[t * n + j];
      }
    auto sa = a.storage(), sb = b.storage();
    return OpBuilder::make("matmul", {m, n}, std::move(out), {a, b},
                           [sa, sb, m, k, n](detail::Storage& o) {
                             const auto& g = o.grad;
                             if (sa->tracked) {
                               // dA += G B^T
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t t = 0; t < k; ++t) {
                                   double acc = 0.0;
                                   for (std::size_t j = 0; j < n; ++j)
                                     acc += g[i * n + j] * sb->values[t * n + j];
                                   sa->grad[i * k + t] += acc;
                                 }
                             }
                             if (sb->tracked) {
                               // dB += A^T G
                               for (std::size_t t = 0; t < k; ++t)
                                 for (std::size_t j = 0; j < n; ++j) {
                                   double acc = 0.0;
                                   for (std::size_t i = 0; i < m; ++i)
                                     acc += sa->values[i * k + t] * g[i * n + j];
                                   sb->grad[t * n + j] += acc;
                                 }
                             }
                           });
  }
  if (a.ndim() == 2 && b.ndim() == 1) {
    if (as[1] != bs[0]) {
      throw ShapeError("matmul: inner dimensions differ, " + shape_str(as) + " x " +
                       shape_str(bs));
    }
    const std::size_t m = as[0], k = as[1];
    std::vector<double> out(m, 0.0);
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += av[i * k + t] * bv[t];
      out[i] = acc;
    }
    auto sa = a.storage(), sb = b.storage();
    return OpBuilder::make("matmul", {m}, std::move(out), {a, b},
                           [sa, sb, m, k](detail::Storage& o) {
                             const auto& g = o.grad;
                             if (sa->tracked)
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t t = 0; t < k; ++t)
                                   sa->grad[i * k + t] += g[i] * sb->values[t];
                             if (sb->tracked)
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t t = 0; t < k; ++t)
                                   sb->grad[t] += sa->values[i * k + t] * g[i];
                           });
  }
  if (a.ndim() == 1 && b.ndim() == 2) {
    if (as[0] != bs[0]) {
      throw ShapeError("matmul: inner dimensions differ, " + shape_str(as) + " x " +
                       shape_str(bs));
    }
    const std::size_t k = bs[0], n = bs[1];
    std::vector<double> out(n, 0.0);
    auto av = a.values(), bv = b.values();
    for (std::size_t t = 0; t < k; ++t) {
      const double at = av[t];
      if (at == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[j] += at * bv[t * n + j];
    }
    auto sa = a.storage(), sb = b.storage();
    return OpBuilder::make("matmul", {n}, std::move(out), {a, b},
                           [sa, sb, k, n](detail::Storage& o) {
                             const auto& g = o.grad;
                             if (sa->tracked)
                               for (std::size_t t = 0; t < k; ++t) {
                                 double acc = 0.0;
                                 for (std::size_t j = 0; j < n; ++j)
                                   acc += sb->values[t * n + j] * g[j];
                                 sa->grad[t] += acc;
                               }
                             if (sb->tracked)
                               for (std::size_t t = 0; t < k; ++t)
                                 for (std::size_t j = 0; j < n; ++j)
                                   sb->grad[t * n + j] += sa->values[t] * g[j];
                           });
  }
  throw ShapeError("matmul: unsupported ranks " + shape_str(as) + " x " + shape_str(bs));
}

// ---- elementwise nonlinearities ---------------------------------------------

namespace {

Tensor unary_with_out(const char* name, const Tensor& x,
                      std::vector<double> out,
                      // dy/dx evaluated from (x value, y value)
                      double (*deriv)(double, double)) {
  auto sx = x.storage();
  return OpBuilder::make(name, x.shape(), std::move(out), {x},
                         [sx, deriv](detail::Storage& o) {
                           if (!sx->tracked) return;
                           for (std::size_t i = 0; i < o.grad.size(); ++i)
                             sx->grad[i] += o.grad[i] * deriv(sx->values[i], o.values[i]);
                         });
}

}  // namespace

Tensor relu(const Tensor& x) {
  require_defined(x, "relu");
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return unary_with_out("relu", x, std::move(out),
                        [](double xi, double) { return xi > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  require_defined(x, "tanh");
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  return unary_with_out("tanh", x, std::move(out),
                        [](double, double yi) { return 1.0 - yi * yi; });
}

Tensor sigmoid(const Tensor& x) {
  require_defined(x, "sigmoid");
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
  }
  return unary_with_out("sigmoid", x, std::move(out),
                        [](double, double yi) { return yi * (1.0 - yi); });
}

Tensor exp(const Tensor& x) {
  require_defined(x, "exp");
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(xv[i]);
  return unary_with_out("exp", x, std::move(out),
                        [](double, double yi) { return yi; });
}

Tensor log(const Tensor& x) {
  require_defined(x, "log");
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (xv[i] <= 0.0) {
      throw DomainError("log: nonpositive argument " + std::to_string(xv[i]) +
                        " at index " + std::to_string(i));
    }
    out[i] = std::log(xv[i]);
  }
  return unary_with_out("log", x, std::move(out),
                        [](double xi, double) { return 1.0 / xi; });
}

Tensor sqrt(const Tensor& x) {
  require_defined(x, "sqrt");
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (xv[i] < 0.0) {
      throw DomainError("sqrt: negative argument " + std::to_string(xv[i]) +
                        " at index " + std::to_string(i));
    }
    out[i] = std::sqrt(xv[i]);
  }
  return unary_with_out("sqrt", x, std::move(out),
                        [](double, double yi) { return 0.5 / yi; });
}

Tensor clamp_min(const Tensor& x, double floor) {
  require_defined(x, "clamp_min");
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] < floor ? floor : xv[i];
  auto sx = x.storage();
  return OpBuilder::make("clamp_min", x.shape(), std::move(out), {x},
                         [sx, floor](detail::Storage& o) {
                           if (!sx->tracked) return;
                           for (std::size_t i = 0; i < o.grad.size(); ++i)
                             if (sx->values[i] >= floor) sx->grad[i] += o.grad[i];
                         });
}

// ---- reductions --------------------------------------------------------------

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  auto sx = x.storage();
  return OpBuilder::make("sum", {1}, {acc}, {x}, [sx](detail::Storage& o) {
    if (!sx->tracked) return;
    const double g = o.grad[0];
    for (double& d : sx->grad) d += g;
  });
}

Tensor mean(const Tensor& x) {
  require_defined(x, "mean");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  auto sx = x.storage();
  return OpBuilder::make("mean", {1}, {acc * inv}, {x}, [sx, inv](detail::Storage& o) {
    if (!sx->tracked) return;
    const double g = o.grad[0] * inv;
    for (double& d : sx->grad) d += g;
  });
}

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  require_defined(x, "sum_axis");
  const auto& s = x.shape();
  if (axis >= s.size()) {
    throw ShapeError("sum_axis: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(outer * inner, 0.0);
  auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t i = 0; i < inner; ++i)
        out[o * inner + i] += xv[(o * n + a) * inner + i];
  auto sx = x.storage();
  return OpBuilder::make("sum_axis", std::move(out_shape), std::move(out), {x},
                         [sx, outer, n, inner](detail::Storage& og) {
                           if (!sx->tracked) return;
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t a = 0; a < n; ++a)
                               for (std::size_t i = 0; i < inner; ++i)
                                 sx->grad[(o * n + a) * inner + i] += og.grad[o * inner + i];
                         });
}

Tensor squared_norm(const Tensor& x) {
  require_defined(x, "squared_norm");
  double acc = 0.0;
  for (double v : x.values()) acc += v * v;
  auto sx = x.storage();
  return OpBuilder::make("squared_norm", {1}, {acc}, {x}, [sx](detail::Storage& o) {
    if (!sx->tracked) return;
    const double g = 2.0 * o.grad[0];
    for (std::size_t i = 0; i < sx->grad.size(); ++i) sx->grad[i] += g * sx->values[i];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_defined(a, "dot");
  require_defined(b, "dot");
  if (a.ndim() != 1 || b.ndim() != 1 || a.size() != b.size()) {
    throw ShapeError("dot: requires equal-length vectors, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  double acc = 0.0;
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  auto sa = a.storage(), sb = b.storage();
  return OpBuilder::make("dot", {1}, {acc}, {a, b}, [sa, sb](detail::Storage& o) {
    const double g = o.grad[0];
    if (sa->tracked)
      for (std::size_t i = 0; i < sa->grad.size(); ++i) sa->grad[i] += g * sb->values[i];
    if (sb->tracked)
      for (std::size_t i = 0; i < sb->grad.size(); ++i) sb->grad[i] += g * sa->values[i];
  });
}

Tensor l2_normalize(const Tensor& x) {
  require_defined(x, "l2_normalize");
  if (x.ndim() != 1 && x.ndim() != 2) {
    throw ShapeError("l2_normalize: expects 1-D or 2-D, got " + shape_str(x.shape()));
  }
  const std::size_t rows = x.ndim() == 2 ? x.shape()[0] : 1;
  const std::size_t cols = x.ndim() == 2 ? x.shape()[1] : x.shape()[0];
  auto xv = x.values();
  std::vector<double> out(x.size());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += xv[r * cols + c] * xv[r * cols + c];
    const double nrm = std::sqrt(acc);
    if (nrm == 0.0) {
      throw DomainError("l2_normalize: zero-norm row " + std::to_string(r));
    }
    norms[r] = nrm;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] / nrm;
  }
  auto sx = x.storage();
  return OpBuilder::make("l2_normalize", x.shape(), std::move(out), {x},
                         [sx, rows, cols, norms](detail::Storage& o) {
                           if (!sx->tracked) return;
                           // d(x/||x||) pull: (g - (g.y) y) / ||x|| per row
                           for (std::size_t r = 0; r < rows; ++r) {
                             double gy = 0.0;
                             for (std::size_t c = 0; c < cols; ++c)
                               gy += o.grad[r * cols + c] * o.values[r * cols + c];
                             const double inv = 1.0 / norms[r];
                             for (std::size_t c = 0; c < cols; ++c)
                               sx->grad[r * cols + c] +=
                                   (o.grad[r * cols + c] - gy * o.values[r * cols + c]) * inv;
                           }
                         });
}

// ---- structural ops ----------------------------------------------------------

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no operands");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(first));
  }
  std::size_t axis_total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != first.size()) {
      throw ShapeError("concat: rank mismatch " + shape_str(first) + " vs " +
                       shape_str(p.shape()));
    }
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p.shape()[d] != first[d]) {
        throw ShapeError("concat: non-axis extent mismatch " + shape_str(first) + " vs " +
                         shape_str(p.shape()));
      }
    }
    axis_total += p.shape()[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = axis_total;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;  // along axis
  std::vector<std::size_t> offsets(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) {
    offsets[p] = offset;
    const std::size_t len = parts[p].shape()[axis];
    auto pv = parts[p].values();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t a = 0; a < len; ++a)
        for (std::size_t i = 0; i < inner; ++i)
          out[(o * axis_total + offset + a) * inner + i] = pv[(o * len + a) * inner + i];
    offset += len;
  }

  std::vector<std::shared_ptr<detail::Storage>> stores;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    stores.push_back(p.storage());
    lens.push_back(p.shape()[axis]);
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return OpBuilder::make_multi(
      "concat", std::move(out_shape), std::move(out), inputs,
      [stores = std::move(stores), lens = std::move(lens), offsets = std::move(offsets),
       outer, inner, axis_total](detail::Storage& o) {
        for (std::size_t p = 0; p < stores.size(); ++p) {
          if (!stores[p]->tracked) continue;
          const std::size_t len = lens[p];
          for (std::size_t ot = 0; ot < outer; ++ot)
            for (std::size_t a = 0; a < len; ++a)
              for (std::size_t i = 0; i < inner; ++i)
                stores[p]->grad[(ot * len + a) * inner + i] +=
                    o.grad[(ot * axis_total + offsets[p] + a) * inner + i];
        }
      });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  auto sx = x.storage();
  return OpBuilder::make("reshape", std::move(shape), std::move(out), {x},
                         [sx](detail::Storage& o) {
                           if (!sx->tracked) return;
                           axpy(sx->grad, o.grad.data(), o.grad.size(), 1.0);
                         });
}

Tensor transpose(const Tensor& x) {
  require_defined(x, "transpose");
  if (x.ndim() != 2) throw ShapeError("transpose: expects 2-D, got " + shape_str(x.shape()));
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  auto sx = x.storage();
  return OpBuilder::make("transpose", {c, r}, std::move(out), {x},
                         [sx, r, c](detail::Storage& o) {
                           if (!sx->tracked) return;
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j)
                               sx->grad[i * c + j] += o.grad[j * r + i];
                         });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_defined(x, "gather_rows");
  if (x.ndim() != 2) throw ShapeError("gather_rows: expects 2-D, got " + shape_str(x.shape()));
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  for (std::size_t r : rows) {
    if (r >= n) {
      throw ContractError("gather_rows: row " + std::to_string(r) + " out of range [0," +
                          std::to_string(n) + ")");
    }
  }
  std::vector<double> out(rows.size() * d);
  auto xv = x.values();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(xv.data() + rows[i] * d, d, out.data() + i * d);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  auto sx = x.storage();
  return OpBuilder::make("gather_rows", {rows.size(), d}, std::move(out), {x},
                         [sx, idx = std::move(idx), d](detail::Storage& o) {
                           if (!sx->tracked) return;
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             for (std::size_t j = 0; j < d; ++j)
                               sx->grad[idx[i] * d + j] += o.grad[i * d + j];
                         });
}

Tensor add_rowwise(const Tensor& m, const Tensor& v) {
  require_defined(m, "add_rowwise");
  require_defined(v, "add_rowwise");
  if (m.ndim() != 2 || v.ndim() != 1 || m.shape()[1] != v.shape()[0]) {
    throw ShapeError("add_rowwise: expects (r,c) + (c,), got " + shape_str(m.shape()) +
                     " and " + shape_str(v.shape()));
  }
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  std::vector<double> out(m.size());
  auto mv = m.values(), vv = v.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = mv[i * c + j] + vv[j];
  auto sm = m.storage(), sv = v.storage();
  return OpBuilder::make("add_rowwise", m.shape(), std::move(out), {m, v},
                         [sm, sv, r, c](detail::Storage& o) {
                           if (sm->tracked) axpy(sm->grad, o.grad.data(), o.grad.size(), 1.0);
                           if (sv->tracked)
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < c; ++j)
                                 sv->grad[j] += o.grad[i * c + j];
                         });
}

// ---- softmax / dropout / grad_reverse ----------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "softmax");
  const auto& s = x.shape();
  if (axis >= s.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      double mx = xv[(o * n) * inner + i];
      for (std::size_t a = 1; a < n; ++a)
        mx = std::max(mx, xv[(o * n + a) * inner + i]);
      double denom = 0.0;
      for (std::size_t a = 0; a < n; ++a) {
        const double e = std::exp(xv[(o * n + a) * inner + i] - mx);
        out[(o * n + a) * inner + i] = e;
        denom += e;
      }
      for (std::size_t a = 0; a < n; ++a) out[(o * n + a) * inner + i] /= denom;
    }
  }
  auto sx = x.storage();
  return OpBuilder::make("softmax", x.shape(), std::move(out), {x},
                         [sx, outer, n, inner](detail::Storage& o) {
                           if (!sx->tracked) return;
                           // dx = y * (g - sum(g*y)) per slice
                           for (std::size_t ot = 0; ot < outer; ++ot)
                             for (std::size_t i = 0; i < inner; ++i) {
                               double gy = 0.0;
                               for (std::size_t a = 0; a < n; ++a) {
                                 const std::size_t k = (ot * n + a) * inner + i;
                                 gy += o.grad[k] * o.values[k];
                               }
                               for (std::size_t a = 0; a < n; ++a) {
                                 const std::size_t k = (ot * n + a) * inner + i;
                                 sx->grad[k] += o.values[k] * (o.grad[k] - gy);
                               }
                             }
                         });
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  require_defined(x, "dropout");
  if (rate < 0.0 || rate >= 1.0) {
    throw ParamError("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) {
    // Identity; still differentiable so graphs are mode-independent.
    return mul_scalar(x, 1.0);
  }
  const double scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : scale;
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  auto sx = x.storage();
  return OpBuilder::make("dropout", x.shape(), std::move(out), {x},
                         [sx, mask = std::move(mask)](detail::Storage& o) {
                           if (!sx->tracked) return;
                           for (std::size_t i = 0; i < o.grad.size(); ++i)
                             sx->grad[i] += o.grad[i] * mask[i];
                         });
}

Tensor grad_reverse(const Tensor& x, double lambda) {
  require_defined(x, "grad_reverse");
  std::vector<double> out(x.values().begin(), x.values().end());
  auto sx = x.storage();
  return OpBuilder::make("grad_reverse", x.shape(), std::move(out), {x},
                         [sx, lambda](detail::Storage& o) {
                           if (!sx->tracked) return;
                           for (std::size_t i = 0; i < o.grad.size(); ++i)
                             sx->grad[i] += -lambda * o.grad[i];
                         });
}

// ---- grad_check ----------------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps) {
  // Analytic gradient via a private tape. A loss that never touched the
  // probe leaf (constant function) has an all-zero gradient.
  std::vector<double> analytic(x.size(), 0.0);
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor xt = Tensor::param(x.shape(), {x.values().begin(), x.values().end()});
    Tensor loss = f(xt);
    if (loss.size() != 1) throw ContractError("grad_check: f must return a scalar");
    if (loss.tracked()) {
      tape.backward(loss);
      if (xt.has_grad()) {
        auto g = xt.grad();
        std::copy(g.begin(), g.end(), analytic.begin());
      }
    }
  }
  // Central differences. A throwaway tape per evaluation keeps recordings
  // from leaking onto any tape active at the call site.
  double worst = 0.0;
  std::vector<double> base(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> vp = base, vm = base;
    vp[i] += eps;
    vm[i] -= eps;
    double fp, fm;
    {
      Tape scratch;
      TapeScope ss(scratch);
      fp = f(Tensor(x.shape(), vp)).value();
      scratch.clear();
      fm = f(Tensor(x.shape(), vm)).value();
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) /
                       std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace zslmetric
