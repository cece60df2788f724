#ifndef ZSLMETRIC_TENSOR_HPP
#define ZSLMETRIC_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "zslmetric/errors.hpp"
#include "zslmetric/rng.hpp"

namespace zslmetric {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

class Tape;

namespace detail {
struct Storage {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // sized only during/after backward
  bool tracked = false;
};
}  // namespace detail

/// Dense tensor of 64-bit reals in row-major order. Copies share storage;
/// a tensor with tracked=true participates in gradient recording whenever
/// a tape is active.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);
  /// Tracked leaf (a trainable parameter or a differentiation root).
  static Tensor param(Shape shape, std::vector<double> values);

  bool defined() const { return st_ != nullptr; }
  const Shape& shape() const { return st_->shape; }
  std::size_t ndim() const { return st_->shape.size(); }
  std::size_t size() const { return st_->values.size(); }
  bool tracked() const { return st_ && st_->tracked; }
  void set_tracked(bool t) { st_->tracked = t; }

  std::span<const double> values() const { return st_->values; }
  /// In-place mutation hook for optimizers; never call mid-tape.
  std::vector<double>& mutable_values() { return st_->values; }

  double at(std::size_t flat) const { return st_->values[flat]; }
  /// Scalar payload; ContractError when size != 1.
  double value() const;

  bool has_grad() const { return st_ && !st_->grad.empty(); }
  std::span<const double> grad() const;

  /// Deep copy with fresh untracked storage.
  Tensor clone_values() const;

  std::shared_ptr<detail::Storage> storage() const { return st_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Storage> st) : st_(std::move(st)) {}
  std::shared_ptr<detail::Storage> st_;
  friend class Tape;
  friend struct OpBuilder;
};

/// Ordered record of executed differentiable operations. One tape per
/// training step; backward replays records in exact reverse order and
/// clear() drops every held reference.
class Tape {
 public:
  Tape() = default;
  ~Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Accumulates d(loss)/d(leaf) into every tracked tensor reachable from
  /// loss. loss must be a scalar produced on this tape.
  void backward(const Tensor& loss);

  void clear() { records_.clear(); }
  std::size_t op_count() const { return records_.size(); }

 private:
  struct Record {
    std::vector<std::shared_ptr<detail::Storage>> inputs;
    std::shared_ptr<detail::Storage> output;
    std::function<void()> pull;  // adds into input grads from output grad
  };
  std::vector<Record> records_;
  friend struct OpBuilder;
};

/// RAII activation of a tape for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

Tape* active_tape();

// ---- forward suite -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor clamp_min(const Tensor& x, double floor);

Tensor sum(const Tensor& x);                       // full reduction -> scalar
Tensor mean(const Tensor& x);                      // full reduction -> scalar
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor squared_norm(const Tensor& x);              // sum of squares -> scalar
Tensor dot(const Tensor& a, const Tensor& b);      // 1-D x 1-D -> scalar

/// 1-D: x / ||x||. 2-D: each row normalized independently.
Tensor l2_normalize(const Tensor& x);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);                 // 2-D
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
/// m + 1 v^T (bias-style row broadcast; the only non-scalar broadcast).
Tensor add_rowwise(const Tensor& m, const Tensor& v);

/// Numerically stable softmax along the given axis; slices sum to 1.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Training: zeroes each element with probability rate, scales survivors
/// by 1/(1-rate). Inference: identity. rate must lie in [0, 1).
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

/// Identity forward; backward multiplies the upstream gradient by -lambda.
Tensor grad_reverse(const Tensor& x, double lambda);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return add_scalar(neg(a), s); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

/// Central finite-difference check of a scalar-valued function at x.
/// Returns max over coordinates of
/// |analytic - numeric| / max(1, |analytic|).
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double eps = 1e-6);

}  // namespace zslmetric

#endif  // ZSLMETRIC_TENSOR_HPP
