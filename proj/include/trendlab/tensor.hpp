#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace trendlab {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_size(const Shape& s);

class Tensor;

namespace detail {

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until the backward pass touches it
  bool requires_grad = false;
};

// Internal factory for op results; skips the finiteness scan of Tensor::from.
Tensor make_tensor(Shape shape, std::vector<double> values);

}  // namespace detail

/// Dense n-dimensional array of doubles, row-major. Cheap to copy (shared
/// storage). Values are immutable once created except through the explicit
/// mutable accessors used by optimizers; gradient buffers are the only state
/// written during a backward pass.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  /// Validates that every value is finite.
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return p_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  const std::vector<double>& values() const;
  std::vector<double>& mutable_values();  // parameter updates only
  double value() const;                   // scalar convenience

  double operator()(std::size_t i) const { return values()[i]; }
  double operator()(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  void set_requires_grad(bool rg);

  /// Gradient accumulated by the most recent backward pass; all zeros for
  /// tensors the loss never reached.
  const std::vector<double>& grad() const;
  void zero_grad();

  std::shared_ptr<detail::TensorData> impl() const { return p_; }

 private:
  friend Tensor detail::make_tensor(Shape, std::vector<double>);
  explicit Tensor(std::shared_ptr<detail::TensorData> p) : p_(std::move(p)) {}
  std::shared_ptr<detail::TensorData> p_;
};

/// Ordered record of differentiable operations. One training step runs on one
/// tape; the tape is bound to the current thread via TapeScope, so distinct
/// threads may run distinct tapes concurrently.
class Tape {
 public:
  void record(std::function<void()> backward_step);
  /// Seeds d(loss)/d(loss) = 1 and replays the recorded steps in reverse,
  /// accumulating into every reachable requires_grad tensor.
  void backward(const Tensor& loss);
  std::size_t node_count() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

/// Convenience: backward on the thread's active tape.
void backward(const Tensor& loss);

// --- elementwise operations (binary ops broadcast only by leading-1
//     expansion: the smaller operand, left-padded with 1s, must differ from
//     the larger in a leading prefix of axes only) ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // DomainError on any nonpositive element
Tensor abs(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

// --- linear algebra ---
/// [m×k]·[k×n] -> [m×n]; also [m×k]·[k] -> [m] and [k]·[k×n] -> [n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);                 // rank-2
Tensor outer(const Tensor& a, const Tensor& b);    // [m],[n] -> [m×n]
/// Scales row k of x by a[k]; x [T×C], a [T].
Tensor scale_rows(const Tensor& x, const Tensor& a);

// --- structural ---
Tensor reshape(const Tensor& x, Shape shape);      // same element count
Tensor row(const Tensor& x, std::size_t i);        // [N×C] -> [C]
Tensor stack_rows(const std::vector<Tensor>& rows);  // T×[C] -> [T×C]

// --- reductions ---
Tensor sum(const Tensor& x);       // -> scalar [1]
Tensor sum_rows(const Tensor& x);  // [N×C] -> [N]

/// Numerically stable softmax over a rank-1 tensor (max subtraction).
Tensor softmax(const Tensor& x);

bool all_finite(const Tensor& x);
bool grad_all_finite(const Tensor& x);

}  // namespace trendlab
