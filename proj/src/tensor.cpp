#include "trendlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "trendlab/errors.hpp"

namespace trendlab {

namespace {

thread_local Tape* g_active_tape = nullptr;

void ensure_grad(detail::TensorData& t) {
  if (t.grad.empty()) t.grad.assign(t.values.size(), 0.0);
}

using Impl = std::shared_ptr<detail::TensorData>;

// Broadcast by leading-1 expansion: the smaller operand, left-padded with 1s,
// must be all-1 on a leading prefix and match the larger exactly on the rest.
// That guarantees the smaller tensor tiles contiguously (index % size).
bool leading1_compatible(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  const std::size_t pad = big.size() - small.size();
  std::size_t first_match = 0;  // first axis (in big coords) where they match
  for (std::size_t i = 0; i < big.size(); ++i) {
    const std::size_t s = i < pad ? 1 : small[i - pad];
    if (s == big[i]) continue;
    if (s != 1) return false;
    first_match = i + 1;  // mismatch: must stay in the leading prefix
  }
  // every axis >= first_match matched; mismatches were a prefix by scan order
  for (std::size_t i = first_match; i < big.size(); ++i) {
    const std::size_t s = i < pad ? 1 : small[i - pad];
    if (s != big[i]) return false;
  }
  return true;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

// --- Tensor ---

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto p = std::make_shared<detail::TensorData>();
  p->values.assign(shape_size(shape), 0.0);
  p->shape = std::move(shape);
  p->requires_grad = requires_grad;
  return Tensor(std::move(p));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  std::fill(t.p_->values.begin(), t.p_->values.end(), value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_size(shape) != values.size())
    throw DimensionError("tensor literal: shape " + shape_str(shape) +
                         " holds " + std::to_string(shape_size(shape)) +
                         " elements, got " + std::to_string(values.size()));
  for (double v : values)
    if (!std::isfinite(v))
      throw DomainError("tensor literal contains a non-finite value");
  auto p = std::make_shared<detail::TensorData>();
  p->shape = std::move(shape);
  p->values = std::move(values);
  p->requires_grad = requires_grad;
  return Tensor(std::move(p));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!p_) throw ContractError("use of an undefined tensor");
  return p_->shape;
}

std::size_t Tensor::size() const { return p_ ? p_->values.size() : 0; }

const std::vector<double>& Tensor::values() const {
  if (!p_) throw ContractError("use of an undefined tensor");
  return p_->values;
}

std::vector<double>& Tensor::mutable_values() {
  if (!p_) throw ContractError("use of an undefined tensor");
  return p_->values;
}

double Tensor::value() const {
  if (size() != 1) throw ContractError("value() requires a scalar tensor, got " +
                                       shape_str(shape()));
  return p_->values[0];
}

double Tensor::operator()(std::size_t i, std::size_t j) const {
  const auto& s = shape();
  if (s.size() != 2) throw DimensionError("2-index access on " + shape_str(s));
  return p_->values[i * s[1] + j];
}

bool Tensor::requires_grad() const { return p_ && p_->requires_grad; }

void Tensor::set_requires_grad(bool rg) {
  if (!p_) throw ContractError("use of an undefined tensor");
  p_->requires_grad = rg;
}

const std::vector<double>& Tensor::grad() const {
  if (!p_) throw ContractError("use of an undefined tensor");
  ensure_grad(*p_);
  return p_->grad;
}

void Tensor::zero_grad() {
  if (p_ && !p_->grad.empty())
    std::fill(p_->grad.begin(), p_->grad.end(), 0.0);
}

// --- Tape ---

void Tape::record(std::function<void()> backward_step) {
  nodes_.push_back(std::move(backward_step));
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ContractError("backward requires a scalar loss, got " +
                        shape_str(loss.shape()));
  ensure_grad(*loss.impl());
  loss.impl()->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = prev_; }

void backward(const Tensor& loss) {
  Tape* t = active_tape();
  if (!t) throw ContractError("backward: no active tape on this thread");
  t->backward(loss);
}

// --- op helpers ---

namespace detail {

Tensor make_tensor(Shape shape, std::vector<double> values) {
  auto p = std::make_shared<detail::TensorData>();
  p->shape = std::move(shape);
  p->values = std::move(values);
  return Tensor(std::move(p));
}

}  // namespace detail

namespace {

Tensor make_result(Shape shape, std::vector<double> values) {
  return detail::make_tensor(std::move(shape), std::move(values));
}

// Records the node if a tape is active and any input participates in grads.
template <class Fn>
void maybe_record(Tensor& out, std::initializer_list<const Tensor*> inputs,
                  Fn&& fn) {
  Tape* tape = active_tape();
  if (!tape) return;
  bool any = false;
  for (const Tensor* t : inputs) any = any || t->requires_grad();
  if (!any) return;
  out.set_requires_grad(true);
  tape->record(std::forward<Fn>(fn));
}

template <class F, class DA, class DB>
Tensor binary_ew(const Tensor& a, const Tensor& b, const char* name, F f,
                 DA dfa, DB dfb) {
  const Shape &sa = a.shape(), &sb = b.shape();
  Shape out_shape;
  if (sa == sb) {
    out_shape = sa;
  } else if (leading1_compatible(sa, sb)) {
    out_shape = sb;
  } else if (leading1_compatible(sb, sa)) {
    out_shape = sa;
  } else {
    throw DimensionError(std::string(name) + ": shapes " + shape_str(sa) +
                         " and " + shape_str(sb) + " are not compatible");
  }
  const std::size_t n = shape_size(out_shape);
  const std::size_t na = a.size(), nb = b.size();
  std::vector<double> out(n);
  const auto &va = a.values(), &vb = b.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(va[i % na], vb[i % nb]);
  Tensor res = make_result(out_shape, std::move(out));
  maybe_record(res, {&a, &b}, [ia = a.impl(), ib = b.impl(), io = res.impl(),
                               dfa, dfb, n, na, nb] {
    if (io->grad.empty()) return;
    if (ia->requires_grad) {
      ensure_grad(*ia);
      for (std::size_t i = 0; i < n; ++i)
        ia->grad[i % na] +=
            dfa(ia->values[i % na], ib->values[i % nb], io->grad[i]);
    }
    if (ib->requires_grad) {
      ensure_grad(*ib);
      for (std::size_t i = 0; i < n; ++i)
        ib->grad[i % nb] +=
            dfb(ia->values[i % na], ib->values[i % nb], io->grad[i]);
    }
  });
  return res;
}

template <class F, class DF>
Tensor unary_ew(const Tensor& x, F f, DF df) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  const auto& vx = x.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(vx[i]);
  Tensor res = make_result(x.shape(), std::move(out));
  maybe_record(res, {&x}, [ix = x.impl(), io = res.impl(), df, n] {
    if (io->grad.empty() || !ix->requires_grad) return;
    ensure_grad(*ix);
    for (std::size_t i = 0; i < n; ++i)
      ix->grad[i] += df(ix->values[i], io->values[i], io->grad[i]);
  });
  return res;
}

}  // namespace

// --- elementwise ---

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_ew(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g) { return g; },
      [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_ew(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g) { return g; },
      [](double, double, double g) { return -g; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  return binary_ew(
      a, b, "hadamard", [](double x, double y) { return x * y; },
      [](double, double y, double g) { return g * y; },
      [](double x, double, double g) { return g * x; });
}

Tensor scale(const Tensor& x, double c) {
  return unary_ew(
      x, [c](double v) { return c * v; },
      [c](double, double, double g) { return c * g; });
}

Tensor tanh(const Tensor& x) {
  return unary_ew(
      x, [](double v) { return std::tanh(v); },
      [](double, double o, double g) { return g * (1.0 - o * o); });
}

Tensor sigmoid(const Tensor& x) {
  return unary_ew(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double o, double g) { return g * o * (1.0 - o); });
}

Tensor relu(const Tensor& x) {
  return unary_ew(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double, double g) { return v > 0.0 ? g : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary_ew(
      x, [](double v) { return std::exp(v); },
      [](double, double o, double g) { return g * o; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values())
    if (v <= 0.0) throw DomainError("log of nonpositive value " +
                                    std::to_string(v));
  return unary_ew(
      x, [](double v) { return std::log(v); },
      [](double v, double, double g) { return g / v; });
}

Tensor abs(const Tensor& x) {
  return unary_ew(
      x, [](double v) { return std::fabs(v); },
      [](double v, double, double g) {
        return v > 0.0 ? g : (v < 0.0 ? -g : 0.0);
      });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  return unary_ew(
      x, [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](double v, double, double g) {
        return (v >= lo && v <= hi) ? g : 0.0;
      });
}

// --- linear algebra ---

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape &sa = a.shape(), &sb = b.shape();
  if (sa.empty() || sb.empty() || sa.size() > 2 || sb.size() > 2)
    throw DimensionError("matmul: shapes " + shape_str(sa) + " and " +
                         shape_str(sb) + " must be rank 1 or 2");
  if (sa.size() == 1 && sb.size() == 1)
    throw DimensionError("matmul: two rank-1 tensors (" + shape_str(sa) +
                         ", " + shape_str(sb) + "); use hadamard+sum for dot");
  const bool a_vec = sa.size() == 1, b_vec = sb.size() == 1;
  const std::size_t m = a_vec ? 1 : sa[0];
  const std::size_t k = a_vec ? sa[0] : sa[1];
  const std::size_t k2 = b_vec ? sb[0] : sb[0];
  const std::size_t n = b_vec ? 1 : sb[1];
  if (k != k2)
    throw DimensionError("matmul: inner dimensions disagree between " +
                         shape_str(sa) + " and " + shape_str(sb));
  std::vector<double> out(m * n, 0.0);
  const auto &va = a.values(), &vb = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = va[i * k + l];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += ail * vb[l * n + j];
    }
  Shape out_shape;
  if (a_vec && !b_vec)
    out_shape = {n};
  else if (!a_vec && b_vec)
    out_shape = {m};
  else
    out_shape = {m, n};
  Tensor res = make_result(std::move(out_shape), std::move(out));
  maybe_record(res, {&a, &b},
               [ia = a.impl(), ib = b.impl(), io = res.impl(), m, n, k] {
                 if (io->grad.empty()) return;
                 const auto& g = io->grad;
                 if (ia->requires_grad) {
                   ensure_grad(*ia);  // gA = g . B^T
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t l = 0; l < k; ++l) {
                       double s = 0.0;
                       for (std::size_t j = 0; j < n; ++j)
                         s += g[i * n + j] * ib->values[l * n + j];
                       ia->grad[i * k + l] += s;
                     }
                 }
                 if (ib->requires_grad) {
                   ensure_grad(*ib);  // gB = A^T . g
                   for (std::size_t l = 0; l < k; ++l)
                     for (std::size_t i = 0; i < m; ++i) {
                       const double ail = ia->values[i * k + l];
                       for (std::size_t j = 0; j < n; ++j)
                         ib->grad[l * n + j] += ail * g[i * n + j];
                     }
                 }
               });
  return res;
}

Tensor transpose(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() != 2)
    throw DimensionError("transpose: rank-2 tensor required, got " +
                         shape_str(s));
  const std::size_t r = s[0], c = s[1];
  std::vector<double> out(r * c);
  const auto& v = x.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  Tensor res = make_result({c, r}, std::move(out));
  maybe_record(res, {&x}, [ix = x.impl(), io = res.impl(), r, c] {
    if (io->grad.empty() || !ix->requires_grad) return;
    ensure_grad(*ix);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        ix->grad[i * c + j] += io->grad[j * r + i];
  });
  return res;
}

Tensor outer(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1)
    throw DimensionError("outer: rank-1 tensors required, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t m = a.size(), n = b.size();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] = a.values()[i] * b.values()[j];
  Tensor res = make_result({m, n}, std::move(out));
  maybe_record(res, {&a, &b},
               [ia = a.impl(), ib = b.impl(), io = res.impl(), m, n] {
                 if (io->grad.empty()) return;
                 if (ia->requires_grad) {
                   ensure_grad(*ia);
                   for (std::size_t i = 0; i < m; ++i) {
                     double s = 0.0;
                     for (std::size_t j = 0; j < n; ++j)
                       s += io->grad[i * n + j] * ib->values[j];
                     ia->grad[i] += s;
                   }
                 }
                 if (ib->requires_grad) {
                   ensure_grad(*ib);
                   for (std::size_t j = 0; j < n; ++j) {
                     double s = 0.0;
                     for (std::size_t i = 0; i < m; ++i)
                       s += io->grad[i * n + j] * ia->values[i];
                     ib->grad[j] += s;
                   }
                 }
               });
  return res;
}

Tensor scale_rows(const Tensor& x, const Tensor& a) {
  const Shape& s = x.shape();
  if (s.size() != 2 || a.rank() != 1 || a.size() != s[0])
    throw DimensionError("scale_rows: need [TxC] and [T], got " +
                         shape_str(s) + " and " + shape_str(a.shape()));
  const std::size_t r = s[0], c = s[1];
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = x.values()[i * c + j] * a.values()[i];
  Tensor res = make_result(s, std::move(out));
  maybe_record(res, {&x, &a},
               [ix = x.impl(), ia = a.impl(), io = res.impl(), r, c] {
                 if (io->grad.empty()) return;
                 if (ix->requires_grad) {
                   ensure_grad(*ix);
                   for (std::size_t i = 0; i < r; ++i)
                     for (std::size_t j = 0; j < c; ++j)
                       ix->grad[i * c + j] += io->grad[i * c + j] * ia->values[i];
                 }
                 if (ia->requires_grad) {
                   ensure_grad(*ia);
                   for (std::size_t i = 0; i < r; ++i) {
                     double s2 = 0.0;
                     for (std::size_t j = 0; j < c; ++j)
                       s2 += io->grad[i * c + j] * ix->values[i * c + j];
                     ia->grad[i] += s2;
                   }
                 }
               });
  return res;
}

// --- structural ---

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size())
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " +
                         shape_str(shape) + " changes element count");
  Tensor res = make_result(std::move(shape), x.values());
  maybe_record(res, {&x}, [ix = x.impl(), io = res.impl()] {
    if (io->grad.empty() || !ix->requires_grad) return;
    ensure_grad(*ix);
    for (std::size_t i = 0; i < io->grad.size(); ++i)
      ix->grad[i] += io->grad[i];
  });
  return res;
}

Tensor row(const Tensor& x, std::size_t i) {
  const Shape& s = x.shape();
  if (s.size() != 2)
    throw DimensionError("row: rank-2 tensor required, got " + shape_str(s));
  if (i >= s[0])
    throw DimensionError("row " + std::to_string(i) + " out of range for " +
                         shape_str(s));
  const std::size_t c = s[1];
  std::vector<double> out(x.values().begin() + i * c,
                          x.values().begin() + (i + 1) * c);
  Tensor res = make_result({c}, std::move(out));
  maybe_record(res, {&x}, [ix = x.impl(), io = res.impl(), i, c] {
    if (io->grad.empty() || !ix->requires_grad) return;
    ensure_grad(*ix);
    for (std::size_t j = 0; j < c; ++j) ix->grad[i * c + j] += io->grad[j];
  });
  return res;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows given");
  const std::size_t c = rows[0].size();
  for (const auto& r : rows)
    if (r.rank() != 1 || r.size() != c)
      throw DimensionError("stack_rows: rows must all be rank-1 of length " +
                           std::to_string(c));
  const std::size_t t = rows.size();
  std::vector<double> out;
  out.reserve(t * c);
  for (const auto& r : rows)
    out.insert(out.end(), r.values().begin(), r.values().end());
  Tensor res = make_result({t, c}, std::move(out));
  Tape* tape = active_tape();
  if (tape) {
    bool any = false;
    for (const auto& r : rows) any = any || r.requires_grad();
    if (any) {
      res.set_requires_grad(true);
      std::vector<Impl> impls;
      impls.reserve(t);
      for (const auto& r : rows) impls.push_back(r.impl());
      tape->record([impls = std::move(impls), io = res.impl(), c] {
        if (io->grad.empty()) return;
        for (std::size_t i = 0; i < impls.size(); ++i) {
          if (!impls[i]->requires_grad) continue;
          ensure_grad(*impls[i]);
          for (std::size_t j = 0; j < c; ++j)
            impls[i]->grad[j] += io->grad[i * c + j];
        }
      });
    }
  }
  return res;
}

// --- reductions ---

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor res = make_result({1}, {s});
  maybe_record(res, {&x}, [ix = x.impl(), io = res.impl()] {
    if (io->grad.empty() || !ix->requires_grad) return;
    ensure_grad(*ix);
    const double g = io->grad[0];
    for (auto& gv : ix->grad) gv += g;
  });
  return res;
}

Tensor sum_rows(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() != 2)
    throw DimensionError("sum_rows: rank-2 tensor required, got " +
                         shape_str(s));
  const std::size_t r = s[0], c = s[1];
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += x.values()[i * c + j];
  Tensor res = make_result({r}, std::move(out));
  maybe_record(res, {&x}, [ix = x.impl(), io = res.impl(), r, c] {
    if (io->grad.empty() || !ix->requires_grad) return;
    ensure_grad(*ix);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        ix->grad[i * c + j] += io->grad[i];
  });
  return res;
}

Tensor softmax(const Tensor& x) {
  if (x.rank() != 1)
    throw DimensionError("softmax: rank-1 tensor required, got " +
                         shape_str(x.shape()));
  const std::size_t n = x.size();
  if (n == 0) throw DimensionError("softmax of an empty tensor");
  const auto& v = x.values();
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(v[i] - mx);
    z += out[i];
  }
  for (auto& o : out) o /= z;
  Tensor res = make_result({n}, std::move(out));
  maybe_record(res, {&x}, [ix = x.impl(), io = res.impl(), n] {
    if (io->grad.empty() || !ix->requires_grad) return;
    ensure_grad(*ix);
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += io->grad[i] * io->values[i];
    for (std::size_t i = 0; i < n; ++i)
      ix->grad[i] += io->values[i] * (io->grad[i] - dot);
  });
  return res;
}

bool all_finite(const Tensor& x) {
  for (double v : x.values())
    if (!std::isfinite(v)) return false;
  return true;
}

bool grad_all_finite(const Tensor& x) {
  if (!x.impl() || x.impl()->grad.empty()) return true;
  for (double v : x.impl()->grad)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace trendlab
