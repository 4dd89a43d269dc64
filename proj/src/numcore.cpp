// SPDX-License-Identifier: Apache-2.0

#include "scd/numcore.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace scd::num {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

void check_shape(const Shape& shape, std::size_t data_size) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (numel(shape) != data_size) {
    throw DimensionError("shape " + to_string(shape) + " does not match " + std::to_string(data_size) +
                         " elements");
  }
}

template <typename T>
Tape<T>* tape_of(std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* found = nullptr;
  for (const auto* t : inputs) {
    if (!t->tape()) continue;
    if (found && found != t->tape()) throw TapeError("op inputs are recorded on different tapes");
    found = t->tape();
  }
  return found;
}

template <typename T>
Tape<T>* tape_of(std::span<const Tensor<T>> inputs) {
  Tape<T>* found = nullptr;
  for (const auto& t : inputs) {
    if (!t.tape()) continue;
    if (found && found != t.tape()) throw TapeError("op inputs are recorded on different tapes");
    found = t.tape();
  }
  return found;
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(s));
  }
}

// outer × axis × inner decomposition used by concat and slice.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// local_grad(x, y) is dy/dx given input x and output y.
template <typename T, typename LocalGrad>
Tensor<T> unary(const Tensor<T>& a, std::vector<T> out, LocalGrad local_grad) {
  Tape<T>* tape = tape_of<T>({&a});
  if (!tape) return Tensor<T>(a.shape(), std::move(out));
  auto y = std::make_shared<const std::vector<T>>(out);
  int ia = a.node();
  Tensor<T> xa = a;
  return tape->record(a.shape(), std::move(out),
                      [ia, xa, y, local_grad](std::span<const T> g, Tape<T>& tp) {
                        auto ga = tp.grad_of(ia);
                        auto x = xa.data();
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * local_grad(x[i], (*y)[i]);
                      });
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

template <typename T>
Tensor<T>::Tensor() : data_(std::make_shared<const std::vector<T>>(1, T(0))) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)) {
  check_shape(shape_, data.size());
  data_ = std::make_shared<const std::vector<T>>(std::move(data));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::shared_ptr<const std::vector<T>> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_, data_->size());
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, std::vector<T>{value});
}

template <typename T>
Tensor<T> Tensor<T>::vector(std::vector<T> values) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

template <typename T>
Tensor<T> Tensor<T>::matrix(std::size_t rows, std::size_t cols, std::vector<T> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(shape_));
  }
  return shape_[axis];
}

template <typename T>
T Tensor<T>::at(std::size_t row, std::size_t col) const {
  require_rank("at", shape_, 2);
  return (*data_)[row * shape_[1] + col];
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape_));
  return (*data_)[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape_, data_);
}

// ---- Parameter -------------------------------------------------------------

template <typename T>
Parameter<T>::Parameter(std::string name, Shape shape)
    : name_(std::move(name)), shape_(std::move(shape)) {
  check_shape(shape_, numel(shape_));
  value_ = std::make_shared<std::vector<T>>(numel(shape_), T(0));
  grad_.assign(numel(shape_), T(0));
}

template <typename T>
Parameter<T>::Parameter(const Parameter& other)
    : name_(other.name_),
      shape_(other.shape_),
      value_(std::make_shared<std::vector<T>>(*other.value_)),
      grad_(other.grad_) {}

template <typename T>
Parameter<T>& Parameter<T>::operator=(const Parameter& other) {
  if (this != &other) {
    name_ = other.name_;
    shape_ = other.shape_;
    value_ = std::make_shared<std::vector<T>>(*other.value_);
    grad_ = other.grad_;
  }
  return *this;
}

template <typename T>
void Parameter<T>::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), T(0));
}

template <typename T>
void zero_grads(std::span<Parameter<T>* const> params) {
  for (auto* p : params) p->zero_grad();
}

// ---- Tape ------------------------------------------------------------------

template <typename T>
Tensor<T> Tape<T>::make_tracked(Tensor<T> value, Node node) {
  node.size = value.size();
  nodes_.push_back(std::move(node));
  value.tape_ = this;
  value.node_ = static_cast<int>(nodes_.size()) - 1;
  return value;
}

template <typename T>
Tensor<T> Tape<T>::watch(Parameter<T>& param) {
  Node n;
  n.param = &param;
  return make_tracked(param.tensor(), std::move(n));
}

template <typename T>
Tensor<T> Tape<T>::variable(const Tensor<T>& value) {
  return make_tracked(value.detach(), Node{});
}

template <typename T>
Tensor<T> Tape<T>::record(Shape shape, std::vector<T> data, BackwardFn backward) {
  Node n;
  n.backward = std::move(backward);
  return make_tracked(Tensor<T>(std::move(shape), std::move(data)), std::move(n));
}

template <typename T>
std::span<T> Tape<T>::grad_of(int node) {
  auto& n = nodes_.at(static_cast<std::size_t>(node));
  if (n.grad.empty()) n.grad.assign(n.size, T(0));
  return n.grad;
}

template <typename T>
std::vector<T> Tape<T>::grad(const Tensor<T>& t) const {
  if (t.tape() != this) throw TapeError("tensor is not recorded on this tape");
  const auto& n = nodes_.at(static_cast<std::size_t>(t.node()));
  if (n.grad.empty()) return std::vector<T>(n.size, T(0));
  return n.grad;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (loss.tape() == nullptr) throw TapeError("loss is detached from any tape");
  if (loss.tape() != this) throw TapeError("loss was recorded on a different tape");
  if (loss.size() != 1) throw TapeError("loss must be scalar, got shape " + to_string(loss.shape()));

  for (auto& n : nodes_) n.grad.clear();
  visit_log_.clear();
  grad_of(loss.node())[0] = T(1);

  for (int i = loss.node(); i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.empty() || !n.backward) continue;
    visit_log_.push_back(i);
    n.backward(n.grad, *this);
  }
  // Each parameter receives its summed contribution in a single add, so
  // repeated sweeps accumulate exact multiples.
  for (auto& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    auto pg = n.param->grad();
    for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
  }
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.tape() == nullptr) throw TapeError("loss is detached from any tape");
  loss.tape()->backward(loss);
}

// ---- ops -------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  MutMap<T>(out.data(), m, n).noalias() = ConstMap<T>(a.data().data(), m, k) * ConstMap<T>(b.data().data(), k, n);

  Tape<T>* tape = tape_of<T>({&a, &b});
  if (!tape) return Tensor<T>({m, n}, std::move(out));
  return tape->record({m, n}, std::move(out), [a, b, m, k, n](std::span<const T> g, Tape<T>& tp) {
    ConstMap<T> G(g.data(), m, n);
    if (a.requires_grad()) {
      MutMap<T>(tp.grad_of(a.node()).data(), m, k).noalias() += G * ConstMap<T>(b.data().data(), k, n).transpose();
    }
    if (b.requires_grad()) {
      MutMap<T>(tp.grad_of(b.node()).data(), k, n).noalias() += ConstMap<T>(a.data().data(), m, k).transpose() * G;
    }
  });
}

namespace {

template <typename T>
Tensor<T> affine_impl(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias) {
  if (w.rank() != 2 || (x.rank() != 1 && x.rank() != 2) || x.shape().back() != w.dim(1)) {
    throw DimensionError("affine: input " + to_string(x.shape()) + " incompatible with weight " +
                         to_string(w.shape()));
  }
  const auto rows = x.rank() == 2 ? x.dim(0) : std::size_t{1};
  const auto in = w.dim(1), out_dim = w.dim(0);
  if (bias && (bias->rank() != 1 || bias->dim(0) != out_dim)) {
    throw DimensionError("affine: bias " + to_string(bias->shape()) + " incompatible with weight " +
                         to_string(w.shape()));
  }
  std::vector<T> out(rows * out_dim);
  MutMap<T> O(out.data(), rows, out_dim);
  O.noalias() = ConstMap<T>(x.data().data(), rows, in) * ConstMap<T>(w.data().data(), out_dim, in).transpose();
  if (bias) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(bias->data().data(), out_dim);
    O.rowwise() += bv;
  }
  Shape shape = x.rank() == 2 ? Shape{rows, out_dim} : Shape{out_dim};

  Tape<T>* tape = bias ? tape_of<T>({&x, &w, bias}) : tape_of<T>({&x, &w});
  if (!tape) return Tensor<T>(std::move(shape), std::move(out));
  Tensor<T> b = bias ? *bias : Tensor<T>();
  bool has_bias = bias != nullptr;
  return tape->record(std::move(shape), std::move(out),
                      [x, w, b, has_bias, rows, in, out_dim](std::span<const T> g, Tape<T>& tp) {
                        ConstMap<T> G(g.data(), rows, out_dim);
                        if (x.requires_grad()) {
                          MutMap<T>(tp.grad_of(x.node()).data(), rows, in).noalias() +=
                              G * ConstMap<T>(w.data().data(), out_dim, in);
                        }
                        if (w.requires_grad()) {
                          MutMap<T>(tp.grad_of(w.node()).data(), out_dim, in).noalias() +=
                              G.transpose() * ConstMap<T>(x.data().data(), rows, in);
                        }
                        if (has_bias && b.requires_grad()) {
                          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(tp.grad_of(b.node()).data(), out_dim);
                          gb += G.colwise().sum();
                        }
                      });
}

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary(const char* name, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, Bwd bwd) {
  require_same_shape(name, a.shape(), b.shape());
  std::vector<T> out(a.size());
  auto xa = a.data(), xb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xa[i], xb[i]);
  Tape<T>* tape = tape_of<T>({&a, &b});
  if (!tape) return Tensor<T>(a.shape(), std::move(out));
  return tape->record(a.shape(), std::move(out), [a, b, bwd](std::span<const T> g, Tape<T>& tp) {
    auto xa = a.data(), xb = b.data();
    std::span<T> ga, gb;
    if (a.requires_grad()) ga = tp.grad_of(a.node());
    if (b.requires_grad()) gb = tp.grad_of(b.node());
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto [da, db] = bwd(xa[i], xb[i]);
      if (!ga.empty()) ga[i] += g[i] * da;
      if (!gb.empty()) gb[i] += g[i] * db;
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  return affine_impl(x, weight, &bias);
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight) {
  return affine_impl<T>(x, weight, nullptr);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>("add", a, b, [](T x, T y) { return x + y; },
                   [](T, T) { return std::pair<T, T>{T(1), T(1)}; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>("sub", a, b, [](T x, T y) { return x - y; },
                   [](T, T) { return std::pair<T, T>{T(1), T(-1)}; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>("mul", a, b, [](T x, T y) { return x * y; },
                   [](T x, T y) { return std::pair<T, T>{y, x}; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return unary<T>(a, std::move(out), [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (x[i] >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-x[i]));
    } else {
      T e = std::exp(x[i]);
      out[i] = e / (T(1) + e);
    }
  }
  return unary<T>(a, std::move(out), [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
  return unary<T>(a, std::move(out), [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: empty part list");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) throw DimensionError("concat: incompatible shapes " + to_string(first) + " and " + to_string(s));
    out_shape[axis] += s[axis];
  }
  const auto split = split_at(first, axis);
  std::vector<std::size_t> chunk(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) chunk[p] = parts[p].shape()[axis] * split.inner;
  const std::size_t row = out_shape[axis] * split.inner;

  std::vector<T> out(numel(out_shape));
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::size_t off = o * row;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      auto src = parts[p].data().subspan(o * chunk[p], chunk[p]);
      std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
      off += chunk[p];
    }
  }
  Tape<T>* tape = tape_of<T>(parts);
  if (!tape) return Tensor<T>(std::move(out_shape), std::move(out));
  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  return tape->record(std::move(out_shape), std::move(out),
                      [inputs, chunk, row, outer = split.outer](std::span<const T> g, Tape<T>& tp) {
                        for (std::size_t o = 0; o < outer; ++o) {
                          std::size_t off = o * row;
                          for (std::size_t p = 0; p < inputs.size(); ++p) {
                            if (inputs[p].requires_grad()) {
                              auto gp = tp.grad_of(inputs[p].node()).subspan(o * chunk[p], chunk[p]);
                              for (std::size_t i = 0; i < chunk[p]; ++i) gp[i] += g[off + i];
                            }
                            off += chunk[p];
                          }
                        }
                      });
}

template <typename T>
Tensor<T> concat(std::initializer_list<Tensor<T>> parts, std::size_t axis) {
  return concat<T>(std::span<const Tensor<T>>(parts.begin(), parts.size()), axis);
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= a.rank() || begin >= end || end > a.shape()[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " invalid for " + to_string(a.shape()));
  }
  const auto split = split_at(a.shape(), axis);
  const std::size_t src_row = a.shape()[axis] * split.inner;
  const std::size_t len = (end - begin) * split.inner;
  const std::size_t start = begin * split.inner;
  Shape shape = a.shape();
  shape[axis] = end - begin;
  std::vector<T> out(split.outer * len);
  auto x = a.data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(o * src_row + start), len,
                out.begin() + static_cast<std::ptrdiff_t>(o * len));
  }
  Tape<T>* tape = tape_of<T>({&a});
  if (!tape) return Tensor<T>(std::move(shape), std::move(out));
  int ia = a.node();
  return tape->record(std::move(shape), std::move(out),
                      [ia, outer = split.outer, src_row, len, start](std::span<const T> g, Tape<T>& tp) {
                        auto ga = tp.grad_of(ia);
                        for (std::size_t o = 0; o < outer; ++o) {
                          for (std::size_t i = 0; i < len; ++i) ga[o * src_row + start + i] += g[o * len + i];
                        }
                      });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  if (!a.requires_grad()) return Tensor<T>(std::move(shape), a.to_vector());
  int ia = a.node();
  return a.tape()->record(std::move(shape), a.to_vector(), [ia](std::span<const T> g, Tape<T>& tp) {
    auto ga = tp.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  if (x.rank() == 0) throw DimensionError("softmax: scalar input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  std::vector<T> out(x.size());
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = in.data() + r * n;
    T* yr = out.data() + r * n;
    T mx = *std::max_element(xr, xr + n);
    T z = 0;
    for (std::size_t i = 0; i < n; ++i) z += (yr[i] = std::exp(xr[i] - mx));
    for (std::size_t i = 0; i < n; ++i) yr[i] /= z;
  }
  Tape<T>* tape = tape_of<T>({&x});
  if (!tape) return Tensor<T>(x.shape(), std::move(out));
  auto y = std::make_shared<const std::vector<T>>(out);
  int ix = x.node();
  return tape->record(x.shape(), std::move(out), [ix, y, n, rows](std::span<const T> g, Tape<T>& tp) {
    auto gx = tp.grad_of(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t i = 0; i < n; ++i) dot += g[r * n + i] * (*y)[r * n + i];
      for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += (*y)[r * n + i] * (g[r * n + i] - dot);
    }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  if (x.rank() == 0) throw DimensionError("log_softmax: scalar input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  std::vector<T> out(x.size());
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = in.data() + r * n;
    T mx = *std::max_element(xr, xr + n);
    T z = 0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(xr[i] - mx);
    T lse = mx + std::log(z);
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] = xr[i] - lse;
  }
  Tape<T>* tape = tape_of<T>({&x});
  if (!tape) return Tensor<T>(x.shape(), std::move(out));
  auto y = std::make_shared<const std::vector<T>>(out);
  int ix = x.node();
  return tape->record(x.shape(), std::move(out), [ix, y, n, rows](std::span<const T> g, Tape<T>& tp) {
    auto gx = tp.grad_of(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      T total = 0;
      for (std::size_t i = 0; i < n; ++i) total += g[r * n + i];
      for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += g[r * n + i] - std::exp((*y)[r * n + i]) * total;
    }
  });
}

template <typename T>
Tensor<T> softmax_vec(const Tensor<T>& x) {
  require_rank("softmax_vec", x.shape(), 1);
  return softmax(x);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.data()) total += v;
  Tape<T>* tape = tape_of<T>({&a});
  if (!tape) return Tensor<T>::scalar(total);
  int ia = a.node();
  return tape->record(Shape{}, {total}, [ia](std::span<const T> g, Tape<T>& tp) {
    for (auto& v : tp.grad_of(ia)) v += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> scale_rows(const Tensor<T>& a, const Tensor<T>& w) {
  require_rank("scale_rows", a.shape(), 2);
  const auto m = a.dim(0), n = a.dim(1);
  if (w.size() != m || w.rank() > 2 || (w.rank() == 2 && w.dim(1) != 1)) {
    throw DimensionError("scale_rows: weights " + to_string(w.shape()) + " incompatible with " +
                         to_string(a.shape()));
  }
  std::vector<T> out(a.size());
  auto x = a.data(), s = w.data();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = x[r * n + c] * s[r];
  Tape<T>* tape = tape_of<T>({&a, &w});
  if (!tape) return Tensor<T>(a.shape(), std::move(out));
  return tape->record(a.shape(), std::move(out), [a, w, m, n](std::span<const T> g, Tape<T>& tp) {
    auto x = a.data(), s = w.data();
    if (a.requires_grad()) {
      auto ga = tp.grad_of(a.node());
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[r * n + c] * s[r];
    }
    if (w.requires_grad()) {
      auto gw = tp.grad_of(w.node());
      for (std::size_t r = 0; r < m; ++r) {
        T acc = 0;
        for (std::size_t c = 0; c < n; ++c) acc += g[r * n + c] * x[r * n + c];
        gw[r] += acc;
      }
    }
  });
}

template <typename T>
Tensor<T> select_rows(std::span<const std::uint8_t> keep, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("select_rows", a.shape(), b.shape());
  require_rank("select_rows", a.shape(), 2);
  const auto m = a.dim(0), n = a.dim(1);
  if (keep.size() != m) throw DimensionError("select_rows: mask length does not match " + to_string(a.shape()));
  std::vector<T> out(a.size());
  auto xa = a.data(), xb = b.data();
  for (std::size_t r = 0; r < m; ++r) {
    const auto& src = keep[r] ? xa : xb;
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r * n), n, out.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  Tape<T>* tape = tape_of<T>({&a, &b});
  if (!tape) return Tensor<T>(a.shape(), std::move(out));
  std::vector<std::uint8_t> mask(keep.begin(), keep.end());
  return tape->record(a.shape(), std::move(out), [a, b, mask, n](std::span<const T> g, Tape<T>& tp) {
    std::span<T> ga, gb;
    if (a.requires_grad()) ga = tp.grad_of(a.node());
    if (b.requires_grad()) gb = tp.grad_of(b.node());
    for (std::size_t r = 0; r < mask.size(); ++r) {
      auto dst = mask[r] ? ga : gb;
      if (dst.empty()) continue;
      for (std::size_t c = 0; c < n; ++c) dst[r * n + c] += g[r * n + c];
    }
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> rows) {
  require_rank("gather_rows", table.shape(), 2);
  const auto v = table.dim(0), d = table.dim(1);
  if (rows.empty()) throw DimensionError("gather_rows: empty row list");
  std::vector<T> out(rows.size() * d);
  auto x = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= v) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                           to_string(table.shape()));
    }
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  Tape<T>* tape = tape_of<T>({&table});
  Shape shape{rows.size(), d};
  if (!tape) return Tensor<T>(std::move(shape), std::move(out));
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  int it = table.node();
  return tape->record(std::move(shape), std::move(out), [it, idx, d](std::span<const T> g, Tape<T>& tp) {
    auto gt = tp.grad_of(it);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) gt[idx[i] * d + c] += g[i * d + c];
  });
}

template <typename T>
Tensor<T> embedding_bag(const Tensor<T>& table, std::span<const Bag> bags) {
  require_rank("embedding_bag", table.shape(), 2);
  const auto v = table.dim(0), d = table.dim(1);
  if (bags.empty()) throw DimensionError("embedding_bag: empty batch");
  std::vector<T> out(bags.size() * d, T(0));
  auto x = table.data();
  for (std::size_t b = 0; b < bags.size(); ++b) {
    for (const auto& e : bags[b]) {
      if (e.index >= v) {
        throw DimensionError("embedding_bag: index " + std::to_string(e.index) + " out of range for " +
                             to_string(table.shape()));
      }
      const T w = static_cast<T>(e.weight);
      for (std::size_t c = 0; c < d; ++c) out[b * d + c] += w * x[e.index * d + c];
    }
  }
  Tape<T>* tape = tape_of<T>({&table});
  Shape shape{bags.size(), d};
  if (!tape) return Tensor<T>(std::move(shape), std::move(out));
  std::vector<Bag> held(bags.begin(), bags.end());
  int it = table.node();
  return tape->record(std::move(shape), std::move(out), [it, held, d](std::span<const T> g, Tape<T>& tp) {
    auto gt = tp.grad_of(it);
    for (std::size_t b = 0; b < held.size(); ++b) {
      for (const auto& e : held[b]) {
        const T w = static_cast<T>(e.weight);
        for (std::size_t c = 0; c < d; ++c) gt[e.index * d + c] += w * g[b * d + c];
      }
    }
  });
}

template <typename T>
Tensor<T> maximum(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw DimensionError("maximum: empty part list");
  for (const auto& p : parts) require_same_shape("maximum", parts[0].shape(), p.shape());
  const std::size_t n = parts[0].size();
  std::vector<T> out(parts[0].data().begin(), parts[0].data().end());
  std::vector<std::uint32_t> arg(n, 0);
  for (std::size_t p = 1; p < parts.size(); ++p) {
    auto x = parts[p].data();
    for (std::size_t i = 0; i < n; ++i) {
      if (x[i] > out[i]) {
        out[i] = x[i];
        arg[i] = static_cast<std::uint32_t>(p);
      }
    }
  }
  Tape<T>* tape = tape_of<T>(parts);
  if (!tape) return Tensor<T>(parts[0].shape(), std::move(out));
  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  return tape->record(parts[0].shape(), std::move(out), [inputs, arg](std::span<const T> g, Tape<T>& tp) {
    for (std::size_t i = 0; i < arg.size(); ++i) {
      const auto& src = inputs[arg[i]];
      if (src.requires_grad()) tp.grad_of(src.node())[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> nll_loss(const Tensor<T>& log_probs, std::span<const int> labels) {
  require_rank("nll_loss", log_probs.shape(), 2);
  const auto rows = log_probs.dim(0), classes = log_probs.dim(1);
  if (labels.size() != rows) {
    throw DimensionError("nll_loss: " + std::to_string(labels.size()) + " labels for " +
                         to_string(log_probs.shape()));
  }
  auto x = log_probs.data();
  T total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw DimensionError("nll_loss: label out of range");
    }
    total -= x[r * classes + static_cast<std::size_t>(labels[r])];
  }
  T loss = total / static_cast<T>(rows);
  Tape<T>* tape = tape_of<T>({&log_probs});
  if (!tape) return Tensor<T>::scalar(loss);
  std::vector<int> held(labels.begin(), labels.end());
  int il = log_probs.node();
  return tape->record(Shape{}, {loss}, [il, held, rows, classes](std::span<const T> g, Tape<T>& tp) {
    auto gl = tp.grad_of(il);
    const T share = g[0] / static_cast<T>(rows);
    for (std::size_t r = 0; r < rows; ++r) gl[r * classes + static_cast<std::size_t>(held[r])] -= share;
  });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must lie in [0,1)");
  if (rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const T kept = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(x.size());
  for (auto& m : *mask) m = keep(rng) ? kept : T(0);
  std::vector<T> out(x.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * (*mask)[i];
  Tape<T>* tape = tape_of<T>({&x});
  if (!tape) return Tensor<T>(x.shape(), std::move(out));
  int ix = x.node();
  return tape->record(x.shape(), std::move(out), [ix, mask](std::span<const T> g, Tape<T>& tp) {
    auto gx = tp.grad_of(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

// ---- gradient oracle -------------------------------------------------------

template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T h) {
  if (!(h > T(0))) throw std::invalid_argument("finite_diff_grad: step must be positive");
  std::vector<T> probe = x.to_vector();
  std::vector<T> grad(probe.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const T orig = probe[i];
    probe[i] = orig + h;
    const T up = f(Tensor<T>(x.shape(), probe));
    probe[i] = orig - h;
    const T down = f(Tensor<T>(x.shape(), probe));
    probe[i] = orig;
    grad[i] = (up - down) / (T(2) * h);
  }
  return Tensor<T>(x.shape(), std::move(grad));
}

template <typename T>
std::vector<T> finite_diff_grad(const std::function<T()>& f, Parameter<T>& param, T h) {
  if (!(h > T(0))) throw std::invalid_argument("finite_diff_grad: step must be positive");
  auto v = param.value();
  std::vector<T> grad(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const T orig = v[i];
    v[i] = orig + h;
    const T up = f();
    v[i] = orig - h;
    const T down = f();
    v[i] = orig;
    grad[i] = (up - down) / (T(2) * h);
  }
  return grad;
}

template <typename T>
double max_relative_error(std::span<const T> analytic, std::span<const T> numeric, double floor) {
  if (analytic.size() != numeric.size()) throw DimensionError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

// ---- instantiations --------------------------------------------------------

#define SCD_NUMCORE_INSTANTIATE(T)                                                                         \
  template class Tensor<T>;                                                                                \
  template class Parameter<T>;                                                                             \
  template class Tape<T>;                                                                                  \
  template void zero_grads<T>(std::span<Parameter<T>* const>);                                             \
  template void backward<T>(const Tensor<T>&);                                                             \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> affine<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> affine<T>(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                                        \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                         \
  template Tensor<T> tanh<T>(const Tensor<T>&);                                                            \
  template Tensor<T> concat<T>(std::span<const Tensor<T>>, std::size_t);                                   \
  template Tensor<T> concat<T>(std::initializer_list<Tensor<T>>, std::size_t);                             \
  template Tensor<T> slice<T>(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                    \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                                  \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                                         \
  template Tensor<T> log_softmax<T>(const Tensor<T>&);                                                     \
  template Tensor<T> softmax_vec<T>(const Tensor<T>&);                                                     \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                             \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                            \
  template Tensor<T> scale_rows<T>(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> select_rows<T>(std::span<const std::uint8_t>, const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> gather_rows<T>(const Tensor<T>&, std::span<const std::size_t>);                       \
  template Tensor<T> embedding_bag<T>(const Tensor<T>&, std::span<const Bag>);                             \
  template Tensor<T> maximum<T>(std::span<const Tensor<T>>);                                               \
  template Tensor<T> nll_loss<T>(const Tensor<T>&, std::span<const int>);                                  \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, std::mt19937_64&);                               \
  template Tensor<T> finite_diff_grad<T>(const std::function<T(const Tensor<T>&)>&, const Tensor<T>&, T);  \
  template std::vector<T> finite_diff_grad<T>(const std::function<T()>&, Parameter<T>&, T);                \
  template double max_relative_error<T>(std::span<const T>, std::span<const T>, double);

SCD_NUMCORE_INSTANTIATE(float)
SCD_NUMCORE_INSTANTIATE(double)

#undef SCD_NUMCORE_INSTANTIATE

}  // namespace scd::num
