// SPDX-License-Identifier: Apache-2.0
//
// Dense tensors with a reverse-mode gradient tape.
//
// Tensors are immutable values sharing their storage. An op whose inputs are
// tracked by a Tape records a backward closure on that tape; untracked inputs
// produce plain constants and record nothing, so evaluation-only forwards
// never build a graph. One Tape lives for one training step.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace scd::num {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename T>
class Tape;
template <typename T>
class Parameter;

template <typename T>
class Tensor {
 public:
  /// A scalar zero.
  Tensor();
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value);
  static Tensor vector(std::vector<T> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_->size(); }
  std::span<const T> data() const noexcept { return *data_; }
  std::vector<T> to_vector() const { return *data_; }

  T operator[](std::size_t i) const { return (*data_)[i]; }
  T at(std::size_t row, std::size_t col) const;
  T item() const;

  bool requires_grad() const noexcept { return tape_ != nullptr; }
  Tape<T>* tape() const noexcept { return tape_; }
  int node() const noexcept { return node_; }

  /// Same values, no tape.
  Tensor detach() const;

 private:
  friend class Tape<T>;
  friend class Parameter<T>;
  Tensor(Shape shape, std::shared_ptr<const std::vector<T>> data);

  Shape shape_;
  std::shared_ptr<const std::vector<T>> data_;
  Tape<T>* tape_ = nullptr;
  int node_ = -1;
};

/// Named trainable tensor with an accumulating gradient.
///
/// Copies are deep. `tensor()` views the live storage, so a view taken before
/// an optimizer step observes the update.
template <typename T>
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Shape shape);
  Parameter(const Parameter& other);
  Parameter& operator=(const Parameter& other);
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  const std::string& name() const noexcept { return name_; }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return grad_.size(); }

  std::span<T> value() noexcept { return *value_; }
  std::span<const T> value() const noexcept { return *value_; }
  std::span<T> grad() noexcept { return grad_; }
  std::span<const T> grad() const noexcept { return grad_; }

  Tensor<T> tensor() const { return Tensor<T>(shape_, value_); }
  void zero_grad();

 private:
  std::string name_;
  Shape shape_;
  std::shared_ptr<std::vector<T>> value_ = std::make_shared<std::vector<T>>();
  std::vector<T> grad_;
};

template <typename T>
void zero_grads(std::span<Parameter<T>* const> params);

template <typename T>
class Tape {
 public:
  /// Receives d(loss)/d(output) and scatters into input buffers via grad_of().
  using BackwardFn = std::function<void(std::span<const T> grad_out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Tracked view of a parameter; backward adds into its grad.
  Tensor<T> watch(Parameter<T>& param);
  /// Tracked leaf whose gradient is readable through grad().
  Tensor<T> variable(const Tensor<T>& value);

  Tensor<T> record(Shape shape, std::vector<T> data, BackwardFn backward);

  /// Accumulation buffer for a node during backward.
  std::span<T> grad_of(int node);
  /// Gradient of a tracked tensor after backward (zeros if unreached).
  std::vector<T> grad(const Tensor<T>& t) const;

  /// Reverse sweep from a scalar loss. Intermediate gradients are reset on
  /// every call; parameter gradients are added to, never overwritten.
  void backward(const Tensor<T>& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  /// Nodes whose backward ran during the last sweep, in visit order.
  const std::vector<int>& visit_log() const noexcept { return visit_log_; }

 private:
  struct Node {
    std::size_t size = 0;
    std::vector<T> grad;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };
  Tensor<T> make_tracked(Tensor<T> value, Node node);

  std::vector<Node> nodes_;
  std::vector<int> visit_log_;
};

/// Backward entry point matching the free-function style of the ops.
template <typename T>
void backward(const Tensor<T>& loss);

// ---- ops -------------------------------------------------------------------

/// [m×k]·[k×n] → [m×n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x·Wᵀ (+ bias): x [B×in], W [out×in], bias [out] → [B×out].
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T>
Tensor<T> tanh(const Tensor<T>& a);

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);
template <typename T>
Tensor<T> concat(std::initializer_list<Tensor<T>> parts, std::size_t axis);
template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end);
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

/// Softmax over the last axis, max-shifted.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x);
template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x);
/// Rank-1 softmax.
template <typename T>
Tensor<T> softmax_vec(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);

/// Row r of a [m×n] multiplied by w[r]; w is [m] or [m×1].
template <typename T>
Tensor<T> scale_rows(const Tensor<T>& a, const Tensor<T>& w);

/// out[r] = keep[r] ? a[r] : b[r] for [m×n] operands.
template <typename T>
Tensor<T> select_rows(std::span<const std::uint8_t> keep, const Tensor<T>& a, const Tensor<T>& b);

/// Rows of a [V×d] table → [n×d].
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> rows);

struct BagEntry {
  std::size_t index;
  double weight;
};
using Bag = std::vector<BagEntry>;

/// out[b] = Σ weight·table[index] over each bag → [B×d].
template <typename T>
Tensor<T> embedding_bag(const Tensor<T>& table, std::span<const Bag> bags);

/// Elementwise maximum across equally shaped parts; ties go to the first.
template <typename T>
Tensor<T> maximum(std::span<const Tensor<T>> parts);

/// Mean negative log-likelihood of `labels` under log-probabilities [B×C].
template <typename T>
Tensor<T> nll_loss(const Tensor<T>& log_probs, std::span<const int> labels);

/// Inverted dropout; identity when rate == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::mt19937_64& rng);

// ---- gradient oracle -------------------------------------------------------

/// Central differences (f(x+h·eᵢ) − f(x−h·eᵢ)) / 2h per coordinate.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T h);

/// Same, perturbing a parameter in place (restored afterwards).
template <typename T>
std::vector<T> finite_diff_grad(const std::function<T()>& f, Parameter<T>& param, T h);

/// max_i |a−n| / max(|a|, |n|, floor).
template <typename T>
double max_relative_error(std::span<const T> analytic, std::span<const T> numeric, double floor = 1e-6);

}  // namespace scd::num
