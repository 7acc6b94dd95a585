#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace emnn::ad {

using Shape = std::vector<std::size_t>;
using Index = std::size_t;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives and has not been reset.
class Tensor {
 public:
  Tensor() = default;

  bool defined() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t size() const;

  std::span<const double> values() const;
  /// Gradient after Tape::backward(); empty if the tensor was not reached.
  std::span<const double> grad() const;
  bool requires_grad() const;

  /// Value of a single-element tensor.
  double item() const;

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Learnable tensor that outlives individual tapes.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // same length as value once zero_grad() ran

  void zero_grad() { grad.assign(value.size(), 0.0); }
};

/// Define-by-run reverse-mode tape. Nodes are recorded in evaluation order;
/// backward() walks them in exact reverse, accumulating gradients additively
/// when a node has several consumers. One tape per thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Shape shape, std::vector<double> values);
  Tensor zeros(Shape shape);
  Tensor scalar(double value);
  /// Leaf that receives a gradient.
  Tensor variable(Shape shape, std::vector<double> values);
  /// Leaf bound to a parameter; backward() adds its gradient into p.grad.
  Tensor parameter(Parameter& p);

  /// Seeds d(loss)/d(loss) = 1 and propagates. loss must hold one element.
  /// Calling it twice without reset() throws.
  void backward(const Tensor& loss);

  void reset();
  std::size_t size() const { return nodes_.size(); }

  // Primitive implementation interface.
  Tensor record(std::string_view op, Shape shape, std::vector<double> values, std::vector<std::size_t> parents,
                BackwardFn backward);
  const Shape& shape(std::size_t id) const { return nodes_[id].shape; }
  std::span<const double> value(std::size_t id) const { return nodes_[id].value; }
  std::span<const double> grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient accumulator of a node, allocated as zeros on first use. Empty
  /// span when the node does not require a gradient.
  std::span<double> grad_accumulator(std::size_t id);

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad);

  std::deque<Node> nodes_;
  std::vector<std::pair<std::size_t, Parameter*>> bound_;
  bool backward_done_ = false;
};

enum class Activation { silu, relu };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

// Primitives. Shapes are checked up front; a mismatch throws ShapeError naming
// the primitive and both shapes. A NaN in any forward result throws
// NumericalError.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double s);
/// a (R, C) plus bias b (C) broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& b);
/// Row r of a (R, C) multiplied by w[r]; w has shape (R).
Tensor scale_rows(const Tensor& a, const Tensor& w);
Tensor matmul(const Tensor& a, const Tensor& b);
/// Concatenation of 2-D tensors along the last axis.
Tensor concat(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& a, Shape shape);
Tensor activate(const Tensor& a, Activation act);
Tensor silu(const Tensor& a);
Tensor relu(const Tensor& a);

/// Sum of all elements, shape [].
Tensor sum(const Tensor& a);
/// Reduction of a 2-D tensor over axis 0 (-> (C)) or axis 1 (-> (R)).
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);
/// Max of a 2-D tensor over an axis; the gradient goes to the (first) argmax.
Tensor max(const Tensor& a, std::size_t axis);

/// Rows of a (R, ...) picked by index.
Tensor gather_rows(const Tensor& a, std::span<const Index> rows);
/// out[s] = sum of rows r with segment[r] == s; empty segments are zero.
Tensor segment_sum(const Tensor& a, std::span<const Index> segment, std::size_t num_segments);
/// Elementwise max per segment; empty segments are zero.
Tensor segment_max(const Tensor& a, std::span<const Index> segment, std::size_t num_segments);

/// Stabilized L2 norms sqrt(|v|^2 + eps) of consecutive blocks of the last
/// axis. block == 0 means the whole row, giving shape (R); otherwise the
/// columns must be a multiple of block and the result is (R, C / block).
Tensor row_norm(const Tensor& a, double eps, std::size_t block = 0);

/// Row-wise cross products. Columns must be a multiple of 3; each
/// consecutive 3-block of a row is crossed with the matching block of b.
Tensor cross_rows(const Tensor& a, const Tensor& b);

/// Per-row channel mixing. v is (R, 3c) laid out as c blocks of xyz; m is
/// (R, c * c') holding a row-major c x c' matrix per row. Result (R, 3c'),
/// out[r, j, k] = sum_i v[r, i, k] * m[r, i, j].
Tensor channel_mix(const Tensor& v, const Tensor& m, std::size_t out_channels);

/// Mean softmax cross-entropy of (N, C) logits against N class labels.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Max over coordinates of |analytic - central difference| / (|central difference| + 1e-12).
/// f builds a scalar from a leaf holding x. Unreliable at exact ties of
/// max-type primitives; callers perturb the input away from them.
double finite_difference_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Shape& shape,
                               const std::vector<double>& x, double step = 1e-6);

}  // namespace emnn::ad
