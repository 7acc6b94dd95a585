#include "emnn/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "emnn/error.hpp"

namespace emnn::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

[[noreturn]] void shape_error(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

[[noreturn]] void shape_error(std::string_view op, const Shape& a, std::string_view what) {
  throw ShapeError(std::string(op) + ": shape " + to_string(a) + " " + std::string(what));
}

std::size_t rows_of(const Shape& s) { return s.empty() ? 1 : s[0]; }

std::size_t row_width(const Shape& s) {
  std::size_t w = 1;
  for (std::size_t i = 1; i < s.size(); ++i) w *= s[i];
  return w;
}

void require_rank2(std::string_view op, const Tensor& a) {
  if (a.rank() != 2) shape_error(op, a.shape(), "is not 2-D");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

const Shape& Tensor::shape() const { return tape_->shape(id_); }
std::size_t Tensor::size() const { return tape_->value(id_).size(); }
std::span<const double> Tensor::values() const { return tape_->value(id_); }
std::span<const double> Tensor::grad() const { return tape_->grad(id_); }
bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
  return values()[0];
}

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ShapeError("leaf: shape " + to_string(shape) + " does not match " + std::to_string(values.size()) +
                     " values");
  }
  nodes_.push_back(Node{std::move(shape), std::move(values), {}, requires_grad, {}});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::constant(Shape shape, std::vector<double> values) {
  return leaf(std::move(shape), std::move(values), false);
}

Tensor Tape::zeros(Shape shape) {
  const std::size_t n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tape::scalar(double value) { return constant({}, {value}); }

Tensor Tape::variable(Shape shape, std::vector<double> values) {
  return leaf(std::move(shape), std::move(values), true);
}

Tensor Tape::parameter(Parameter& p) {
  Tensor t = leaf(p.shape, p.value, true);
  bound_.emplace_back(t.id(), &p);
  return t;
}

Tensor Tape::record(std::string_view op, Shape shape, std::vector<double> values, std::vector<std::size_t> parents,
                    BackwardFn backward) {
  for (double v : values) {
    if (std::isnan(v)) throw NumericalError(std::string(op) + ": NaN in forward result");
  }
  bool needs = false;
  for (std::size_t p : parents) needs = needs || nodes_[p].requires_grad;
  Node node{std::move(shape), std::move(values), {}, needs, {}};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_accumulator(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return {};
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(const Tensor& loss) {
  if (backward_done_) throw Error("backward: already called on this tape; reset() first");
  if (&loss.tape() != this) throw Error("backward: loss belongs to another tape");
  if (nodes_[loss.id()].value.size() != 1) {
    throw ShapeError("backward: loss of shape " + to_string(loss.shape()) + " is not a scalar");
  }
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_accumulator(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
  for (auto& [id, param] : bound_) {
    const Node& n = nodes_[id];
    if (param->grad.size() != param->value.size()) param->zero_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) param->grad[i] += n.grad[i];
  }
}

void Tape::reset() {
  nodes_.clear();
  bound_.clear();
  backward_done_ = false;
}

// ---------------------------------------------------------------------------
// Activations

Activation parse_activation(std::string_view name) {
  if (name == "silu") return Activation::silu;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected silu or relu)");
}

std::string_view to_string(Activation a) { return a == Activation::silu ? "silu" : "relu"; }

// ---------------------------------------------------------------------------
// Elementwise

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_same_shape(std::string_view op, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(op, a.shape(), std::move(out), {ia, ib}, [ia, ib, bwd](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    const auto x = t.value(ia);
    const auto y = t.value(ib);
    auto ga = t.grad_accumulator(ia);
    auto gb = t.grad_accumulator(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto [da, db] = bwd(x[i], y[i]);
      if (!ga.empty()) ga[i] += g[i] * da;
      if (!gb.empty()) gb[i] += g[i] * db;
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair{y, x}; });
}

Tensor scale(const Tensor& a, double s) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * av[i];
  const std::size_t ia = a.id();
  return a.tape().record("scale", a.shape(), std::move(out), {ia}, [ia, s](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Tensor add_bias(const Tensor& a, const Tensor& b) {
  require_rank2("add_bias", a);
  if (b.rank() != 1 || b.dim(0) != a.dim(1)) shape_error("add_bias", a.shape(), b.shape());
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = av[r * cols + c] + bv[c];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("add_bias", a.shape(), std::move(out), {ia, ib},
                         [ia, ib, rows, cols](Tape& t, std::size_t self) {
                           const auto g = t.grad(self);
                           auto ga = t.grad_accumulator(ia);
                           auto gb = t.grad_accumulator(ib);
                           if (!ga.empty()) {
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           }
                           if (!gb.empty()) {
                             for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
                             }
                           }
                         });
}

Tensor scale_rows(const Tensor& a, const Tensor& w) {
  if (a.rank() < 1 || w.rank() != 1 || w.dim(0) != rows_of(a.shape())) shape_error("scale_rows", a.shape(), w.shape());
  const std::size_t rows = a.dim(0), width = row_width(a.shape());
  const auto av = a.values();
  const auto wv = w.values();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) out[r * width + c] = av[r * width + c] * wv[r];
  }
  const std::size_t ia = a.id(), iw = w.id();
  return a.tape().record("scale_rows", a.shape(), std::move(out), {ia, iw},
                         [ia, iw, rows, width](Tape& t, std::size_t self) {
                           const auto g = t.grad(self);
                           const auto x = t.value(ia);
                           const auto wv = t.value(iw);
                           auto ga = t.grad_accumulator(ia);
                           auto gw = t.grad_accumulator(iw);
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < width; ++c) {
                               const std::size_t i = r * width + c;
                               if (!ga.empty()) ga[i] += g[i] * wv[r];
                               if (!gw.empty()) gw[r] += g[i] * x[i];
                             }
                           }
                         });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_error("matmul", a.shape(), b.shape());
  const Eigen::Index m = static_cast<Eigen::Index>(a.dim(0));
  const Eigen::Index k = static_cast<Eigen::Index>(a.dim(1));
  const Eigen::Index n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MutMap(out.data(), m, n).noalias() = ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("matmul", {a.dim(0), b.dim(1)}, std::move(out), {ia, ib},
                         [ia, ib, m, k, n](Tape& t, std::size_t self) {
                           const ConstMap g(t.grad(self).data(), m, n);
                           if (auto ga = t.grad_accumulator(ia); !ga.empty()) {
                             MutMap(ga.data(), m, k).noalias() += g * ConstMap(t.value(ib).data(), k, n).transpose();
                           }
                           if (auto gb = t.grad_accumulator(ib); !gb.empty()) {
                             MutMap(gb.data(), k, n).noalias() += ConstMap(t.value(ia).data(), m, k).transpose() * g;
                           }
                         });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t rows = parts[0].rank() == 2 ? parts[0].dim(0) : 0;
  std::vector<std::size_t> widths, ids;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows) shape_error("concat", parts[0].shape(), p.shape());
    widths.push_back(p.dim(1));
    ids.push_back(p.id());
    total += p.dim(1);
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    }
    offset += widths[k];
  }
  return parts[0].tape().record("concat", {rows, total}, std::move(out), ids,
                                [ids, widths, rows, total](Tape& t, std::size_t self) {
                                  const auto g = t.grad(self);
                                  std::size_t offset = 0;
                                  for (std::size_t k = 0; k < ids.size(); ++k) {
                                    if (auto gp = t.grad_accumulator(ids[k]); !gp.empty()) {
                                      for (std::size_t r = 0; r < rows; ++r) {
                                        for (std::size_t c = 0; c < widths[k]; ++c) {
                                          gp[r * widths[k] + c] += g[r * total + offset + c];
                                        }
                                      }
                                    }
                                    offset += widths[k];
                                  }
                                });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) shape_error("reshape", a.shape(), shape);
  const auto v = a.values();
  const std::size_t ia = a.id();
  return a.tape().record("reshape", std::move(shape), std::vector<double>(v.begin(), v.end()), {ia},
                         [ia](Tape& t, std::size_t self) {
                           const auto g = t.grad(self);
                           auto ga = t.grad_accumulator(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                         });
}

Tensor silu(const Tensor& a) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * sigmoid(av[i]);
  const std::size_t ia = a.id();
  return a.tape().record("silu", a.shape(), std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    const auto x = t.value(ia);
    auto ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = sigmoid(x[i]);
      ga[i] += g[i] * (s + x[i] * s * (1.0 - s));
    }
  });
}

Tensor relu(const Tensor& a) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  const std::size_t ia = a.id();
  return a.tape().record("relu", a.shape(), std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    const auto x = t.value(ia);
    auto ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) ga[i] += g[i];
    }
  });
}

Tensor activate(const Tensor& a, Activation act) { return act == Activation::silu ? silu(a) : relu(a); }

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  const std::size_t ia = a.id();
  return a.tape().record("sum", {}, {total}, {ia}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& x : t.grad_accumulator(ia)) x += g;
  });
}

Tensor sum(const Tensor& a, std::size_t axis) {
  require_rank2("sum", a);
  if (axis > 1) shape_error("sum", a.shape(), "has no axis " + std::to_string(axis));
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  const auto av = a.values();
  std::vector<double> out(axis == 0 ? cols : rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[axis == 0 ? c : r] += av[r * cols + c];
  }
  const std::size_t ia = a.id();
  const std::size_t out_len = out.size();
  return a.tape().record("sum", {out_len}, std::move(out), {ia}, [ia, axis, rows, cols](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto ga = t.grad_accumulator(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[axis == 0 ? c : r];
    }
  });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  require_rank2("mean", a);
  const std::size_t n = axis == 0 ? a.dim(0) : a.dim(1);
  if (n == 0) shape_error("mean", a.shape(), "has an empty reduction axis");
  return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

Tensor max(const Tensor& a, std::size_t axis) {
  require_rank2("max", a);
  if (axis > 1) shape_error("max", a.shape(), "has no axis " + std::to_string(axis));
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  const std::size_t out_len = axis == 0 ? cols : rows;
  const std::size_t reduce_len = axis == 0 ? rows : cols;
  if (reduce_len == 0) shape_error("max", a.shape(), "has an empty reduction axis");
  const auto av = a.values();
  std::vector<double> out(out_len, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> argmax(out_len, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t o = axis == 0 ? c : r;
      const std::size_t i = r * cols + c;
      if (av[i] > out[o]) {
        out[o] = av[i];
        argmax[o] = i;
      }
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record("max", {out_len}, std::move(out), {ia}, [ia, argmax](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto ga = t.grad_accumulator(ia);
    for (std::size_t o = 0; o < g.size(); ++o) ga[argmax[o]] += g[o];
  });
}

// ---------------------------------------------------------------------------
// Indexing

Tensor gather_rows(const Tensor& a, std::span<const Index> rows) {
  if (a.rank() < 1) shape_error("gather_rows", a.shape(), "has no rows");
  const std::size_t n = a.dim(0), width = row_width(a.shape());
  std::vector<Index> idx(rows.begin(), rows.end());
  const auto av = a.values();
  std::vector<double> out(idx.size() * width);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[r]) + " out of range for shape " +
                       to_string(a.shape()));
    }
    std::copy_n(av.data() + idx[r] * width, width, out.data() + r * width);
  }
  Shape shape = a.shape();
  shape[0] = idx.size();
  const std::size_t ia = a.id();
  return a.tape().record("gather_rows", std::move(shape), std::move(out), {ia},
                         [ia, idx = std::move(idx), width](Tape& t, std::size_t self) {
                           const auto g = t.grad(self);
                           auto ga = t.grad_accumulator(ia);
                           for (std::size_t r = 0; r < idx.size(); ++r) {
                             for (std::size_t c = 0; c < width; ++c) ga[idx[r] * width + c] += g[r * width + c];
                           }
                         });
}

namespace {

void check_segments(std::string_view op, const Tensor& a, std::span<const Index> segment, std::size_t num_segments) {
  if (a.rank() < 1 || a.dim(0) != segment.size()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(segment.size()) + " segment ids for shape " +
                     to_string(a.shape()));
  }
  for (Index s : segment) {
    if (s >= num_segments) {
      throw ShapeError(std::string(op) + ": segment id " + std::to_string(s) + " >= " + std::to_string(num_segments));
    }
  }
}

}  // namespace

Tensor segment_sum(const Tensor& a, std::span<const Index> segment, std::size_t num_segments) {
  check_segments("segment_sum", a, segment, num_segments);
  const std::size_t width = row_width(a.shape());
  std::vector<Index> seg(segment.begin(), segment.end());
  const auto av = a.values();
  std::vector<double> out(num_segments * width, 0.0);
  for (std::size_t r = 0; r < seg.size(); ++r) {
    double* dst = out.data() + seg[r] * width;
    const double* src = av.data() + r * width;
    for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
  }
  Shape shape = a.shape();
  shape[0] = num_segments;
  const std::size_t ia = a.id();
  return a.tape().record("segment_sum", std::move(shape), std::move(out), {ia},
                         [ia, seg = std::move(seg), width](Tape& t, std::size_t self) {
                           const auto g = t.grad(self);
                           auto ga = t.grad_accumulator(ia);
                           for (std::size_t r = 0; r < seg.size(); ++r) {
                             for (std::size_t c = 0; c < width; ++c) ga[r * width + c] += g[seg[r] * width + c];
                           }
                         });
}

Tensor segment_max(const Tensor& a, std::span<const Index> segment, std::size_t num_segments) {
  check_segments("segment_max", a, segment, num_segments);
  const std::size_t width = row_width(a.shape());
  const auto av = a.values();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<double> out(num_segments * width, 0.0);
  std::vector<std::size_t> argmax(num_segments * width, kNone);
  for (std::size_t r = 0; r < segment.size(); ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t o = segment[r] * width + c;
      const std::size_t i = r * width + c;
      if (argmax[o] == kNone || av[i] > out[o]) {
        out[o] = av[i];
        argmax[o] = i;
      }
    }
  }
  Shape shape = a.shape();
  shape[0] = num_segments;
  const std::size_t ia = a.id();
  return a.tape().record("segment_max", std::move(shape), std::move(out), {ia},
                         [ia, argmax = std::move(argmax)](Tape& t, std::size_t self) {
                           const auto g = t.grad(self);
                           auto ga = t.grad_accumulator(ia);
                           for (std::size_t o = 0; o < g.size(); ++o) {
                             if (argmax[o] != kNone) ga[argmax[o]] += g[o];
                           }
                         });
}

// ---------------------------------------------------------------------------
// Geometry primitives

Tensor row_norm(const Tensor& a, double eps, std::size_t block) {
  if (a.rank() < 1) shape_error("row_norm", a.shape(), "has no rows");
  const std::size_t rows = a.dim(0), width = row_width(a.shape());
  const std::size_t b = block == 0 ? width : block;
  if (b == 0 || width % b != 0) shape_error("row_norm", a.shape(), "is not divisible into blocks of " + std::to_string(b));
  const std::size_t blocks = width / b;
  const auto av = a.values();
  std::vector<double> out(rows * blocks);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < blocks; ++k) {
      double s = eps;
      for (std::size_t c = 0; c < b; ++c) {
        const double x = av[r * width + k * b + c];
        s += x * x;
      }
      out[r * blocks + k] = std::sqrt(s);
    }
  }
  Shape shape = block == 0 ? Shape{rows} : Shape{rows, blocks};
  const std::size_t ia = a.id();
  return a.tape().record("row_norm", std::move(shape), std::move(out), {ia},
                         [ia, rows, width, b, blocks](Tape& t, std::size_t self) {
                           const auto g = t.grad(self);
                           const auto y = t.value(self);
                           const auto x = t.value(ia);
                           auto ga = t.grad_accumulator(ia);
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t k = 0; k < blocks; ++k) {
                               const double coef = g[r * blocks + k] / y[r * blocks + k];
                               for (std::size_t c = 0; c < b; ++c) {
                                 const std::size_t i = r * width + k * b + c;
                                 ga[i] += coef * x[i];
                               }
                             }
                           }
                         });
}

Tensor cross_rows(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() < 1 || row_width(a.shape()) % 3 != 0) {
    shape_error("cross_rows", a.shape(), b.shape());
  }
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); i += 3) {
    out[i + 0] = av[i + 1] * bv[i + 2] - av[i + 2] * bv[i + 1];
    out[i + 1] = av[i + 2] * bv[i + 0] - av[i + 0] * bv[i + 2];
    out[i + 2] = av[i + 0] * bv[i + 1] - av[i + 1] * bv[i + 0];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("cross_rows", a.shape(), std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    // d(a x b) with upstream g: grad_a = b x g, grad_b = g x a.
    const auto g = t.grad(self);
    const auto x = t.value(ia);
    const auto y = t.value(ib);
    auto ga = t.grad_accumulator(ia);
    auto gb = t.grad_accumulator(ib);
    for (std::size_t i = 0; i < g.size(); i += 3) {
      if (!ga.empty()) {
        ga[i + 0] += y[i + 1] * g[i + 2] - y[i + 2] * g[i + 1];
        ga[i + 1] += y[i + 2] * g[i + 0] - y[i + 0] * g[i + 2];
        ga[i + 2] += y[i + 0] * g[i + 1] - y[i + 1] * g[i + 0];
      }
      if (!gb.empty()) {
        gb[i + 0] += g[i + 1] * x[i + 2] - g[i + 2] * x[i + 1];
        gb[i + 1] += g[i + 2] * x[i + 0] - g[i + 0] * x[i + 2];
        gb[i + 2] += g[i + 0] * x[i + 1] - g[i + 1] * x[i + 0];
      }
    }
  });
}

Tensor channel_mix(const Tensor& v, const Tensor& m, std::size_t out_channels) {
  require_rank2("channel_mix", v);
  require_rank2("channel_mix", m);
  const std::size_t rows = v.dim(0);
  if (v.dim(1) % 3 != 0 || m.dim(0) != rows) shape_error("channel_mix", v.shape(), m.shape());
  const std::size_t cin = v.dim(1) / 3, cout = out_channels;
  if (m.dim(1) != cin * cout) shape_error("channel_mix", v.shape(), m.shape());
  const auto vv = v.values();
  const auto mv = m.values();
  std::vector<double> out(rows * 3 * cout, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* vr = vv.data() + r * 3 * cin;
    const double* mr = mv.data() + r * cin * cout;
    double* o = out.data() + r * 3 * cout;
    for (std::size_t i = 0; i < cin; ++i) {
      for (std::size_t j = 0; j < cout; ++j) {
        const double w = mr[i * cout + j];
        for (std::size_t k = 0; k < 3; ++k) o[j * 3 + k] += vr[i * 3 + k] * w;
      }
    }
  }
  const std::size_t iv = v.id(), im = m.id();
  return v.tape().record("channel_mix", {rows, 3 * cout}, std::move(out), {iv, im},
                         [iv, im, rows, cin, cout](Tape& t, std::size_t self) {
                           const auto g = t.grad(self);
                           const auto vv = t.value(iv);
                           const auto mv = t.value(im);
                           auto gv = t.grad_accumulator(iv);
                           auto gm = t.grad_accumulator(im);
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* gr = g.data() + r * 3 * cout;
                             for (std::size_t i = 0; i < cin; ++i) {
                               for (std::size_t j = 0; j < cout; ++j) {
                                 const std::size_t mi = r * cin * cout + i * cout + j;
                                 for (std::size_t k = 0; k < 3; ++k) {
                                   const std::size_t vi = r * 3 * cin + i * 3 + k;
                                   if (!gv.empty()) gv[vi] += gr[j * 3 + k] * mv[mi];
                                   if (!gm.empty()) gm[mi] += gr[j * 3 + k] * vv[vi];
                                 }
                               }
                             }
                           }
                         });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank2("softmax_cross_entropy", logits);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     to_string(logits.shape()));
  }
  if (n == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  const auto z = logits.values();
  std::vector<double> probs(n * c);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= c) {
      throw ConfigError("label " + std::to_string(labels[r]) + " out of range [0, " + std::to_string(c) + ")");
    }
    const double* zr = z.data() + r * c;
    const double zmax = *std::max_element(zr, zr + c);
    double denom = 0.0;
    for (std::size_t k = 0; k < c; ++k) denom += std::exp(zr[k] - zmax);
    for (std::size_t k = 0; k < c; ++k) probs[r * c + k] = std::exp(zr[k] - zmax) / denom;
    loss += -(zr[labels[r]] - zmax - std::log(denom));
  }
  loss /= static_cast<double>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  const std::size_t il = logits.id();
  return logits.tape().record("softmax_cross_entropy", {}, {loss}, {il},
                              [il, n, c, probs = std::move(probs), lab = std::move(lab)](Tape& t, std::size_t self) {
                                const double g = t.grad(self)[0] / static_cast<double>(n);
                                auto gl = t.grad_accumulator(il);
                                for (std::size_t r = 0; r < n; ++r) {
                                  for (std::size_t k = 0; k < c; ++k) {
                                    const double target = static_cast<int>(k) == lab[r] ? 1.0 : 0.0;
                                    gl[r * c + k] += g * (probs[r * c + k] - target);
                                  }
                                }
                              });
}

// ---------------------------------------------------------------------------

double finite_difference_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Shape& shape,
                               const std::vector<double>& x, double step) {
  Tape tape;
  const Tensor input = tape.variable(shape, x);
  tape.backward(f(tape, input));
  std::vector<double> analytic(input.grad().begin(), input.grad().end());
  analytic.resize(x.size(), 0.0);

  auto eval = [&](const std::vector<double>& point) {
    Tape t;
    return f(t, t.constant(shape, point)).item();
  };

  double worst = 0.0;
  std::vector<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = eval(probe);
    probe[i] = x[i] - step;
    const double down = eval(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-12));
  }
  return worst;
}

}  // namespace emnn::ad
