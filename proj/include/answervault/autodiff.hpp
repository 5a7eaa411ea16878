#pragma once

// Tape-based reverse-mode differentiation over 64-bit tensors of rank <= 2.
//
// A Graph records nodes in creation order, which is a topological order, so
// backward() walks the tape in reverse. Trainable state lives in Parameter
// objects owned by the caller; graph leaves reference them without copying and
// backward() accumulates straight into Parameter::grad.

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace answervault::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d);
  explicit Tensor(Shape s);  // zero-filled

  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor vector(std::vector<double> v);

  std::size_t size() const { return data.size(); }
};

class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Shape shape);

  const std::string& name() const { return name_; }
  const Shape& shape() const { return shape_; }
  std::span<double> value() { return value_; }
  std::span<const double> value() const { return value_; }
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }

  void zero_grad();

  // Row-level bookkeeping for gathered tables: only rows that received a
  // gradient are visited by zero_grad() and sgd_step().
  void mark_row(std::size_t row);
  bool all_rows_dirty() const { return all_dirty_; }
  const std::vector<std::size_t>& dirty_rows() const { return dirty_rows_; }
  void mark_all_dirty() { all_dirty_ = true; }

  // value -= lr * grad over dirty entries.
  void sgd_step(double learning_rate);

  bool operator==(const Parameter& other) const {
    return name_ == other.name_ && shape_ == other.shape_ && value_ == other.value_;
  }

 private:
  std::size_t row_width() const;

  std::string name_;
  Shape shape_;
  std::vector<double> value_;
  std::vector<double> grad_;
  std::vector<std::size_t> dirty_rows_;
  std::vector<char> row_dirty_;
  bool all_dirty_ = false;
};

struct Var {
  std::size_t index = 0;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var parameter(Parameter& p);
  // Read-only leaf: gradients reaching it stay in the graph.
  Var parameter(const Parameter& p);
  Var constant(Tensor t);
  Var scalar(double v) { return constant(Tensor::scalar(v)); }

  // table [rows x dim], ids -> [ids.size() x dim]
  Var embedding_gather(Var table, std::span<const int> ids);
  // mean of the first `length` rows of [n x dim] -> [dim]; zero vector when length == 0
  Var masked_mean_pool(Var matrix, std::size_t length);
  // W [out x in], b [out], x [in] -> [out]
  Var affine(Var weight, Var bias, Var x);
  Var relu(Var x);
  Var tanh(Var x);
  Var sigmoid(Var x);
  Var log(Var x);
  // elementwise clamp; gradient passes only strictly inside (lo, hi)
  Var clamp(Var x, double lo, double hi);
  Var euclidean_distance(Var u, Var v);
  Var cosine_similarity(Var u, Var v);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, double factor);
  Var add_scalar(Var x, double c);
  Var square(Var x);
  Var sum(Var x);
  Var sum(std::span<const Var> scalars);

  std::span<const double> value(Var v) const;
  double scalar_value(Var v) const;
  const Shape& shape(Var v) const { return nodes_.at(v.index).shape; }
  std::span<const double> node_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Requires a single-element loss. Intermediate gradients are reset on each
  // call; parameter gradients accumulate until Parameter::zero_grad().
  void backward(Var loss);

 private:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    Parameter* param = nullptr;  // set for trainable leaves
    const Parameter* frozen = nullptr;
    BackwardFn backward;
  };

  Var push(Shape shape, std::vector<double> value, BackwardFn backward);
  std::span<double> grad_of(std::size_t index);
  void require_vector(const char* op, Var v) const;
  void require_same_shape(const char* op, Var a, Var b) const;
  Var unary(Var x, double (*fn)(double), double (*dfn)(double y, double x));

  std::vector<Node> nodes_;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares backward() gradients to central differences
// (f(x+eps) - f(x-eps)) / (2 eps) for every coordinate of every parameter.
// Relative error uses max(|a|, |n|, 1e-8) as the denominator. Parameter
// gradients are left zeroed.
GradCheckResult grad_check(const std::function<Var(Graph&)>& build_loss,
                           std::span<Parameter* const> params, double eps = 1e-5);

}  // namespace answervault::ad
