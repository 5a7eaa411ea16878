#include "answervault/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace answervault::ad {

namespace {

constexpr double kDistanceFloor = 1e-12;
constexpr double kNormFloor = 1e-12;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
}

Tensor::Tensor(Shape s) : shape(std::move(s)), data(numel(shape), 0.0) {}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

// ---------------------------------------------------------------------------
// Parameter

Parameter::Parameter(std::string name, Shape shape)
    : name_(std::move(name)),
      shape_(std::move(shape)),
      value_(numel(shape_), 0.0),
      grad_(numel(shape_), 0.0) {
  if (shape_.size() == 2) row_dirty_.assign(shape_[0], 0);
}

std::size_t Parameter::row_width() const { return shape_.size() == 2 ? shape_[1] : value_.size(); }

void Parameter::mark_row(std::size_t row) {
  if (all_dirty_ || row_dirty_.empty()) {
    all_dirty_ = true;
    return;
  }
  if (!row_dirty_[row]) {
    row_dirty_[row] = 1;
    dirty_rows_.push_back(row);
  }
}

void Parameter::zero_grad() {
  if (all_dirty_ || row_dirty_.empty()) {
    std::fill(grad_.begin(), grad_.end(), 0.0);
  } else {
    const std::size_t w = row_width();
    for (auto r : dirty_rows_) std::fill_n(grad_.begin() + static_cast<std::ptrdiff_t>(r * w), w, 0.0);
  }
  for (auto r : dirty_rows_) row_dirty_[r] = 0;
  dirty_rows_.clear();
  all_dirty_ = false;
}

void Parameter::sgd_step(double learning_rate) {
  if (all_dirty_ || row_dirty_.empty()) {
    for (std::size_t i = 0; i < value_.size(); ++i) value_[i] -= learning_rate * grad_[i];
    return;
  }
  const std::size_t w = row_width();
  // Ascending row order keeps the update sequence independent of visit order.
  std::vector<std::size_t> rows = dirty_rows_;
  std::sort(rows.begin(), rows.end());
  for (auto r : rows) {
    for (std::size_t j = r * w; j < (r + 1) * w; ++j) value_[j] -= learning_rate * grad_[j];
  }
}

// ---------------------------------------------------------------------------
// Graph plumbing

Var Graph::push(Shape shape, std::vector<double> value, BackwardFn backward) {
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(Parameter& p) {
  Node n;
  n.shape = p.shape();
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(const Parameter& p) {
  Node n;
  n.shape = p.shape();
  n.frozen = &p;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::constant(Tensor t) { return push(std::move(t.shape), std::move(t.data), nullptr); }

std::span<const double> Graph::value(Var v) const {
  const Node& n = nodes_.at(v.index);
  if (n.param) return std::as_const(*n.param).value();
  if (n.frozen) return n.frozen->value();
  return n.value;
}

double Graph::scalar_value(Var v) const {
  auto s = value(v);
  if (s.size() != 1) throw ShapeError("scalar_value: node has shape " + shape_string(shape(v)));
  return s[0];
}

std::span<const double> Graph::node_grad(Var v) const {
  const Node& n = nodes_.at(v.index);
  if (n.param) return std::as_const(*n.param).grad();
  return n.grad;
}

std::span<double> Graph::grad_of(std::size_t index) {
  Node& n = nodes_[index];
  if (n.param) {
    n.param->mark_all_dirty();
    return n.param->grad();
  }
  return n.grad;
}

void Graph::require_vector(const char* op, Var v) const {
  if (shape(v).size() != 1) {
    throw ShapeError(std::string(op) + ": expected a vector, got " + shape_string(shape(v)));
  }
}

void Graph::require_same_shape(const char* op, Var a, Var b) const {
  if (shape(a) != shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(shape(a)) + " vs " +
                     shape_string(shape(b)));
  }
}

void Graph::backward(Var loss) {
  if (numel(shape(loss)) != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_string(shape(loss)));
  }
  for (std::size_t i = 0; i <= loss.index; ++i) {
    Node& n = nodes_[i];
    if (!n.param) n.grad.assign(n.frozen ? n.frozen->value().size() : n.value.size(), 0.0);
  }
  if (nodes_[loss.index].param) {
    grad_of(loss.index)[0] += 1.0;
    return;
  }
  nodes_[loss.index].grad[0] = 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this, i);
  }
}

// ---------------------------------------------------------------------------
// Ops

Var Graph::embedding_gather(Var table, std::span<const int> ids) {
  const Shape& ts = shape(table);
  if (ts.size() != 2) throw ShapeError("embedding_gather: table must be 2-D, got " + shape_string(ts));
  const std::size_t rows = ts[0], dim = ts[1];
  auto tv = value(table);
  std::vector<double> out(ids.size() * dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw ShapeError("embedding_gather: id " + std::to_string(ids[i]) + " out of range for table " +
                       shape_string(ts));
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i]) * static_cast<std::ptrdiff_t>(dim), dim,
                out.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  std::vector<int> idv(ids.begin(), ids.end());
  const std::size_t t = table.index;
  return push({ids.size(), dim}, std::move(out), [t, idv = std::move(idv), dim](Graph& g, std::size_t self) {
    const auto& gout = g.nodes_[self].grad;
    Node& tn = g.nodes_[t];
    std::span<double> gt = tn.param ? tn.param->grad() : std::span<double>(tn.grad);
    for (std::size_t i = 0; i < idv.size(); ++i) {
      const auto row = static_cast<std::size_t>(idv[i]);
      const double* src = gout.data() + i * dim;
      bool any = false;
      for (std::size_t j = 0; j < dim; ++j) any |= src[j] != 0.0;
      if (!any) continue;
      if (tn.param) tn.param->mark_row(row);
      double* dst = gt.data() + row * dim;
      for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
    }
  });
}

Var Graph::masked_mean_pool(Var matrix, std::size_t length) {
  const Shape& ms = shape(matrix);
  if (ms.size() != 2) throw ShapeError("masked_mean_pool: expected 2-D input, got " + shape_string(ms));
  const std::size_t n = ms[0], dim = ms[1];
  if (length > n) {
    throw ShapeError("masked_mean_pool: length " + std::to_string(length) + " exceeds rows of " +
                     shape_string(ms));
  }
  auto mv = value(matrix);
  std::vector<double> out(dim, 0.0);
  if (length > 0) {
    for (std::size_t i = 0; i < length; ++i)
      for (std::size_t j = 0; j < dim; ++j) out[j] += mv[i * dim + j];
    const double inv = 1.0 / static_cast<double>(length);
    for (auto& x : out) x *= inv;
  }
  const std::size_t m = matrix.index;
  return push({dim}, std::move(out), [m, length, dim](Graph& g, std::size_t self) {
    if (length == 0) return;
    const auto& gout = g.nodes_[self].grad;
    auto gm = g.grad_of(m);
    const double inv = 1.0 / static_cast<double>(length);
    for (std::size_t i = 0; i < length; ++i)
      for (std::size_t j = 0; j < dim; ++j) gm[i * dim + j] += gout[j] * inv;
  });
}

Var Graph::affine(Var weight, Var bias, Var x) {
  const Shape& ws = shape(weight);
  if (ws.size() != 2 || shape(bias) != Shape{ws[0]} || shape(x) != Shape{ws[1]}) {
    throw ShapeError("affine: incompatible shapes W" + shape_string(ws) + " b" + shape_string(shape(bias)) +
                     " x" + shape_string(shape(x)));
  }
  const std::size_t out_dim = ws[0], in_dim = ws[1];
  auto wv = value(weight);
  auto bv = value(bias);
  auto xv = value(x);
  std::vector<double> out(out_dim);
  for (std::size_t i = 0; i < out_dim; ++i) out[i] = bv[i] + dot(wv.subspan(i * in_dim, in_dim), xv);
  const std::size_t w = weight.index, b = bias.index, xi = x.index;
  return push({out_dim}, std::move(out), [w, b, xi, out_dim, in_dim](Graph& g, std::size_t self) {
    const auto& gout = g.nodes_[self].grad;
    auto wv = g.value(Var{w});
    auto xv = g.value(Var{xi});
    auto gw = g.grad_of(w);
    auto gb = g.grad_of(b);
    auto gx = g.grad_of(xi);
    for (std::size_t i = 0; i < out_dim; ++i) {
      const double go = gout[i];
      if (go == 0.0) continue;
      gb[i] += go;
      for (std::size_t j = 0; j < in_dim; ++j) {
        gw[i * in_dim + j] += go * xv[j];
        gx[j] += go * wv[i * in_dim + j];
      }
    }
  });
}

Var Graph::unary(Var x, double (*fn)(double), double (*dfn)(double y, double x)) {
  auto xv = value(x);
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fn(xv[i]);
  const std::size_t xi = x.index;
  return push(shape(x), std::move(out), [xi, dfn](Graph& g, std::size_t self) {
    const auto& node = g.nodes_[self];
    auto xv = g.value(Var{xi});
    auto gx = g.grad_of(xi);
    for (std::size_t i = 0; i < node.value.size(); ++i) gx[i] += node.grad[i] * dfn(node.value[i], xv[i]);
  });
}

Var Graph::relu(Var x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double, double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var Graph::tanh(Var x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double y, double) { return 1.0 - y * y; });
}

Var Graph::sigmoid(Var x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double y, double) { return y * (1.0 - y); });
}

Var Graph::log(Var x) {
  for (double v : value(x)) {
    if (!(v > 0.0)) throw std::domain_error("log: non-positive input " + std::to_string(v));
  }
  return unary(
      x, [](double v) { return std::log(v); }, [](double, double v) { return 1.0 / v; });
}

Var Graph::clamp(Var x, double lo, double hi) {
  auto xv = value(x);
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::clamp(xv[i], lo, hi);
  const std::size_t xi = x.index;
  return push(shape(x), std::move(out), [xi, lo, hi](Graph& g, std::size_t self) {
    const auto& node = g.nodes_[self];
    auto xv = g.value(Var{xi});
    auto gx = g.grad_of(xi);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > lo && xv[i] < hi) gx[i] += node.grad[i];
    }
  });
}

Var Graph::euclidean_distance(Var u, Var v) {
  require_vector("euclidean_distance", u);
  require_same_shape("euclidean_distance", u, v);
  auto uv = value(u);
  auto vv = value(v);
  double ss = 0.0;
  for (std::size_t i = 0; i < uv.size(); ++i) {
    const double d = uv[i] - vv[i];
    ss += d * d;
  }
  const std::size_t ui = u.index, vi = v.index;
  return push({}, {std::sqrt(ss)}, [ui, vi](Graph& g, std::size_t self) {
    const double dist = std::max(g.nodes_[self].value[0], kDistanceFloor);
    const double go = g.nodes_[self].grad[0] / dist;
    auto uv = g.value(Var{ui});
    auto vv = g.value(Var{vi});
    auto gu = g.grad_of(ui);
    auto gv = g.grad_of(vi);
    for (std::size_t i = 0; i < uv.size(); ++i) {
      const double d = (uv[i] - vv[i]) * go;
      gu[i] += d;
      gv[i] -= d;
    }
  });
}

Var Graph::cosine_similarity(Var u, Var v) {
  require_vector("cosine_similarity", u);
  require_same_shape("cosine_similarity", u, v);
  auto uv = value(u);
  auto vv = value(v);
  const double nu = std::sqrt(dot(uv, uv));
  const double nv = std::sqrt(dot(vv, vv));
  const bool degenerate = nu * nv < kNormFloor;
  const double c = degenerate ? 0.0 : dot(uv, vv) / (nu * nv);
  const std::size_t ui = u.index, vi = v.index;
  return push({}, {c}, [ui, vi, nu, nv, c, degenerate](Graph& g, std::size_t self) {
    if (degenerate) return;
    const double go = g.nodes_[self].grad[0];
    auto uv = g.value(Var{ui});
    auto vv = g.value(Var{vi});
    auto gu = g.grad_of(ui);
    auto gv = g.grad_of(vi);
    // d cos / du = v/(|u||v|) - cos * u/|u|^2
    for (std::size_t i = 0; i < uv.size(); ++i) {
      gu[i] += go * (vv[i] / (nu * nv) - c * uv[i] / (nu * nu));
      gv[i] += go * (uv[i] / (nu * nv) - c * vv[i] / (nv * nv));
    }
  });
}

Var Graph::add(Var a, Var b) {
  require_same_shape("add", a, b);
  auto av = value(a);
  auto bv = value(b);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ai = a.index, bi = b.index;
  return push(shape(a), std::move(out), [ai, bi](Graph& g, std::size_t self) {
    const auto& gout = g.nodes_[self].grad;
    auto ga = g.grad_of(ai);
    for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
    auto gb = g.grad_of(bi);
    for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i];
  });
}

Var Graph::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var Graph::mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  auto av = value(a);
  auto bv = value(b);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ai = a.index, bi = b.index;
  return push(shape(a), std::move(out), [ai, bi](Graph& g, std::size_t self) {
    const auto& gout = g.nodes_[self].grad;
    auto av = g.value(Var{ai});
    auto bv = g.value(Var{bi});
    auto ga = g.grad_of(ai);
    for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * bv[i];
    auto gb = g.grad_of(bi);
    for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i] * av[i];
  });
}

Var Graph::scale(Var x, double factor) {
  auto xv = value(x);
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  const std::size_t xi = x.index;
  return push(shape(x), std::move(out), [xi, factor](Graph& g, std::size_t self) {
    const auto& gout = g.nodes_[self].grad;
    auto gx = g.grad_of(xi);
    for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i] * factor;
  });
}

Var Graph::add_scalar(Var x, double c) {
  auto xv = value(x);
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + c;
  const std::size_t xi = x.index;
  return push(shape(x), std::move(out), [xi](Graph& g, std::size_t self) {
    const auto& gout = g.nodes_[self].grad;
    auto gx = g.grad_of(xi);
    for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i];
  });
}

Var Graph::square(Var x) {
  return unary(
      x, [](double v) { return v * v; }, [](double, double v) { return 2.0 * v; });
}

Var Graph::sum(Var x) {
  double s = 0.0;
  for (double v : value(x)) s += v;
  const std::size_t xi = x.index;
  return push({}, {s}, [xi](Graph& g, std::size_t self) {
    const double go = g.nodes_[self].grad[0];
    auto gx = g.grad_of(xi);
    for (auto& v : gx) v += go;
  });
}

Var Graph::sum(std::span<const Var> scalars) {
  double s = 0.0;
  std::vector<std::size_t> idx;
  idx.reserve(scalars.size());
  for (Var v : scalars) {
    s += scalar_value(v);
    idx.push_back(v.index);
  }
  return push({}, {s}, [idx = std::move(idx)](Graph& g, std::size_t self) {
    const double go = g.nodes_[self].grad[0];
    for (auto i : idx) g.grad_of(i)[0] += go;
  });
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const std::function<Var(Graph&)>& build_loss,
                           std::span<Parameter* const> params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");

  for (auto* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(build_loss(g));
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.emplace_back(p->grad().begin(), p->grad().end());
  for (auto* p : params) p->zero_grad();

  auto evaluate = [&]() {
    Graph g;
    return g.scalar_value(build_loss(g));
  };

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k]->value();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = evaluate();
      values[i] = saved - eps;
      const double minus = evaluate();
      values[i] = saved;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (rel > result.max_relative_error || !std::isfinite(rel)) {
        result.max_relative_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
        result.worst_parameter = params[k]->name();
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace answervault::ad
