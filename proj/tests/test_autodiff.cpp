#include <doctest.h>

#include <cmath>

#include "answervault/autodiff.hpp"
#include "answervault/random.hpp"
#include "support/gradient_suite.hpp"

using namespace answervault;
using namespace answervault::ad;

namespace {

std::vector<double> vals(const Graph& g, Var v) { return {g.value(v).begin(), g.value(v).end()}; }

}  // namespace

TEST_CASE("forward examples") {
  Graph g;
  auto o = g.constant(Tensor::vector({0, 0}));
  auto p = g.constant(Tensor::vector({3, 4}));
  CHECK(g.scalar_value(g.euclidean_distance(o, p)) == 5.0);
  CHECK(g.scalar_value(g.euclidean_distance(p, p)) == 0.0);
  CHECK(g.scalar_value(g.cosine_similarity(g.constant(Tensor::vector({1, 0})), g.constant(Tensor::vector({0, 1})))) == 0.0);
  CHECK(g.scalar_value(g.cosine_similarity(g.constant(Tensor::vector({2, 0})), g.constant(Tensor::vector({1, 0})))) == 1.0);
  CHECK(g.scalar_value(g.cosine_similarity(o, p)) == 0.0);

  auto x = g.constant(Tensor::vector({-1, 0.5}));
  CHECK(vals(g, g.relu(x)) == std::vector<double>{0, 0.5});
  CHECK(vals(g, g.sigmoid(g.constant(Tensor::vector({0})))) == std::vector<double>{0.5});
  CHECK(vals(g, g.clamp(x, -0.5, 0.2)) == std::vector<double>{-0.5, 0.2});

  auto w = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  auto b = g.constant(Tensor::vector({10, 20}));
  CHECK(vals(g, g.affine(w, b, g.constant(Tensor::vector({1, 1})))) == std::vector<double>{13, 27});

  auto table = g.constant(Tensor({3, 2}, {0, 0, 1, 2, 3, 4}));
  std::vector<int> ids{1, 2, 0};
  auto rows = g.embedding_gather(table, ids);
  CHECK(g.shape(rows) == Shape{3, 2});
  CHECK(vals(g, g.masked_mean_pool(rows, 2)) == std::vector<double>{2, 3});
  CHECK(vals(g, g.masked_mean_pool(rows, 0)) == std::vector<double>{0, 0});
}

TEST_CASE("shape errors") {
  Graph g;
  auto a = g.constant(Tensor::vector({1, 2}));
  auto b = g.constant(Tensor::vector({1, 2, 3}));
  CHECK_THROWS_AS(g.add(a, b), ShapeError);
  CHECK_THROWS_AS(g.euclidean_distance(a, b), ShapeError);
  CHECK_THROWS_AS(g.backward(a), ShapeError);
  auto table = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  std::vector<int> bad{2};
  CHECK_THROWS_AS(g.embedding_gather(table, bad), ShapeError);
  CHECK_THROWS_AS(Tensor({2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("backward on sum of squares") {
  Parameter x("x", {2});
  x.value()[0] = 1;
  x.value()[1] = 2;
  Graph g;
  g.backward(g.sum(g.square(g.parameter(x))));
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{2, 4});
}

TEST_CASE("constant loss leaves zero gradients") {
  Parameter x("x", {3});
  for (auto& v : x.value()) v = 1.5;
  Graph g;
  g.parameter(x);
  g.backward(g.scalar(7.0));
  for (double d : x.grad()) CHECK(d == 0.0);
}

TEST_CASE("gradients accumulate until zero_grad; frozen leaves do not write back") {
  Parameter x("x", {1});
  x.value()[0] = 3;
  for (int i = 0; i < 2; ++i) {
    Graph g;
    g.backward(g.square(g.parameter(x)));
  }
  CHECK(x.grad()[0] == 12.0);
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);

  const Parameter& frozen = x;
  Graph g;
  auto v = g.parameter(frozen);
  g.backward(g.square(v));
  CHECK(x.grad()[0] == 0.0);
  CHECK(g.node_grad(v)[0] == 6.0);
}

TEST_CASE("a shared leaf used twice receives both contributions") {
  Parameter x("x", {2});
  x.value()[0] = 1;
  x.value()[1] = -2;
  Graph g;
  auto a = g.parameter(x);
  g.backward(g.sum(g.mul(a, a)));
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == -4.0);
}

TEST_CASE("euclidean distance at u == v has a finite zero gradient") {
  Parameter u("u", {3});
  for (auto& v : u.value()) v = 0.25;
  Graph g;
  auto pu = g.parameter(u);
  g.backward(g.euclidean_distance(pu, g.constant(Tensor::vector({0.25, 0.25, 0.25}))));
  for (double d : u.grad()) {
    CHECK(std::isfinite(d));
    CHECK(d == 0.0);
  }
}

TEST_CASE("embedding rows: sparse bookkeeping and sgd touch only gathered rows") {
  Parameter t("t", {4, 2});
  for (auto& v : t.value()) v = 1.0;
  Graph g;
  std::vector<int> ids{2, 2, 0};
  g.backward(g.sum(g.embedding_gather(g.parameter(t), ids)));
  CHECK(t.grad()[4] == 2.0);
  CHECK(t.grad()[0] == 1.0);
  CHECK(t.grad()[2] == 0.0);
  t.sgd_step(0.5);
  CHECK(t.value()[4] == 0.0);
  CHECK(t.value()[0] == 0.5);
  CHECK(t.value()[2] == 1.0);
  t.zero_grad();
  for (double d : t.grad()) CHECK(d == 0.0);
}

TEST_CASE("masked_mean_pool ignores rows past length") {
  Rng rng(4);
  Parameter t("t", {5, 3});
  for (auto& v : t.value()) v = rng.uniform(-1, 1);
  std::vector<int> short_ids{3, 4, 0}, long_ids{3, 4, 0, 0, 0, 0};
  Graph g;
  auto a = g.masked_mean_pool(g.embedding_gather(g.parameter(std::as_const(t)), short_ids), 2);
  auto b = g.masked_mean_pool(g.embedding_gather(g.parameter(std::as_const(t)), long_ids), 2);
  CHECK(vals(g, a) == vals(g, b));
}

TEST_CASE("forward ops are bit-deterministic") {
  auto run = [] {
    Rng rng(8);
    Graph g;
    auto x = g.constant(gradient_suite::random_tensor({6}, rng));
    auto y = g.constant(gradient_suite::random_tensor({6}, rng));
    auto w = g.constant(gradient_suite::random_tensor({4, 6}, rng));
    auto b = g.constant(gradient_suite::random_tensor({4}, rng));
    auto h = g.tanh(g.affine(w, b, x));
    auto h2 = g.sigmoid(g.affine(w, b, y));
    return std::vector<double>{g.scalar_value(g.euclidean_distance(h, h2)), g.scalar_value(g.cosine_similarity(h, h2))};
  };
  CHECK(run() == run());
}

TEST_CASE("grad_check on a quadratic is essentially exact") {
  Parameter x("x", {4});
  Rng rng(2);
  for (auto& v : x.value()) v = rng.uniform(-2, 2);
  std::vector<Parameter*> ps{&x};
  auto r = grad_check([&](Graph& g) { return g.sum(g.square(g.parameter(x))); }, ps);
  CHECK(r.coordinates == 4);
  CHECK(r.max_relative_error < 1e-8);
  for (double d : x.grad()) CHECK(d == 0.0);
}

TEST_CASE("grad_check flags a wrong gradient") {
  // relu at exactly 0 has a one-sided analytic gradient; the check must see it.
  Parameter x("x", {1});
  x.value()[0] = 0.0;
  std::vector<Parameter*> ps{&x};
  auto r = grad_check([&](Graph& g) { return g.sum(g.relu(g.parameter(x))); }, ps);
  CHECK(r.max_relative_error > 1e-2);
  CHECK(r.worst_parameter == "x");
}

TEST_CASE("every op and loss graph passes grad_check over 10 seeds") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (const auto& c : gradient_suite::run_seed(seed)) {
      INFO(c.name << " seed " << c.seed << " worst " << c.result.worst_parameter << "[" << c.result.worst_index
                  << "] analytic " << c.result.analytic << " numeric " << c.result.numeric);
      CHECK(c.result.coordinates > 0);
      CHECK(c.result.max_relative_error < 1e-4);
      // hinge cases are only meaningful while the hinge is open
      if (c.name == "contrastive graph label 0" || c.name == "triplet graph") CHECK(c.loss > 0.0);
    }
  }
}
