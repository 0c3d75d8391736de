#include <doctest.h>

#include <sstream>

#include "baet/autodiff/checkpoint.hpp"
#include "baet/autodiff/gradcheck.hpp"
#include "baet/autodiff/graph.hpp"
#include "baet/autodiff/parameters.hpp"
#include "support.hpp"

using namespace baet::ad;

namespace {

using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

// Checks d/dx sum(W * f(x...)) against central differences for every input coordinate.
double primitive_error(const std::vector<Tensor>& inputs, const Builder& f, std::mt19937_64& rng) {
  Tensor weights;
  auto loss_at = [&](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) {
    Graph g;
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(g.variable(x));
    Var out = f(g, vars);
    if (weights.empty()) weights = testing::random_tensor(g.value(out).rows(), g.value(out).cols(), rng);
    Var loss = g.sum(g.mul(out, g.constant(weights)));
    if (grads) {
      g.backward(loss);
      for (Var v : vars) grads->push_back(g.grad(v));
    }
    return g.value(loss)[0];
  };
  std::vector<Tensor> analytic;
  loss_at(inputs, &analytic);
  double worst = 0.0;
  const double eps = 1e-5;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto plus = inputs;
      auto minus = inputs;
      plus[k][i] += eps;
      minus[k][i] -= eps;
      const double numeric = (loss_at(plus, nullptr) - loss_at(minus, nullptr)) / (2 * eps);
      const double a = analytic[k][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)}));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("tensor kernels and shapes") {
  Graph g;
  Var a = g.constant(Tensor(2, 3, 1.0));
  Var b = g.constant(Tensor(3, 4, 2.0));
  const Tensor& c = g.value(g.matmul(a, b));
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 4);
  CHECK(c(1, 3) == doctest::Approx(6.0));
  CHECK_THROWS_AS(g.matmul(a, a), ShapeMismatch);

  const Tensor& s = g.value(g.softmax_rows(g.constant(Tensor(2, 4))));
  for (double v : s.values()) CHECK(v == doctest::Approx(0.25));

  Var x = g.constant(Tensor(1, 2, {1.0, 5.0}));
  Var y = g.constant(Tensor(1, 2, {3.0, 2.0}));
  const std::vector<Var> parts{x, y};
  CHECK(g.value(g.max_elementwise(parts)) == Tensor(1, 2, {3.0, 5.0}));
}

TEST_CASE("backward of simple expressions") {
  SUBCASE("sum of squares gives 2x") {
    Graph g;
    Var x = g.variable(Tensor(2, 2, {1.0, -2.0, 3.0, 0.5}));
    g.backward(g.sum(g.mul(x, x)));
    CHECK(g.grad(x) == Tensor(2, 2, {2.0, -4.0, 6.0, 1.0}));
  }
  SUBCASE("sum(A B) gives ones * B^T") {
    std::mt19937_64 rng(3);
    Tensor A = testing::random_tensor(2, 3, rng);
    Tensor B = testing::random_tensor(3, 4, rng);
    Graph g;
    Var a = g.variable(A);
    Var b = g.variable(B);
    g.backward(g.sum(g.matmul(a, b)));
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 3; ++c) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < 4; ++j) row_sum += B(c, j);
        CHECK(g.grad(a)(r, c) == doctest::Approx(row_sum));
      }
    std::mt19937_64 rng2(4);
    CHECK(primitive_error({A, B}, [](Graph& gg, const std::vector<Var>& v) { return gg.matmul(v[0], v[1]); },
                          rng2) < 1e-6);
  }
  SUBCASE("constants receive no gradient") {
    Graph g;
    Var x = g.variable(Tensor(1, 2, {1.0, 2.0}), false);
    Var w = g.variable(Tensor(1, 2, {3.0, 4.0}));
    g.backward(g.sum(g.mul(x, w)));
    CHECK_FALSE(g.requires_grad(x));
    CHECK(g.grad(x) == Tensor(1, 2));
    CHECK(g.grad(w) == Tensor(1, 2, {1.0, 2.0}));
  }
  SUBCASE("fan-out sums both paths") {
    Graph g;
    Var x = g.variable(Tensor(1, 3, {0.3, -0.2, 0.9}));
    Var path1 = g.sum(g.tanh(x));
    Var path2 = g.sum(g.mul(x, x));
    g.backward(g.add(path1, path2));
    Graph g1;
    Var x1 = g1.variable(Tensor(1, 3, {0.3, -0.2, 0.9}));
    g1.backward(g1.sum(g1.tanh(x1)));
    Graph g2;
    Var x2 = g2.variable(Tensor(1, 3, {0.3, -0.2, 0.9}));
    g2.backward(g2.sum(g2.mul(x2, x2)));
    Tensor expected = g1.grad(x1);
    expected.add_scaled(g2.grad(x2));
    CHECK(testing::max_scaled_diff(g.grad(x), expected) < 1e-15);
  }
  SUBCASE("loss must be a finite scalar") {
    Graph g;
    Var x = g.variable(Tensor(1, 2, 1.0));
    CHECK_THROWS_AS(g.backward(x), NotScalarLoss);
    Var bad = g.sum(g.scale(x, std::numeric_limits<double>::infinity()));
    CHECK_THROWS_AS(g.backward(bad), NonFiniteLoss);
  }
}

TEST_CASE("every primitive matches central differences") {
  const auto mask = [](std::mt19937_64& rng, std::size_t n) {
    Mask m(n);
    for (auto& b : m) b = rng() % 3 != 0;
    m[rng() % n] = 1;
    return m;
  };
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed);
    const std::size_t r = 1 + rng() % 4;
    const std::size_t c = 1 + rng() % 4;
    const std::size_t k = 1 + rng() % 4;
    auto T = [&](std::size_t rows, std::size_t cols) { return testing::random_tensor(rows, cols, rng); };

    CHECK(primitive_error({T(r, k), T(k, c)}, [](Graph& g, const std::vector<Var>& v) { return g.matmul(v[0], v[1]); }, rng) < 1e-6);
    CHECK(primitive_error({T(r, c), T(r, c)}, [](Graph& g, const std::vector<Var>& v) { return g.add(v[0], v[1]); }, rng) < 1e-6);
    CHECK(primitive_error({T(r, c), T(1, c)}, [](Graph& g, const std::vector<Var>& v) { return g.add(v[0], v[1]); }, rng) < 1e-6);
    CHECK(primitive_error({T(r, c), T(r, c)}, [](Graph& g, const std::vector<Var>& v) { return g.sub(v[0], v[1]); }, rng) < 1e-6);
    CHECK(primitive_error({T(r, c), T(r, c)}, [](Graph& g, const std::vector<Var>& v) { return g.mul(v[0], v[1]); }, rng) < 1e-6);
    CHECK(primitive_error({T(r, c)}, [](Graph& g, const std::vector<Var>& v) { return g.scale(v[0], -1.7); }, rng) < 1e-6);
    CHECK(primitive_error({T(r, c), T(r, 1)}, [](Graph& g, const std::vector<Var>& v) { return g.row_scale(v[0], v[1]); }, rng) < 1e-6);
    CHECK(primitive_error({T(r, c), T(k, c)}, [](Graph& g, const std::vector<Var>& v) { return g.concat_rows(v); }, rng) < 1e-6);
    CHECK(primitive_error({T(r, c), T(r, k)}, [](Graph& g, const std::vector<Var>& v) { return g.concat_cols(v[0], v[1]); }, rng) < 1e-6);
    CHECK(primitive_error({T(r, c)}, [](Graph& g, const std::vector<Var>& v) { return g.transpose(v[0]); }, rng) < 1e-6);
    CHECK(primitive_error({T(r, c)}, [](Graph& g, const std::vector<Var>& v) { return g.sigmoid(v[0]); }, rng) < 1e-6);
    CHECK(primitive_error({T(r, c)}, [](Graph& g, const std::vector<Var>& v) { return g.tanh(v[0]); }, rng) < 1e-6);
    CHECK(primitive_error({T(r, c)}, [](Graph& g, const std::vector<Var>& v) { return g.softmax_rows(v[0]); }, rng) < 1e-6);
    CHECK(primitive_error({T(r, c)}, [](Graph& g, const std::vector<Var>& v) { return g.sum(v[0]); }, rng) < 1e-6);
    CHECK(primitive_error({T(r, c)}, [](Graph& g, const std::vector<Var>& v) { return g.sum_squares(v[0]); }, rng) < 1e-6);
    CHECK(primitive_error({T(r, c), T(r, c), T(r, c)}, [](Graph& g, const std::vector<Var>& v) { return g.max_elementwise(v); }, rng) < 1e-6);

    const Mask key_mask = mask(rng, k);
    CHECK(primitive_error({T(r, c), T(k, c), T(k, c)},
                          [&](Graph& g, const std::vector<Var>& v) { return g.attention(v[0], v[1], v[2], key_mask); },
                          rng) < 1e-6);
    const Mask row_mask = mask(rng, r);
    CHECK(primitive_error({T(r, c)}, [&](Graph& g, const std::vector<Var>& v) { return g.mean_rows(v[0], row_mask); }, rng) < 1e-6);

    const std::vector<std::size_t> idx{rng() % r, rng() % r, 0};
    CHECK(primitive_error({T(r, c)}, [&](Graph& g, const std::vector<Var>& v) { return g.gather_rows(v[0], idx); }, rng) < 1e-6);

    const std::uint64_t drop_seed = rng();
    CHECK(primitive_error({T(r, c)},
                          [&](Graph& g, const std::vector<Var>& v) {
                            std::mt19937_64 local(drop_seed);
                            return g.dropout(v[0], 0.5, Mode::train, local);
                          },
                          rng) < 1e-6);

    const std::size_t label = rng() % c;
    CHECK(primitive_error({T(1, c)},
                          [&](Graph& g, const std::vector<Var>& v) { return g.nll(g.softmax_rows(v[0]), label); },
                          rng) < 1e-6);
  }
}

TEST_CASE("attention masking and saved probabilities") {
  std::mt19937_64 rng(5);
  Graph g;
  Var q = g.constant(testing::random_tensor(3, 4, rng));
  Var k = g.constant(testing::random_tensor(3, 4, rng));
  Var v = g.constant(testing::random_tensor(3, 4, rng));
  const Mask m{1, 0, 1};
  Var out = g.attention(q, k, v, m);
  const Tensor& p = g.saved(out);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(p(r, 1) == 0.0);
    CHECK(p(r, 0) + p(r, 2) == doctest::Approx(1.0).epsilon(1e-12));
  }
  const Mask none{0, 0, 0};
  const Tensor& zero = g.value(g.attention(q, k, v, none));
  for (double x : zero.values()) CHECK(x == 0.0);
}

TEST_CASE("mean_rows, dropout, nll edge cases") {
  Graph g;
  Var x = g.constant(Tensor(3, 2, {0, 2, 2, 0, 100, 100}));
  const Mask m{1, 1, 0};
  CHECK(g.value(g.mean_rows(x, m)) == Tensor(1, 2, {1.0, 1.0}));
  const Mask none{0, 0, 0};
  CHECK_THROWS_AS(g.mean_rows(x, none), AllPadding);

  std::mt19937_64 rng(11);
  Var big = g.constant(Tensor(100, 100, 1.0));
  CHECK(g.value(g.dropout(big, 0.5, Mode::eval, rng)) == g.value(big));
  const Tensor& dropped = g.value(g.dropout(big, 0.5, Mode::train, rng));
  double total = 0.0;
  for (double d : dropped.values()) {
    CHECK((d == 0.0 || d == doctest::Approx(2.0)));
    total += d;
  }
  CHECK(total / 10000.0 == doctest::Approx(1.0).epsilon(0.05));

  Graph h;
  Var p = h.variable(Tensor(1, 2, {1.0, 0.0}));
  Var loss = h.nll(p, 1);
  CHECK(h.value(loss)[0] == doctest::Approx(-std::log(1e-12)));
  h.backward(loss);
  CHECK(h.grad(p) == Tensor(1, 2));
}

TEST_CASE("sparse embedding gradients") {
  Tensor table(5, 2, 1.0);
  Graph g;
  Var t = g.parameter(table, true);
  const std::vector<std::size_t> idx{3, 1, 3};
  g.backward(g.sum(g.gather_rows(t, idx)));
  Tensor dense(5, 2);
  g.accumulate_grad(t, dense);
  CHECK(dense == Tensor(5, 2, {0, 0, 1, 1, 0, 0, 2, 2, 0, 0}));
}

TEST_CASE("grad_check") {
  SUBCASE("quadratic loss is exact to 1e-7") {
    ParameterSet params;
    std::mt19937_64 rng(2);
    params.add("w", testing::random_tensor(3, 3, rng));
    params.add("b", testing::random_tensor(1, 3, rng), ParamKind::bias);
    auto build = [](ParameterBinding& b) {
      Graph& g = b.graph();
      return g.add(g.sum_squares(b["w"]), g.scale(g.sum_squares(b["b"]), 3.0));
    };
    const Tensor before = params["w"];
    const GradCheckReport r = grad_check(build, params);
    CHECK(r.max_relative_error < 1e-7);
    CHECK(r.coordinates == 12);
    CHECK(params["w"] == before);
  }
  SUBCASE("no parameters") {
    ParameterSet params;
    auto build = [](ParameterBinding& b) { return b.graph().constant(Tensor(1, 1, 2.0)); };
    CHECK(grad_check(build, params).max_relative_error == 0.0);
  }
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(9);
  ParameterSet params;
  params.add("post.embedding", testing::random_tensor(6, 4, rng), ParamKind::embedding);
  params.add("pred.by", Tensor(1, 2, {0.5, -0.25}), ParamKind::bias);
  std::stringstream buf;
  save_checkpoint(params, buf);
  const ParameterSet loaded = load_checkpoint(buf);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.name(0) == "post.embedding");
  CHECK(loaded.kind(0) == ParamKind::embedding);
  CHECK(loaded.kind(1) == ParamKind::bias);
  CHECK(loaded["pred.by"] == params["pred.by"]);
  for (std::size_t i = 0; i < params.value(0).size(); ++i)
    CHECK(loaded.value(0)[i] == static_cast<double>(static_cast<float>(params.value(0)[i])));

  std::stringstream bad("NOTACKPT");
  CHECK_THROWS_AS(load_checkpoint(bad), CheckpointError);
  std::string truncated = buf.str().substr(0, 30);
  std::stringstream cut(truncated);
  CHECK_THROWS_AS(load_checkpoint(cut), CheckpointError);
}
