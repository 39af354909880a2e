#include <doctest.h>

#include "fd_oracle.hpp"
#include "mqf2/autodiff/evaluate.hpp"
#include "mqf2/autodiff/gradient.hpp"
#include "mqf2/errors.hpp"

#include <cmath>
#include <random>

using namespace mqf2::ad;
using mqf2::test::fd_gradient;
using mqf2::test::max_rel_error;

namespace {

Tensor vec(std::initializer_list<double> v) {
  Tensor t(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) t(i++) = x;
  return t;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("evaluate: hand-checked values") {
  {
    Graph g;
    Var x = g.leaf("x", 2, 1);
    Var y = g.leaf("y", 2, 1);
    Var root = dot(x, y);
    CHECK(evaluate(g, {{"x", vec({1, 2})}, {"y", vec({3, 4})}}, root)(0, 0) == doctest::Approx(11.0));
  }
  {
    Graph g;
    Var root = softplus(g.scalar(0.0));
    CHECK(evaluate(g, {}, root)(0, 0) == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(evaluate(g, {}, root)(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  {
    Graph g;
    Var v = g.leaf("v", 2, 1);
    CHECK(evaluate(g, {{"v", vec({3, 4})}}, squared_norm(v))(0, 0) == 25.0);
  }
}

TEST_CASE("evaluate: errors") {
  Graph g;
  Var x = g.leaf("x", 2, 1);
  Var y = g.leaf("y", 3, 1);
  CHECK_THROWS_AS(x + y, mqf2::ShapeError);
  CHECK_THROWS_AS(matmul(x, x), mqf2::ShapeError);
  Var root = sum(x);
  CHECK_THROWS_AS(evaluate(g, {}, root), mqf2::UnboundLeaf);
  CHECK_THROWS_AS(evaluate(g, {{"x", vec({1, 2, 3})}}, root), mqf2::ShapeError);
  CHECK_THROWS_AS(g.leaf("x", 1, 1), mqf2::ShapeError);
}

TEST_CASE("gradient: first and second order scalars") {
  Graph g;
  Var x = g.leaf("x", 1, 1);
  Var dsq = gradient(hadamard(x, x), x);
  CHECK(evaluate(g, {{"x", Tensor::Constant(1, 1, 3.0)}}, dsq)(0, 0) == doctest::Approx(6.0));

  Var cube = hadamard(hadamard(x, x), x);
  Var d2 = gradient(gradient(cube, x), x);
  CHECK(evaluate(g, {{"x", Tensor::Constant(1, 1, 2.0)}}, d2)(0, 0) == doctest::Approx(12.0));
}

TEST_CASE("gradient: non-scalar root is rejected") {
  Graph g;
  Var x = g.leaf("x", 2, 1);
  CHECK_THROWS_AS(gradient(x, x), mqf2::ShapeError);
}

TEST_CASE("gradient: softplus(w.x) against finite differences") {
  Graph g;
  Var w = g.leaf("w", 2, 1);
  Var x = g.leaf("x", 2, 1);
  Var f = softplus(dot(w, x));
  Var dw = gradient(f, w);

  const Tensor w0 = vec({1, 0});
  const Tensor x0 = vec({2, 1});
  const Tensor analytic = evaluate(g, {{"w", w0}, {"x", x0}}, dw);
  const Tensor fd = fd_gradient([&](const Tensor& wv) { return evaluate(g, {{"w", wv}, {"x", x0}}, f)(0, 0); }, w0);
  CHECK(max_rel_error(analytic, fd) < 1e-6);
  CHECK(analytic(0) == doctest::Approx(logistic(2.0) * 2.0).epsilon(1e-12));
  CHECK(analytic(1) == doctest::Approx(logistic(2.0) * 1.0).epsilon(1e-12));
}

TEST_CASE("gradient: leaves the root does not depend on get zeros") {
  Graph g;
  Var x = g.leaf("x", 2, 1);
  Var unused = g.leaf("u", 3, 2);
  GradientMap grads = gradient_all(sum(x));
  REQUIRE(grads.count("u") == 1);
  const Tensor gu = evaluate(g, {{"x", vec({1, 2})}, {"u", Tensor::Ones(3, 2)}}, grads.at("u"));
  CHECK(gu.isZero());
  (void)unused;
}

TEST_CASE("hessian: closed forms") {
  {
    Graph g;
    Var x = g.leaf("x", 3, 1);
    Var h = hessian(0.5 * squared_norm(x), x);
    CHECK(evaluate(g, {{"x", vec({0.3, -1, 2})}}, h).isApprox(Tensor::Identity(3, 3)));
  }
  {
    Graph g;
    Var x = g.leaf("x", 2, 1);
    Var x1 = row_slice(x, 0, 1);
    Var x2 = row_slice(x, 1, 1);
    Var f = hadamard(hadamard(x1, x1), x2);
    Tensor expected(2, 2);
    expected << 2, 2, 2, 0;
    CHECK(evaluate(g, {{"x", vec({1, 1})}}, hessian(f, x)).isApprox(expected));
  }
  {
    Graph g;
    Var x = g.leaf("x", 65, 1);
    CHECK_THROWS_AS(hessian(squared_norm(x), x), mqf2::ShapeError);
    CHECK_NOTHROW(hessian(squared_norm(x), x, 65));
  }
}

TEST_CASE("nested gradients of polynomials match closed-form second derivatives") {
  // f(x) = sum_i (c3 x_i^3 + c2 x_i^2 x_{i+1} + c1 x_i), second derivative by hand.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double c3 = unif(rng), c2 = unif(rng), c1 = unif(rng);
    Graph g;
    Var x = g.leaf("x", 2, 1);
    Var a = row_slice(x, 0, 1);
    Var b = row_slice(x, 1, 1);
    Var f = c3 * pow(a, 3.0) + c3 * pow(b, 3.0) + c2 * hadamard(hadamard(a, a), b) + c1 * a + c1 * b;
    Var h = hessian(f, x);
    const Tensor x0 = vec({unif(rng), unif(rng)});
    Tensor expected(2, 2);
    expected << 6 * c3 * x0(0) + 2 * c2 * x0(1), 2 * c2 * x0(0), 2 * c2 * x0(0), 6 * c3 * x0(1);
    const Tensor got = evaluate(g, {{"x", x0}}, h);
    CHECK((got - expected).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

namespace {

// Random smooth expression over two leaves of shape r x c. Each level picks
// an op whose derivative is continuous at the sampled points.
Var random_expr(Graph& g, std::mt19937_64& rng, Var x, Var y, int depth) {
  std::uniform_int_distribution<int> pick(0, 15);
  if (depth == 0) return pick(rng) % 2 == 0 ? x : y;
  Var a = random_expr(g, rng, x, y, depth - 1);
  Var b = random_expr(g, rng, x, y, depth - 1);
  const Index r = a.rows(), c = a.cols();
  switch (pick(rng)) {
    case 0: return a + b;
    case 1: return a - b;
    case 2: return hadamard(a, b);
    case 3: return 0.3 * matmul(matmul(a, transpose(b)), a);
    case 4: return softplus(a);
    case 5: return sigmoid(a) + b;
    case 6: return tanh(a);
    case 7: return exp(0.2 * a);
    case 8: return log(softplus(a) + 0.5);
    case 9: return pow(softplus(a) + 0.1, 1.5);
    case 10: return block_sum_cols(tile_cols(a, 3), 3) + group_sum_cols(repeat_cols(b, 2), 2);
    case 11: return pad_cols(col_slice(a, 0, c > 1 ? c - 1 : 1), 0, c) + b;
    case 12: return pad_rows(row_slice(a, r > 1 ? 1 : 0, r > 1 ? r - 1 : 1), r > 1 ? 1 : 0, r) + b;
    case 13: return scale_by(sum(hadamard(a, a)) * 0.1, b);
    case 14: return fill(sum(a), r, c) + b;
    default: return -a + 0.5;
  }
}

}  // namespace

TEST_CASE("property: gradient matches central differences on 100 random graphs") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 3);
  std::normal_distribution<double> normal(0.0, 0.7);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Graph g;
    const Index r = dim(rng), c = dim(rng);
    Var x = g.leaf("x", r, c);
    Var y = g.leaf("y", r, c);
    Tensor weights = Tensor::NullaryExpr(r, c, [&] { return normal(rng); });
    Var root = sum(hadamard(random_expr(g, rng, x, y, 3), g.constant(weights)));
    const Var wrt[] = {x, y};
    std::vector<Var> grads = gradient(root, wrt);

    const Tensor x0 = Tensor::NullaryExpr(r, c, [&] { return normal(rng); });
    const Tensor y0 = Tensor::NullaryExpr(r, c, [&] { return normal(rng); });
    Evaluator ev(g);
    ev.bind("x", x0);
    ev.bind("y", y0);
    ev.run({grads[0], grads[1]});

    auto f_of_x = [&](const Tensor& xv) { return evaluate(g, {{"x", xv}, {"y", y0}}, root)(0, 0); };
    auto f_of_y = [&](const Tensor& yv) { return evaluate(g, {{"x", x0}, {"y", yv}}, root)(0, 0); };
    CHECK(max_rel_error(ev.value(grads[0]), fd_gradient(f_of_x, x0)) <= 1e-4);
    CHECK(max_rel_error(ev.value(grads[1]), fd_gradient(f_of_y, y0)) <= 1e-4);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("property: hessian is symmetric") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Graph g;
    Var x = g.leaf("x", 4, 1);
    Tensor w1 = Tensor::NullaryExpr(5, 4, [&] { return normal(rng); });
    Tensor w2 = Tensor::NullaryExpr(1, 5, [&] { return normal(rng); });
    Var f = sum(matmul(g.constant(w2), softplus(matmul(g.constant(w1), x)))) + sum(tanh(hadamard(x, x)));
    const Tensor h = evaluate(g, {{"x", Tensor::NullaryExpr(4, 1, [&] { return normal(rng); })}}, hessian(f, x));
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + h.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("batched SPD ops: values and gradients") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = 3, batch = 2;
  Tensor packed(n * n, batch);
  for (Index b = 0; b < batch; ++b) {
    Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return normal(rng); });
    Eigen::MatrixXd spd = a * a.transpose() + Eigen::MatrixXd::Identity(n, n);
    packed.col(b) = Eigen::Map<Eigen::VectorXd>(spd.data(), n * n);
  }
  Graph g;
  Var m = g.leaf("m", n * n, batch);
  Var logdet = batch_logdet_spd(m, n);
  Var inv = batch_inverse_spd(m, n);
  Var prod = batch_matmul(m, inv, n);
  const Tensor ld = evaluate(g, {{"m", packed}}, logdet);
  const Tensor eye = evaluate(g, {{"m", packed}}, prod);
  for (Index b = 0; b < batch; ++b) {
    Eigen::Map<const Eigen::MatrixXd> mb(packed.col(b).data(), n, n);
    CHECK(ld(0, b) == doctest::Approx(std::log(mb.determinant())).epsilon(1e-12));
    CHECK(Eigen::Map<const Eigen::MatrixXd>(eye.col(b).data(), n, n).isApprox(Eigen::MatrixXd::Identity(n, n)));
  }

  // Gradient through logdet and a quadratic form of the inverse.
  Tensor weights = Tensor::NullaryExpr(n * n, batch, [&] { return normal(rng); });
  Var root = sum(logdet) + 0.3 * sum(hadamard(batch_transpose(inv, n), g.constant(weights)));
  Var dm = gradient(root, m);
  const Tensor analytic = evaluate(g, {{"m", packed}}, dm);
  const Tensor fd = fd_gradient([&](const Tensor& mv) { return evaluate(g, {{"m", mv}}, root)(0, 0); }, packed);
  CHECK(max_rel_error(analytic, fd) <= 1e-4);

  Tensor bad = packed;
  bad.col(0) *= -1.0;
  CHECK_THROWS_AS(evaluate(g, {{"m", bad}}, logdet), mqf2::HessianNotPD);
}

TEST_CASE("batch_hessian matches per-column hessian") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = 3, batch = 4;
  Tensor w = Tensor::NullaryExpr(6, n, [&] { return normal(rng); });
  Graph g;
  Var x = g.leaf("x", n, batch);
  Var pot = sum(softplus(matmul(g.constant(w), x))) + 0.5 * squared_norm(x);
  Var field = gradient(pot, x);
  Var packed = batch_hessian(field, x);

  const Tensor x0 = Tensor::NullaryExpr(n, batch, [&] { return normal(rng); });
  const Tensor hs = evaluate(g, {{"x", x0}}, packed);
  for (Index b = 0; b < batch; ++b) {
    Graph single;
    Var xs = single.leaf("x", n, 1);
    Var h = hessian(sum(softplus(matmul(single.constant(w), xs))) + 0.5 * squared_norm(xs), xs);
    const Tensor expected = evaluate(single, {{"x", Tensor(x0.col(b))}}, h);
    CHECK(Eigen::Map<const Eigen::MatrixXd>(hs.col(b).data(), n, n).isApprox(expected, 1e-12));
  }
}
