#include <charprobe/error.hpp>
#include <charprobe/rng.hpp>
#include <charprobe/tensor.hpp>

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

using namespace charprobe;
using charprobe::test::central_difference;
using charprobe::test::random_matrix;
using charprobe::test::relative_error;
using charprobe::test::weighted_sum;

namespace {

// Builds loss = sum(op(params...) .* r) and compares every parameter
// coordinate's analytic gradient against central differences.
double worst_gradient_error(ParameterSet& params,
                            const std::function<NodeId(Graph&, std::vector<NodeId>&)>& op,
                            std::uint64_t seed) {
  Rng rng(seed);
  Matrix r;
  {
    Graph g;
    std::vector<NodeId> in;
    for (std::size_t i = 0; i < params.size(); ++i) in.push_back(g.parameter(params[i]));
    const NodeId y = op(g, in);
    r = random_matrix(g.value(y).rows(), g.value(y).cols(), rng);
  }
  auto loss = [&] {
    Graph g;
    std::vector<NodeId> in;
    for (std::size_t i = 0; i < params.size(); ++i) in.push_back(g.parameter(params[i]));
    return g.scalar(weighted_sum(g, op(g, in), r));
  };
  params.zero_grad();
  {
    Graph g;
    std::vector<NodeId> in;
    for (std::size_t i = 0; i < params.size(); ++i) in.push_back(g.parameter(params[i]));
    g.backward(weighted_sum(g, op(g, in), r));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      const double numeric = central_difference(p.value, k, loss);
      worst = std::max(worst, relative_error(p.grad.data()[k], numeric));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul values") {
  Graph g;
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  CHECK(g.value(g.matmul(g.input(Matrix::Identity(2, 2)), g.input(a))) == a);
  Matrix row(1, 2), col(2, 1);
  row << 1, 2;
  col << 3, 4;
  CHECK(g.scalar(g.matmul(g.input(row), g.input(col))) == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Graph g;
  const NodeId a = g.input(Matrix::Zero(2, 3));
  const NodeId b = g.input(Matrix::Zero(2, 3));
  try {
    g.matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string what = e.what();
    CHECK(what.find("[2x3]") != std::string::npos);
    CHECK(what.find("[2x3]", what.find("[2x3]") + 1) != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(11);
  ParameterSet ps;
  ps.add("a", random_matrix(3, 4, rng));
  ps.add("b", random_matrix(4, 2, rng));
  CHECK(worst_gradient_error(ps, [](Graph& g, auto& in) { return g.matmul(in[0], in[1]); }, 1) <
        1e-5);
}

TEST_CASE("elementwise values and shape checks") {
  Graph g;
  CHECK(g.scalar(g.tanh(g.input(Matrix::Zero(1, 1)))) == 0.0);
  CHECK(g.scalar(g.sigmoid(g.input(Matrix::Zero(1, 1)))) == 0.5);
  const NodeId a = g.input(Matrix::Ones(2, 2));
  const NodeId b = g.input(Matrix::Ones(2, 1));
  CHECK_THROWS_AS(g.add(a, b), DimensionError);
  CHECK_THROWS_AS(g.mul(a, b), DimensionError);
  Matrix x(1, 3);
  x << -2.0, 0.5, 3.0;
  const Matrix s = g.value(g.sigmoid(g.input(x)));
  for (int k = 0; k < 3; ++k) CHECK(s(0, k) == doctest::Approx(1.0 / (1.0 + std::exp(-x(0, k)))).epsilon(1e-15));
}

TEST_CASE("tanh gradient at 1 matches finite difference") {
  ParameterSet ps;
  ps.add("x", Matrix::Constant(1, 1, 1.0));
  Graph g;
  g.backward(g.tanh(g.parameter(ps.at("x"))));
  auto f = [&] {
    Graph h;
    return h.scalar(h.tanh(h.input(ps.at("x").value)));
  };
  const double numeric = central_difference(ps.at("x").value, 0, f);
  CHECK(std::fabs(ps.at("x").grad(0, 0) - numeric) < 1e-6);
  const double t = std::tanh(1.0);
  CHECK(ps.at("x").grad(0, 0) == doctest::Approx(1.0 - t * t).epsilon(1e-14));
}

TEST_CASE("elementwise and structural gradients match finite differences") {
  Rng rng(5);
  SUBCASE("add") {
    ParameterSet ps;
    ps.add("a", random_matrix(3, 2, rng));
    ps.add("b", random_matrix(3, 2, rng));
    CHECK(worst_gradient_error(ps, [](Graph& g, auto& in) { return g.add(in[0], in[1]); }, 2) < 1e-6);
  }
  SUBCASE("mul") {
    ParameterSet ps;
    ps.add("a", random_matrix(3, 2, rng));
    ps.add("b", random_matrix(3, 2, rng));
    CHECK(worst_gradient_error(ps, [](Graph& g, auto& in) { return g.mul(in[0], in[1]); }, 3) < 1e-6);
  }
  SUBCASE("tanh and sigmoid") {
    ParameterSet ps;
    ps.add("a", random_matrix(4, 3, rng, -2.0, 2.0));
    CHECK(worst_gradient_error(ps, [](Graph& g, auto& in) { return g.tanh(in[0]); }, 4) < 1e-6);
    CHECK(worst_gradient_error(ps, [](Graph& g, auto& in) { return g.sigmoid(in[0]); }, 5) < 1e-6);
  }
  SUBCASE("add_bias with column and row bias") {
    ParameterSet ps;
    ps.add("x", random_matrix(4, 3, rng));
    ps.add("b", random_matrix(3, 1, rng));
    ps.add("r", random_matrix(1, 3, rng));
    CHECK(worst_gradient_error(ps, [](Graph& g, auto& in) { return g.add_bias(g.add_bias(in[0], in[1]), in[2]); }, 6) < 1e-6);
  }
  SUBCASE("concat and slice") {
    ParameterSet ps;
    ps.add("a", random_matrix(3, 1, rng));
    ps.add("b", random_matrix(2, 1, rng));
    CHECK(worst_gradient_error(ps, [](Graph& g, auto& in) { return g.slice(g.concat(in[0], in[1]), 1, 3); }, 7) < 1e-6);
  }
}

TEST_CASE("add_bias adds the vector to every row") {
  Graph g;
  Matrix x = Matrix::Zero(2, 3);
  Matrix b(3, 1);
  b << 1, 2, 3;
  const Matrix y = g.value(g.add_bias(g.input(x), g.input(b)));
  CHECK(y.row(0) == b.transpose());
  CHECK(y.row(1) == b.transpose());
  CHECK_THROWS_AS(g.add_bias(g.input(x), g.input(Matrix::Zero(2, 1))), DimensionError);
}

TEST_CASE("concat and slice values and errors") {
  Graph g;
  Matrix a(2, 1), b(1, 1);
  a << 1, 2;
  b << 3;
  const NodeId c = g.concat(g.input(a), g.input(b));
  CHECK(g.value(c) == (Matrix(3, 1) << 1, 2, 3).finished());
  CHECK(g.value(g.slice(c, 1, 2)) == (Matrix(2, 1) << 2, 3).finished());
  CHECK_THROWS_AS(g.slice(c, 2, 2), IndexError);
  CHECK_THROWS_AS(g.concat(g.input(Matrix::Zero(2, 2)), g.input(b)), DimensionError);
}

TEST_CASE("lookup") {
  ParameterSet ps;
  ps.add("table", Matrix::Identity(3, 3));
  Graph g;
  const NodeId t = g.parameter(ps.at("table"));
  CHECK(g.value(g.lookup(t, 1)) == (Matrix(3, 1) << 0, 1, 0).finished());
  CHECK_THROWS_AS(g.lookup(t, 3), IndexError);
  CHECK_THROWS_AS(g.lookup(t, -1), IndexError);

  SUBCASE("two lookups of one row sum their gradients") {
    Graph h;
    const NodeId tab = h.parameter(ps.at("table"));
    Matrix r1(3, 1), r2(3, 1);
    r1 << 1, 2, 3;
    r2 << 10, 20, 30;
    const NodeId loss = h.add(weighted_sum(h, h.lookup(tab, 2), r1), weighted_sum(h, h.lookup(tab, 2), r2));
    ps.zero_grad();
    h.backward(loss);
    const Matrix& grad = ps.at("table").grad;
    CHECK(grad.row(2) == (r1 + r2).transpose());
    CHECK(grad.topRows(2).isZero());
  }
  SUBCASE("gradient check on a 5x4 table") {
    Rng rng(8);
    ParameterSet table;
    table.add("t", random_matrix(5, 4, rng));
    auto op = [](Graph& h, std::vector<NodeId>& in) {
      return h.concat(h.lookup(in[0], 1), h.lookup(in[0], 4));
    };
    CHECK(worst_gradient_error(table, op, 9) < 1e-6);
  }
}

TEST_CASE("softmax_nll") {
  Graph g;
  CHECK(g.scalar(g.softmax_nll(g.input(Matrix::Constant(4, 1, 0.3)), 2)) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-14));
  Matrix big(2, 1);
  big << 1000, 0;
  const double stable = g.scalar(g.softmax_nll(g.input(big), 0));
  CHECK(std::isfinite(stable));
  CHECK(stable == doctest::Approx(0.0));
  CHECK(g.scalar(g.softmax_nll(g.input(big), 1)) == doctest::Approx(1000.0));
  CHECK_THROWS_AS(g.softmax_nll(g.input(big), 2), IndexError);
  CHECK_THROWS_AS(g.softmax_nll(g.input(Matrix::Zero(2, 2)), 0), DimensionError);

  SUBCASE("gradient is softmax minus one-hot and matches finite differences") {
    Rng rng(12);
    ParameterSet ps;
    ps.add("z", random_matrix(5, 1, rng, -3, 3));
    Graph h;
    h.backward(h.softmax_nll(h.parameter(ps.at("z")), 3));
    const Matrix& z = ps.at("z").value;
    Matrix expected = (z.array() - z.maxCoeff()).exp();
    expected /= expected.sum();
    expected(3, 0) -= 1.0;
    CHECK((ps.at("z").grad - expected).cwiseAbs().maxCoeff() < 1e-14);
    auto f = [&] {
      Graph k;
      return k.scalar(k.softmax_nll(k.input(ps.at("z").value), 3));
    };
    for (Eigen::Index k = 0; k < 5; ++k) {
      CHECK(relative_error(ps.at("z").grad(k, 0), central_difference(ps.at("z").value, k, f)) < 1e-6);
    }
  }
}

TEST_CASE("backward contract") {
  ParameterSet ps;
  ps.add("w", Matrix::Ones(2, 2));
  Graph g;
  const NodeId w = g.parameter(ps.at("w"));
  CHECK_THROWS_AS(g.backward(w), ContractError);

  Graph h;
  const NodeId loss = h.softmax_nll(h.lookup(h.parameter(ps.at("w")), 0), 1);
  h.backward(loss);
  CHECK_THROWS_AS(h.backward(loss), ContractError);
}

TEST_CASE("every node reachable from the loss gets a gradient of its own shape") {
  Rng rng(3);
  ParameterSet ps;
  ps.add("w", random_matrix(3, 4, rng));
  ps.add("x", random_matrix(4, 1, rng));
  ps.add("b", random_matrix(3, 1, rng));
  Graph g;
  const NodeId h1 = g.matmul(g.parameter(ps.at("w")), g.parameter(ps.at("x")));
  const NodeId h2 = g.tanh(g.add(h1, g.parameter(ps.at("b"))));
  const NodeId h3 = g.concat(g.sigmoid(h2), g.slice(h2, 0, 2));
  const NodeId loss = g.softmax_nll(h3, 4);
  g.backward(loss);
  for (NodeId id = 0; id < static_cast<NodeId>(g.size()); ++id) {
    CHECK(g.grad(id).rows() == g.value(id).rows());
    CHECK(g.grad(id).cols() == g.value(id).cols());
  }
}

TEST_CASE("graph evaluation is bit-for-bit deterministic") {
  auto run = [] {
    Rng rng(77);
    ParameterSet ps;
    ps.add("w", random_matrix(6, 6, rng));
    ps.add("x", random_matrix(6, 1, rng));
    Graph g;
    NodeId h = g.parameter(ps.at("x"));
    for (int k = 0; k < 5; ++k) h = g.tanh(g.matmul(g.parameter(ps.at("w")), h));
    const NodeId loss = g.softmax_nll(h, 2);
    g.backward(loss);
    return std::pair{g.scalar(loss), Matrix(ps.at("w").grad)};
  };
  const auto a = run();
  const auto b = run();
  CHECK(std::memcmp(&a.first, &b.first, sizeof(double)) == 0);
  CHECK(std::memcmp(a.second.data(), b.second.data(), sizeof(double) * a.second.size()) == 0);
}

TEST_CASE("constant nodes do not collect gradients") {
  ParameterSet ps;
  ps.add("w", Matrix::Ones(3, 1));
  Graph g;
  g.backward(g.softmax_nll(g.constant(ps.at("w")), 0));
  CHECK(ps.at("w").grad.isZero());
}

TEST_CASE("dropout mask") {
  Rng rng(1);
  CHECK(dropout_mask(4, 3, 0.0, rng) == Matrix::Ones(4, 3));

  Rng big(2024);
  const Matrix m = dropout_mask(100, 100, 0.5, big);
  CHECK(std::fabs(m.mean() - 1.0) < 0.05);
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    const double v = m.data()[k];
    CHECK((v == 0.0 || v == 2.0));
  }

  Rng s1(9), s2(9);
  CHECK(dropout_mask(5, 5, 0.3, s1) == dropout_mask(5, 5, 0.3, s2));
  CHECK_THROWS_AS(dropout_mask(2, 2, 1.0, rng), ContractError);
  CHECK_THROWS_AS(dropout_mask(2, 2, -0.1, rng), ContractError);
}

TEST_CASE("glorot initialization stays within its bound") {
  Rng rng(4);
  const Matrix w = glorot_uniform(40, 24, rng);
  const double bound = std::sqrt(6.0 / (40 + 24));
  CHECK(w.cwiseAbs().maxCoeff() <= bound);
  CHECK(w.cwiseAbs().maxCoeff() > 0.9 * bound);
}

TEST_CASE("parameter set") {
  ParameterSet ps;
  ps.add("a", Matrix::Ones(2, 2));
  ps.add("b", Matrix::Ones(1, 3));
  CHECK_THROWS_AS(ps.add("a", Matrix::Ones(1, 1)), ContractError);
  CHECK_THROWS_AS(ps.at("missing"), IndexError);
  CHECK(ps.scalar_count() == 7);
  CHECK(ps[0].name == "a");
  CHECK(ps[1].name == "b");
  ParameterSet copy = ps;
  copy.at("a").value(0, 0) = 5.0;
  CHECK(ps.at("a").value(0, 0) == 1.0);
}

TEST_CASE("rng helpers") {
  CHECK(mix_seed(1, 0) == mix_seed(1, 0));
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) != mix_seed(2, 0));
  Rng rng(3);
  for (int k = 0; k < 1000; ++k) {
    const auto v = rng.below(7);
    CHECK(v < 7);
    const double u = rng.uniform();
    CHECK((u >= 0.0 && u < 1.0));
  }
  std::vector<int> items(50);
  std::iota(items.begin(), items.end(), 0);
  rng.shuffle(std::span<int>(items));
  CHECK(std::set<int>(items.begin(), items.end()).size() == 50);
  CHECK(!std::is_sorted(items.begin(), items.end()));
}
