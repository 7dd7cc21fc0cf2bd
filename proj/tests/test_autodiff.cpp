#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "doctest.h"
#include "vcsl/autodiff.hpp"
#include "vcsl/rng.hpp"

namespace ad = vcsl::ad;

namespace {

std::vector<double> random_vec(size_t n, uint64_t seed, double lo = -1.0,
                               double hi = 1.0) {
  vcsl::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Reduces `out` to a scalar through fixed random weights so every output
// coordinate contributes a distinct adjoint.
ad::Tensor weighted_sum(ad::Graph& g, ad::Tensor out, uint64_t seed) {
  auto w = g.constant(out.rows(), out.cols(),
                      random_vec(out.size(), seed, 0.1, 1.0));
  return g.reduce_sum(g.mul(out, w));
}

constexpr double kFdTol = 1e-6;
constexpr double kFdStep = 1e-5;

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("eager evaluation computes values at build time") {
  ad::Graph g;
  const std::vector<double> xv = {1.0, 2.0, 3.0, 4.0};
  auto x = g.leaf(2, 2, xv, true, "x");
  auto y = g.scale(x, 3.0);
  CHECK(y.values() == std::vector<double>{3.0, 6.0, 9.0, 12.0});
  auto s = g.reduce_sum(y);
  CHECK(s.scalar() == 30.0);
}

TEST_CASE("backward on a product accumulates exact gradients") {
  ad::Graph g;
  auto x = g.leaf(1, 1, std::vector<double>{3.0}, true, "x");
  auto y = g.leaf(1, 1, std::vector<double>{5.0}, true, "y");
  // L = x*y + x  =>  dL/dx = y + 1, dL/dy = x
  auto loss = g.add(g.mul(x, y), x);
  g.backward(loss);
  CHECK(x.grad()[0] == 6.0);
  CHECK(y.grad()[0] == 3.0);
}

TEST_CASE("shared leaf used twice accumulates both contributions") {
  ad::Graph g;
  auto a = g.leaf(2, 2, random_vec(4, 1), true, "a");
  auto x = g.constant(2, 3, random_vec(6, 2));
  auto y = g.constant(2, 3, random_vec(6, 3));
  auto out = g.add(g.matmul(a, x), g.matmul(a, y));
  auto loss = weighted_sum(g, out, 4);
  CHECK(ad::check_gradient(g, loss, a, kFdStep) < kFdTol);
}

TEST_CASE("finite differences validate every differentiable op") {
  SUBCASE("add and add_rowvec") {
    ad::Graph g;
    auto a = g.leaf(3, 4, random_vec(12, 10), true, "a");
    auto b = g.leaf(3, 4, random_vec(12, 11), true, "b");
    auto v = g.leaf(1, 4, random_vec(4, 12), true, "v");
    auto loss = weighted_sum(g, g.add_rowvec(g.add(a, b), v), 13);
    CHECK(ad::check_gradient(g, loss, a, kFdStep) < kFdTol);
    CHECK(ad::check_gradient(g, loss, b, kFdStep) < kFdTol);
    CHECK(ad::check_gradient(g, loss, v, kFdStep) < kFdTol);
  }
  SUBCASE("mul, scale, sub") {
    ad::Graph g;
    auto a = g.leaf(2, 5, random_vec(10, 20), true, "a");
    auto b = g.leaf(2, 5, random_vec(10, 21), true, "b");
    auto loss = weighted_sum(g, g.sub(g.mul(a, b), g.scale(a, 0.7)), 22);
    CHECK(ad::check_gradient(g, loss, a, kFdStep) < kFdTol);
    CHECK(ad::check_gradient(g, loss, b, kFdStep) < kFdTol);
  }
  SUBCASE("matmul") {
    ad::Graph g;
    auto a = g.leaf(3, 4, random_vec(12, 30), true, "a");
    auto b = g.leaf(4, 2, random_vec(8, 31), true, "b");
    auto loss = weighted_sum(g, g.matmul(a, b), 32);
    CHECK(ad::check_gradient(g, loss, a, kFdStep) < kFdTol);
    CHECK(ad::check_gradient(g, loss, b, kFdStep) < kFdTol);
  }
  SUBCASE("matmul_nt") {
    ad::Graph g;
    auto a = g.leaf(3, 4, random_vec(12, 40), true, "a");
    auto b = g.leaf(5, 4, random_vec(20, 41), true, "b");
    auto loss = weighted_sum(g, g.matmul_nt(a, b), 42);
    CHECK(ad::check_gradient(g, loss, a, kFdStep) < kFdTol);
    CHECK(ad::check_gradient(g, loss, b, kFdStep) < kFdTol);
  }
  SUBCASE("exp, log, tanh") {
    ad::Graph g;
    auto a = g.leaf(2, 3, random_vec(6, 50, 0.5, 2.0), true, "a");
    auto out = g.tanh(g.log(g.exp(a)));
    auto loss = weighted_sum(g, out, 51);
    CHECK(ad::check_gradient(g, loss, a, kFdStep) < kFdTol);
  }
  SUBCASE("softmax_rows composed with log") {
    ad::Graph g;
    auto a = g.leaf(3, 6, random_vec(18, 60, -2.0, 2.0), true, "a");
    auto loss = weighted_sum(g, g.log(g.softmax_rows(a)), 61);
    CHECK(ad::check_gradient(g, loss, a, kFdStep) < kFdTol);
  }
  SUBCASE("l2_normalize_rows and rows_l2_norm") {
    ad::Graph g;
    auto a = g.leaf(3, 5, random_vec(15, 70, 0.2, 1.5), true, "a");
    auto loss1 = weighted_sum(g, g.l2_normalize_rows(a), 71);
    auto loss2 = weighted_sum(g, g.rows_l2_norm(a), 72);
    auto loss = g.add(loss1, loss2);
    CHECK(ad::check_gradient(g, loss, a, kFdStep) < kFdTol);
  }
  SUBCASE("concat_rows and concat_cols") {
    ad::Graph g;
    auto a = g.leaf(2, 3, random_vec(6, 80), true, "a");
    auto b = g.leaf(1, 3, random_vec(3, 81), true, "b");
    auto c = g.leaf(3, 2, random_vec(6, 82), true, "c");
    auto stacked = g.concat_rows({a, b});           // [3 x 3]
    auto wide = g.concat_cols({stacked, c});        // [3 x 5]
    auto loss = weighted_sum(g, wide, 83);
    CHECK(ad::check_gradient(g, loss, a, kFdStep) < kFdTol);
    CHECK(ad::check_gradient(g, loss, b, kFdStep) < kFdTol);
    CHECK(ad::check_gradient(g, loss, c, kFdStep) < kFdTol);
  }
  SUBCASE("gather_elems with padding entries") {
    ad::Graph g;
    auto a = g.leaf(2, 3, random_vec(6, 90), true, "a");
    // repeats element 4, includes -1 zero-padding
    auto out = g.gather_elems(a, {0, 4, 4, -1, 2, 5}, 2, 3);
    CHECK(out.values()[3] == 0.0);
    auto loss = weighted_sum(g, out, 91);
    CHECK(ad::check_gradient(g, loss, a, kFdStep) < kFdTol);
  }
  SUBCASE("gather_rows with repeated rows") {
    ad::Graph g;
    auto a = g.leaf(4, 3, random_vec(12, 100), true, "a");
    auto loss = weighted_sum(g, g.gather_rows(a, {2, 0, 2}), 101);
    CHECK(ad::check_gradient(g, loss, a, kFdStep) < kFdTol);
  }
  SUBCASE("replace_rows routes gradients by mask") {
    ad::Graph g;
    auto a = g.leaf(4, 3, random_vec(12, 110), true, "a");
    auto row = g.leaf(1, 3, random_vec(3, 111), true, "row");
    auto out = g.replace_rows(a, row, {0, 1, 0, 1});
    auto loss = weighted_sum(g, out, 112);
    CHECK(ad::check_gradient(g, loss, a, kFdStep) < kFdTol);
    CHECK(ad::check_gradient(g, loss, row, kFdStep) < kFdTol);
    g.backward(loss);
    // masked rows contribute nothing to a's gradient
    for (int c = 0; c < 3; ++c) {
      CHECK(a.grad()[3 + static_cast<size_t>(c)] == 0.0);
      CHECK(a.grad()[9 + static_cast<size_t>(c)] == 0.0);
    }
  }
  SUBCASE("slice_cols") {
    ad::Graph g;
    auto a = g.leaf(3, 6, random_vec(18, 120), true, "a");
    auto loss = weighted_sum(g, g.slice_cols(a, 2, 5), 121);
    CHECK(ad::check_gradient(g, loss, a, kFdStep) < kFdTol);
    g.backward(loss);
    CHECK(a.grad()[0] == 0.0);   // column 0 never read
    CHECK(a.grad()[5] == 0.0);   // column 5 never read
  }
  SUBCASE("lerp_rows in table and positions") {
    ad::Graph g;
    auto table = g.leaf(5, 3, random_vec(15, 130), true, "table");
    // positions strictly inside row spans, well away from integers where
    // the interpolant has kinks that break central differences
    auto pos = g.leaf(4, 1, std::vector<double>{0.37, 1.62, 2.25, 3.81}, true,
                      "pos");
    auto loss = weighted_sum(g, g.lerp_rows(table, pos), 131);
    CHECK(ad::check_gradient(g, loss, table, kFdStep) < kFdTol);
    CHECK(ad::check_gradient(g, loss, pos, kFdStep) < kFdTol);
  }
  SUBCASE("reductions and reshape") {
    ad::Graph g;
    auto a = g.leaf(3, 4, random_vec(12, 140), true, "a");
    auto r = g.reshape(a, 4, 3);
    auto loss = g.add(g.reduce_sum(r), g.scale(g.reduce_mean(a), 2.0));
    CHECK(ad::check_gradient(g, loss, a, kFdStep) < kFdTol);
    g.backward(loss);
    // dL/da = 1 + 2/12 everywhere
    for (double gv : a.grad()) CHECK(gv == doctest::Approx(1.0 + 2.0 / 12.0));
  }
}

TEST_CASE("interpolation at integer positions reproduces rows exactly") {
  ad::Graph g;
  const auto tv = random_vec(12, 150);
  auto table = g.constant(4, 3, tv);
  auto pos = g.constant(4, 1, std::vector<double>{0.0, 1.0, 2.0, 3.0});
  auto out = g.lerp_rows(table, pos);
  CHECK(out.values() == tv);  // bitwise equal row copies

  // clamping: positions outside [0, rows-1] pin to the boundary rows
  auto pos2 = g.constant(2, 1, std::vector<double>{-3.5, 99.0});
  auto out2 = g.lerp_rows(table, pos2);
  for (int j = 0; j < 3; ++j) {
    CHECK(out2.values()[static_cast<size_t>(j)] == tv[static_cast<size_t>(j)]);
    CHECK(out2.values()[3 + static_cast<size_t>(j)] ==
          tv[9 + static_cast<size_t>(j)]);
  }
}

TEST_CASE("clamped interpolation positions receive zero gradient") {
  ad::Graph g;
  auto table = g.constant(3, 2, random_vec(6, 160));
  auto pos = g.leaf(3, 1, std::vector<double>{-1.0, 1.4, 7.0}, true, "pos");
  auto loss = weighted_sum(g, g.lerp_rows(table, pos), 161);
  g.backward(loss);
  CHECK(pos.grad()[0] == 0.0);
  CHECK(pos.grad()[1] != 0.0);
  CHECK(pos.grad()[2] == 0.0);
}

TEST_CASE("gradients off the loss path stay exactly zero") {
  ad::Graph g;
  auto a = g.leaf(2, 2, random_vec(4, 170), true, "a");
  auto b = g.leaf(2, 2, random_vec(4, 171), true, "b");
  auto unused = g.tanh(b);
  auto loss = g.reduce_sum(g.mul(a, a));
  auto after = g.exp(a);  // created after the loss node
  g.backward(loss);
  for (double gv : b.grad()) CHECK(gv == 0.0);
  for (double gv : unused.grad()) CHECK(gv == 0.0);
  for (double gv : after.grad()) CHECK(gv == 0.0);
  for (double gv : a.grad()) CHECK(gv != 0.0);
}

TEST_CASE("rebinding a leaf requires forward before backward") {
  ad::Graph g;
  auto x = g.leaf(2, 2, random_vec(4, 180), true, "x");
  auto loss = g.reduce_sum(g.tanh(x));
  g.backward(loss);  // fine on a freshly built graph

  x.set_values(std::vector<double>{1.0, 2.0, 3.0, 4.0});
  CHECK(g.dirty());
  CHECK_THROWS_AS(g.backward(loss), std::runtime_error);
  g.forward();
  CHECK_FALSE(g.dirty());
  g.backward(loss);  // valid again
  CHECK(loss.scalar() ==
        doctest::Approx(std::tanh(1.0) + std::tanh(2.0) + std::tanh(3.0) +
                        std::tanh(4.0)));
}

TEST_CASE("set_values rejects derived nodes and size mismatches") {
  ad::Graph g;
  auto x = g.leaf(2, 2, random_vec(4, 190), true, "x");
  auto y = g.tanh(x);
  CHECK_THROWS_AS(y.set_values(std::vector<double>{1, 2, 3, 4}),
                  ad::AdError);
  CHECK_THROWS_AS(x.set_values(std::vector<double>{1, 2}), ad::AdError);
}

TEST_CASE("non-finite intermediate raises an error naming the node") {
  ad::Graph g;
  auto x = g.leaf(1, 2, std::vector<double>{0.0, 1.0}, true, "x");
  try {
    (void)g.log(x);  // log(0) = -inf surfaces immediately
    FAIL("expected AdError");
  } catch (const ad::AdError& e) {
    CHECK(e.op() == ad::Op::kLog);
    CHECK(std::string(e.what()).find("node") != std::string::npos);
    CHECK(e.node_id() >= 0);
  }
}

TEST_CASE("normalizing an all-zero row is an error") {
  ad::Graph g;
  auto x = g.leaf(2, 3, std::vector<double>{1, 2, 3, 0, 0, 0}, true, "x");
  CHECK_THROWS_AS((void)g.l2_normalize_rows(x), ad::AdError);
}

TEST_CASE("backward demands a scalar loss") {
  ad::Graph g;
  auto x = g.leaf(2, 2, random_vec(4, 200), true, "x");
  auto y = g.tanh(x);
  CHECK_THROWS_AS(g.backward(y), ad::AdError);
}

TEST_CASE("check_gradient input validation") {
  ad::Graph g;
  auto x = g.leaf(2, 2, random_vec(4, 210), true, "x");
  auto y = g.tanh(x);
  auto loss = g.reduce_sum(y);
  CHECK_THROWS_AS((void)ad::check_gradient(g, loss, y, kFdStep),
                  std::runtime_error);  // not a leaf
  CHECK_THROWS_AS((void)ad::check_gradient(g, loss, x, 0.0),
                  std::runtime_error);  // bad step
  auto frozen = g.leaf(1, 1, std::vector<double>{1.0}, false, "frozen");
  auto loss2 = g.add(loss, g.reduce_sum(frozen));
  CHECK_THROWS_AS((void)ad::check_gradient(g, loss2, frozen, kFdStep),
                  std::runtime_error);  // no grad requested
}

TEST_CASE("identical graphs evaluate bit-identically") {
  auto build = [](ad::Graph& g) {
    auto a = g.leaf(4, 4, random_vec(16, 220), true, "a");
    auto b = g.constant(4, 4, random_vec(16, 221));
    auto z = g.softmax_rows(g.matmul(a, b));
    auto loss = g.reduce_mean(g.mul(z, z));
    g.backward(loss);
    return std::make_pair(loss.scalar(), a.grad());
  };
  ad::Graph g1, g2;
  auto [l1, grad1] = build(g1);
  auto [l2, grad2] = build(g2);
  CHECK(l1 == l2);
  CHECK(grad1 == grad2);
}

}  // TEST_SUITE
