#include <cmath>
#include <random>
#include <vector>

#include "catch2/catch_amalgamated.hpp"

#include "gti/gradcheck.hpp"
#include "gti/graph.hpp"
#include "gti/params.hpp"
#include "gti/rng.hpp"

using namespace gti;

namespace {

// Restores the global corruption hook no matter how a section exits.
struct HookGuard {
  ~HookGuard() { testing::corrupt_backward = {}; }
};

Tensor tensor_of(std::initializer_list<double> vs) {
  return Tensor::from(std::vector<double>(vs));
}

Tensor mat_of(std::size_t r, std::size_t c, std::initializer_list<double> vs) {
  Tensor t(r, c);
  std::copy(vs.begin(), vs.end(), t.data.begin());
  return t;
}

}  // namespace

TEST_CASE("scalar chain matches closed form") {
  ParamStore ps(1);
  Node& x = ps.create("x", 1, 1);
  x.value.data[0] = 0.3;
  Graph g;
  Value y = g.tanh_(g.scale(g.param(x), 2.0));
  REQUIRE(y.scalar() == Catch::Approx(std::tanh(0.6)).epsilon(1e-15));
  g.backward(y);
  double expect = 2.0 * (1.0 - std::tanh(0.6) * std::tanh(0.6));
  REQUIRE(x.grad.data[0] == Catch::Approx(expect).epsilon(1e-14));
}

TEST_CASE("matvec forward and backward, hand-computed") {
  ParamStore ps(1);
  Node& w = ps.adopt("w", mat_of(2, 2, {1.0, 2.0, 3.0, 4.0}), true);
  Node& x = ps.adopt("x", tensor_of({5.0, 6.0}), true);
  Graph g;
  Value y = g.matvec(g.param(w), g.param(x));
  REQUIRE(y.val().data == std::vector<double>{17.0, 39.0});
  g.backward(g.sum(y));
  // d/dW sum(Wx) = [x; x] rows, d/dx = column sums of W
  REQUIRE(w.grad.data == std::vector<double>{5.0, 6.0, 5.0, 6.0});
  REQUIRE(x.grad.data == std::vector<double>{4.0, 6.0});
}

TEST_CASE("matvec rejects shape mismatches") {
  ParamStore ps(1);
  Node& w = ps.create("w", 2, 3);
  Node& x = ps.create("x", 2, 1);
  Graph g;
  REQUIRE_THROWS_AS(g.matvec(g.param(w), g.param(x)), DimensionError);
}

TEST_CASE("every op passes central differences") {
  ParamStore ps(7);
  std::mt19937_64 rng(7);
  auto randomize = [&](Node& n) {
    for (double& v : n.value.data) v = uniform(rng, -1.2, 1.2);
  };
  Node& a = ps.create("a", 4, 1);
  Node& b = ps.create("b", 4, 1);
  Node& w = ps.create("w", 3, 4);
  Node& m = ps.create("m", 3, 3);
  randomize(a);
  randomize(b);
  randomize(w);
  randomize(m);

  struct Case {
    const char* name;
    std::function<Value(Graph&)> build;
  };
  ParamStore* P = &ps;
  std::vector<Case> cases = {
      {"add", [P](Graph& g) {
         return g.sum(g.add(g.param(P->at("a")), g.param(P->at("b"))));
       }},
      {"sub", [P](Graph& g) {
         return g.sum(g.sub(g.param(P->at("a")), g.param(P->at("b"))));
       }},
      {"mul", [P](Graph& g) {
         return g.sum(g.mul(g.param(P->at("a")), g.param(P->at("b"))));
       }},
      {"scale", [P](Graph& g) { return g.sum(g.scale(g.param(P->at("a")), -2.5)); }},
      {"sigmoid", [P](Graph& g) { return g.sum(g.sigmoid(g.param(P->at("a")))); }},
      {"tanh", [P](Graph& g) { return g.sum(g.tanh_(g.param(P->at("a")))); }},
      {"logsumexp", [P](Graph& g) { return g.logsumexp(g.param(P->at("a"))); }},
      {"matvec", [P](Graph& g) {
         return g.sum(g.matvec(g.param(P->at("w")), g.param(P->at("a"))));
       }},
      {"concat", [P](Graph& g) {
         return g.sum(g.concat({g.param(P->at("a")), g.param(P->at("b"))}));
       }},
      {"pick", [P](Graph& g) { return g.pick(g.param(P->at("a")), 2); }},
      {"subrow", [P](Graph& g) { return g.sum(g.subrow(g.param(P->at("m")), 1, 2)); }},
      {"subcol", [P](Graph& g) { return g.sum(g.subcol(g.param(P->at("m")), 2, 3)); }},
      {"stack", [P](Graph& g) {
         Value a = g.param(P->at("a"));
         return g.sum(g.stack({g.pick(a, 0), g.pick(a, 3)}));
       }},
      {"row_lookup", [P](Graph& g) {
         return g.sum(g.row_lookup(g.param(P->at("m")), 1));
       }},
      {"max_elements", [P](Graph& g) {
         return g.sum(g.max_elements({g.param(P->at("a")), g.param(P->at("b"))}));
       }},
      {"composite", [P](Graph& g) {
         Value a = g.param(P->at("a"));
         Value h = g.tanh_(g.matvec(g.param(P->at("w")), g.mul(a, g.sigmoid(a))));
         return g.add(g.logsumexp(h), g.pick(a, 1));
       }},
  };
  for (const Case& c : cases) {
    INFO(c.name);
    GradCheckReport r = check_gradients(ps, c.build, 1e-5);
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("value reused twice accumulates both paths") {
  ParamStore ps(1);
  Node& x = ps.adopt("x", tensor_of({0.7, -0.2}), true);
  auto build = [&](Graph& g) {
    Value v = g.param(x);
    return g.sum(g.add(g.mul(v, v), v));  // x^2 + x, elementwise
  };
  GradCheckReport r = check_gradients(ps, build, 1e-5);
  REQUIRE(r.max_rel_error < 1e-6);
  ps.zero_grad();
  Graph g;
  Value loss = build(g);
  g.backward(loss);
  REQUIRE(x.grad.data[0] == Catch::Approx(2.0 * 0.7 + 1.0).epsilon(1e-14));
}

TEST_CASE("logsumexp matches shifted reference and survives huge inputs") {
  Graph g;
  Value v = g.constant_vec({1000.0, 999.0, -2.0});
  double m = 1000.0;
  double expect =
      m + std::log(std::exp(0.0) + std::exp(-1.0) + std::exp(-1002.0));
  REQUIRE(g.logsumexp(v).scalar() == Catch::Approx(expect).epsilon(1e-15));
  REQUIRE(std::isfinite(g.logsumexp(v).scalar()));

  REQUIRE_THROWS_AS(g.logsumexp(g.constant(Tensor(2, 2))), ArgumentError);
}

TEST_CASE("logsumexp gradient is the softmax") {
  ParamStore ps(3);
  Node& x = ps.adopt("x", tensor_of({0.1, -1.4, 2.2}), true);
  Graph g;
  g.backward(g.logsumexp(g.param(x)));
  double denom = std::exp(0.1) + std::exp(-1.4) + std::exp(2.2);
  for (std::size_t i = 0; i < 3; ++i)
    REQUIRE(x.grad.data[i] ==
            Catch::Approx(std::exp(x.value.data[i]) / denom).epsilon(1e-12));
}

TEST_CASE("max_elements routes gradient to the earliest winner on ties") {
  ParamStore ps(1);
  Node& a = ps.adopt("a", tensor_of({1.0, 5.0}), true);
  Node& b = ps.adopt("b", tensor_of({1.0, 7.0}), true);
  Graph g;
  Value mx = g.max_elements({g.param(a), g.param(b)});
  g.backward(g.sum(mx));
  REQUIRE(a.grad.data == std::vector<double>{1.0, 0.0});  // tie at index 0 -> first
  REQUIRE(b.grad.data == std::vector<double>{0.0, 1.0});
}

TEST_CASE("constants take no gradient and spend no backward work") {
  Graph g;
  Value c = g.constant_vec({1.0, 2.0});
  REQUIRE_FALSE(c.node->requires_grad);
  Value s = g.sum(c);
  REQUIRE_FALSE(s.node->requires_grad);
  g.backward(s);  // no-op, must not throw
}

TEST_CASE("backward demands a scalar loss") {
  ParamStore ps(1);
  Node& x = ps.create("x", 3, 1);
  Graph g;
  REQUIRE_THROWS_AS(g.backward(g.param(x)), ArgumentError);
}

TEST_CASE("pick and lookups reject out-of-range indices") {
  Graph g;
  Value v = g.constant_vec({1.0, 2.0});
  REQUIRE_THROWS_AS(g.pick(v, 5), LookupError);
  Value m = g.constant(Tensor(2, 3));
  REQUIRE_THROWS_AS(g.row_lookup(m, 2), LookupError);
  REQUIRE_THROWS_AS(g.subrow(m, 0, 4), LookupError);
  REQUIRE_THROWS_AS(g.subcol(m, 3, 1), LookupError);
}

TEST_CASE("grad accumulates across fresh passes until zeroed") {
  ParamStore ps(1);
  Node& x = ps.adopt("x", tensor_of({2.0}), true);
  for (int pass = 0; pass < 2; ++pass) {
    Graph g;
    g.backward(g.scale(g.param(x), 3.0));
  }
  REQUIRE(x.grad.data[0] == 6.0);
  ps.zero_grad();
  REQUIRE(x.grad.data[0] == 0.0);
}

TEST_CASE("corrupted backward rule is caught by the checker") {
  HookGuard guard;
  ParamStore ps(11);
  Node& x = ps.create_uniform("x", 4, 1, -1.0, 1.0);
  auto build = [&](Graph& g) { return g.sum(g.tanh_(g.param(x))); };

  REQUIRE(check_gradients(ps, build, 1e-5).max_rel_error < 1e-6);

  testing::corrupt_backward = {"tanh", 2.0, true};
  GradCheckReport bad = check_gradients(ps, build, 1e-5);
  REQUIRE(bad.max_rel_error > 1e-2);
  REQUIRE(bad.corrupted_op == "tanh");
}

TEST_CASE("stable sigmoid saturates exactly at the extremes") {
  REQUIRE(stable_sigmoid(-1000.0) == 0.0);
  REQUIRE(stable_sigmoid(1000.0) == 1.0);
  REQUIRE(stable_sigmoid(0.0) == 0.5);
  REQUIRE(std::isfinite(stable_sigmoid(-745.0)));
}

TEST_CASE("param store: creation order, duplicates, lookups") {
  ParamStore ps(42);
  ps.create("b", 2, 2);
  ps.create_uniform("a", 3, 1, -0.5, 0.5);
  ps.create_glorot("c", 4, 4);
  REQUIRE(ps.names() == std::vector<std::string>{"b", "a", "c"});
  REQUIRE(ps.total_size() == 4 + 3 + 16);
  REQUIRE_THROWS_AS(ps.create("a", 1, 1), ArgumentError);
  REQUIRE_THROWS_AS(ps.at("missing"), LookupError);
  for (double v : ps.at("a").value.data) {
    REQUIRE(v >= -0.5);
    REQUIRE(v < 0.5);
  }
  double limit = std::sqrt(6.0 / (4.0 + 4.0));
  for (double v : ps.at("c").value.data) REQUIRE(std::abs(v) <= limit);
}

TEST_CASE("param store seeds reproduce exactly") {
  ParamStore p1(9), p2(9), p3(10);
  Node& a1 = p1.create_uniform("a", 8, 8, -1.0, 1.0);
  Node& a2 = p2.create_uniform("a", 8, 8, -1.0, 1.0);
  Node& a3 = p3.create_uniform("a", 8, 8, -1.0, 1.0);
  REQUIRE(a1.value.data == a2.value.data);
  REQUIRE(a1.value.data != a3.value.data);
}

TEST_CASE("frozen parameters stay off the gradient path") {
  ParamStore ps(1);
  Node& f = ps.adopt("f", tensor_of({1.0, 2.0}), false);
  Graph g;
  Value y = g.sum(g.scale(g.param(f), 2.0));
  REQUIRE_FALSE(y.node->requires_grad);
  g.backward(y);
  REQUIRE(f.grad.data.empty());  // never allocated
}

TEST_CASE("uniform01 stays in range and replays from a saved state") {
  std::mt19937_64 rng(123);
  for (int i = 0; i < 1000; ++i) {
    double u = uniform01(rng);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  std::string state = rng_state_string(rng);
  std::vector<double> first;
  for (int i = 0; i < 16; ++i) first.push_back(uniform01(rng));
  std::mt19937_64 replay;
  rng_restore_state(replay, state);
  for (int i = 0; i < 16; ++i) REQUIRE(uniform01(replay) == first[i]);
}
