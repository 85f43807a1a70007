#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "relsum/gradcheck.hpp"
#include "relsum/graph.hpp"
#include "relsum/rng.hpp"

using namespace relsum;

namespace {

// Independent oracle: central finite differences of an arbitrary scalar
// function of the parameter store.
double central_diff(const std::function<double(const ParameterStore&)>& f, ParameterStore& params,
                    const std::string& name, int64_t idx, double h) {
  Tensor& p = params.get(name);
  const double keep = p.data[idx];
  p.data[idx] = keep + h;
  const double fp = f(params);
  p.data[idx] = keep - h;
  const double fm = f(params);
  p.data[idx] = keep;
  return (fp - fm) / (2.0 * h);
}

}  // namespace

TEST_CASE("backward of sum gives unit gradients") {
  ParameterStore params;
  params.add("x", Tensor({3}, {1.0, -2.0, 0.5}));
  Graph g;
  Value loss = g.sum(g.param("x", params.get("x")));
  GradMap grads = g.backward(loss, params);
  REQUIRE(grads.size() == 1);
  CHECK(grads[0].second.data == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("sigmoid gradient at zero is a quarter") {
  ParameterStore params;
  params.add("x", Tensor({1}, {0.0}));
  Graph g;
  Value loss = g.sum(g.sigmoid(g.param("x", params.get("x"))));
  GradMap grads = g.backward(loss, params);
  CHECK(grads[0].second.data[0] == Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("loss must be scalar") {
  ParameterStore params;
  params.add("x", Tensor({2}, {1.0, 2.0}));
  Graph g;
  Value v = g.param("x", params.get("x"));
  CHECK_THROWS_AS(g.backward(v, params), Error);
}

TEST_CASE("parameters unused by the loss get zero gradients") {
  ParameterStore params;
  params.add("used", Tensor({2}, {1.0, 2.0}));
  params.add("unused", Tensor({3}, {5.0, 6.0, 7.0}));
  Graph g;
  Value loss = g.sum(g.param("used", params.get("used")));
  GradMap grads = g.backward(loss, params);
  REQUIRE(grads.size() == 2);
  CHECK(grads[1].first == "unused");
  CHECK(grads[1].second.data == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("gradients accumulate by sum over all paths") {
  // loss = sum(x) + sum(x) -> grad 2 everywhere, exact
  ParameterStore params;
  params.add("x", Tensor({4}, {0.1, 0.2, 0.3, 0.4}));
  Graph g;
  Value x = g.param("x", params.get("x"));
  Value loss = g.add(g.sum(x), g.sum(x));
  GradMap grads = g.backward(loss, params);
  for (double v : grads[0].second.data) CHECK(v == 2.0);
}

TEST_CASE("backward of a sum of parts equals the sum of part gradients") {
  Rng rng(7);
  ParameterStore params;
  params.add("x", Tensor::randn({5}, rng));

  auto part_a = [&](Graph& g) {
    Value x = g.param("x", params.get("x"));
    return g.sum(g.mul(x, x));
  };
  auto part_b = [&](Graph& g) {
    Value x = g.param("x", params.get("x"));
    return g.sum(g.sigmoid(x));
  };

  Graph g_joint;
  Value joint = g_joint.add(part_a(g_joint), part_b(g_joint));
  GradMap gj = g_joint.backward(joint, params);

  Graph ga, gb;
  GradMap g1 = ga.backward(part_a(ga), params);
  GradMap g2 = gb.backward(part_b(gb), params);

  for (int64_t i = 0; i < 5; ++i)
    CHECK(std::fabs(gj[0].second.data[i] - (g1[0].second.data[i] + g2[0].second.data[i])) <= 1e-12);
}

TEST_CASE("two-layer MLP gradients match central finite differences") {
  Rng rng(42);
  ParameterStore params;
  params.add("w1", Tensor::randn({4, 8}, rng, 0.5));
  params.add("b1", Tensor::randn({8}, rng, 0.1));
  params.add("w2", Tensor::randn({8, 3}, rng, 0.5));
  params.add("b2", Tensor::randn({3}, rng, 0.1));
  Tensor input = Tensor::randn({2, 4}, rng);
  Tensor target = Tensor::randn({2, 3}, rng);

  auto build = [&](Graph& g, const ParameterStore& ps) {
    Value x = g.constant_ref(input);
    Value h = g.relu(g.add(g.matmul(x, g.param("w1", ps.get("w1"))), g.param("b1", ps.get("b1"))));
    Value y = g.add(g.matmul(h, g.param("w2", ps.get("w2"))), g.param("b2", ps.get("b2")));
    Value d = g.sub(y, g.constant_ref(target));
    return g.mean(g.mul(d, d));
  };

  Graph g;
  Value loss = build(g, params);
  GradMap analytic = g.backward(loss, params);

  auto f = [&](const ParameterStore& ps) {
    Graph gg;
    return gg.out(build(gg, ps)).value();
  };

  const double h = 1e-4;
  double max_rel = 0.0;
  for (auto& [name, ga] : analytic) {
    for (int64_t i = 0; i < ga.numel(); ++i) {
      const double numeric = central_diff(f, params, name, i, h);
      const double denom = std::max({std::fabs(ga.data[i]), std::fabs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::fabs(ga.data[i] - numeric) / denom);
    }
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("grad_check: square function") {
  ParameterStore params;
  params.add("p", Tensor({1}, {3.0}));
  LossFn fn = [](Graph& g, const ParameterStore& ps) {
    Value p = g.param("p", ps.get("p"));
    return g.sum(g.mul(p, p));
  };
  CHECK(grad_check(fn, params, 1e-4) < 1e-9);  // central diff is exact for quadratics
}

TEST_CASE("grad_check: constant function reports zero error") {
  ParameterStore params;
  params.add("p", Tensor({2}, {1.0, 2.0}));
  LossFn fn = [](Graph& g, const ParameterStore& ps) {
    (void)g.param("p", ps.get("p"));
    return g.sum(g.constant(Tensor::scalar(5.0)));
  };
  CHECK(grad_check(fn, params, 1e-4) == 0.0);
}

TEST_CASE("grad_check covers every op kind on random instances") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    ParameterStore params;
    params.add("emb", Tensor::randn({5, 4}, rng, 0.5));
    params.add("w", Tensor::randn({4, 4}, rng, 0.5));
    params.add("g", Tensor::full({4}, 1.0));
    params.add("b", Tensor::zeros({4}));
    params.add("v", Tensor::randn({3}, rng, 0.5));

    LossFn fn = [&](Graph& g, const ParameterStore& ps) {
      Value e = g.embed(g.param("emb", ps.get("emb")), {0, 2, 4});       // [3,4]
      Value w = g.param("w", ps.get("w"));
      Value h = g.layer_norm(g.matmul(e, w), g.param("g", ps.get("g")), g.param("b", ps.get("b")));
      Value s = g.softmax(g.matmul(h, g.transpose(h)));                  // [3,3]
      Value mixed = g.matmul(s, h);                                      // [3,4]
      Value lsm = g.log_softmax(mixed);
      Value picked = g.gather(lsm, {1, 0, 3});                           // [3]
      Value v = g.param("v", ps.get("v"));
      Value t1 = g.sum(g.mul(picked, v));
      Value parts = g.concat(g.slice(mixed, 0, 0, 1), g.slice(mixed, 0, 2, 1));  // [2,4]
      Value t2 = g.mean(g.softplus(parts));
      Value t3 = g.sum(g.exp(g.scale(g.sigmoid(v), 0.5)));
      Value t4 = g.sum(g.log(g.add(g.relu(v), g.constant(Tensor::full({3}, 1.5)))));
      return g.add(g.add(t1, t2), g.sub(t3, t4));
    };
    CHECK(grad_check(fn, params, 1e-4) < 1e-4);
  }
}
