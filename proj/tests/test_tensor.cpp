#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "reco/gradcheck.hpp"
#include "reco/param_store.hpp"
#include "reco/rng.hpp"
#include "reco/tensor.hpp"

using namespace reco;

namespace {

// Independent scalar-loop oracle for y = xW + b.
std::vector<double> affine_oracle(const std::vector<double>& x, const Tensor& w, const std::vector<double>& b) {
  std::vector<double> y(b);
  for (std::size_t j = 0; j < y.size(); ++j)
    for (std::size_t i = 0; i < x.size(); ++i) y[j] += x[i] * w.at(i, j);
  return y;
}

}  // namespace

TEST_CASE("tensor factories enforce invariants") {
  CHECK_THROWS_AS(Tensor::vector({}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({0}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor::matrix(2, 2, {1.0}), ShapeError);
  const Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.at(1, 2) == 6.0);
  CHECK_THROWS_AS(Tensor::vector({1, 2}).value(), ShapeError);
}

TEST_CASE("affine matches hand values and oracle") {
  Trace tr;
  SECTION("identity map plus bias") {
    const Tensor x = Tensor::vector({1, 2});
    const Tensor w = Tensor::matrix(2, 2, {1, 0, 0, 1});
    const Tensor b = Tensor::vector({1, 1});
    const Tensor y = affine(tr, x, w, b);
    CHECK(y.values == std::vector<double>{2, 3});
  }
  SECTION("zero input returns the bias") {
    const Tensor x = Tensor::vector({0, 0});
    const Tensor w = Tensor::matrix(2, 2, {3, -1, 4, 2});
    const Tensor b = Tensor::vector({0.5, -0.5});
    const Tensor y = affine(tr, x, w, b);
    CHECK(y.values == std::vector<double>{0.5, -0.5});
  }
  SECTION("random 3x2 vs scalar-loop oracle") {
    Rng rng(11);
    Tensor w = Tensor::zeros({3, 2});
    for (double& v : w.values) v = rng.uniform(-1, 1);
    const std::vector<double> x{0.3, -1.2, 2.0};
    const std::vector<double> b{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Tensor y = affine(tr, Tensor::vector(x), w, Tensor::vector(b));
    const auto expect = affine_oracle(x, w, b);
    REQUIRE(y.numel() == 2);
    CHECK(y[0] == Catch::Approx(expect[0]).margin(1e-15));
    CHECK(y[1] == Catch::Approx(expect[1]).margin(1e-15));
  }
  SECTION("shape mismatch names both shapes") {
    const Tensor x = Tensor::vector({1, 2, 3});
    const Tensor w = Tensor::matrix(2, 2, {1, 0, 0, 1});
    const Tensor b = Tensor::vector({0, 0});
    CHECK_THROWS_WITH(affine(tr, x, w, b),
                      Catch::Matchers::ContainsSubstring("[3]") && Catch::Matchers::ContainsSubstring("[2,2]"));
  }
}

TEST_CASE("elementwise analytic values") {
  Trace tr;
  const Tensor zero = Tensor::vector({0.0});
  CHECK(sigmoid(tr, zero)[0] == Catch::Approx(0.5).margin(1e-15));
  CHECK(tanh(tr, zero)[0] == 0.0);
  CHECK(exp(tr, zero)[0] == 1.0);
  CHECK(sigmoid(tr, Tensor::vector({std::log(3.0)}))[0] == Catch::Approx(0.75).margin(1e-12));

  const Tensor a = Tensor::vector({1, 2});
  const Tensor b = Tensor::vector({3, 5});
  CHECK(add(tr, a, b).values == std::vector<double>{4, 7});
  CHECK(sub(tr, a, b).values == std::vector<double>{-2, -3});
  CHECK(mul(tr, a, b).values == std::vector<double>{3, 10});
  CHECK_THROWS_AS(add(tr, a, Tensor::vector({1, 2, 3})), ShapeError);

  const Tensor c = Tensor::vector({1, 2});
  CHECK(elementwise(tr, ElemOp::add, a, &c).values == std::vector<double>{2, 4});
  CHECK(elementwise(tr, ElemOp::sigmoid, zero)[0] == Catch::Approx(0.5));
  CHECK_THROWS_AS(elementwise(tr, ElemOp::add, a), ShapeError);
  CHECK_THROWS_AS(elementwise(tr, ElemOp::tanh, a, &c), ShapeError);
}

TEST_CASE("sigmoid and tanh keep strict open ranges on saturating inputs") {
  Trace tr(false);
  const Tensor big = Tensor::vector({1e6, 745.0, -1e6, -745.0, 0.0});
  const Tensor s = sigmoid(tr, big);
  const Tensor t = tanh(tr, big);
  for (std::size_t i = 0; i < big.numel(); ++i) {
    CHECK(s[i] > 0.0);
    CHECK(s[i] < 1.0);
    CHECK(t[i] > -1.0);
    CHECK(t[i] < 1.0);
  }
}

TEST_CASE("softmax2 values, stability, and error paths") {
  Trace tr;
  const Tensor even = softmax2(tr, Tensor::vector({0.0, 0.0}));
  CHECK(even[0] == Catch::Approx(0.5).margin(1e-15));
  const Tensor r = softmax2(tr, Tensor::vector({std::log(1.0), std::log(3.0)}));
  CHECK(r[0] == Catch::Approx(0.25).margin(1e-12));
  CHECK(r[1] == Catch::Approx(0.75).margin(1e-12));
  const Tensor huge = softmax2(tr, Tensor::vector({1000.0, 1000.0}));
  CHECK(huge[0] == Catch::Approx(0.5).margin(1e-15));
  CHECK(std::fabs(huge[0] + huge[1] - 1.0) < 1e-12);
  CHECK_THROWS_AS(softmax2(tr, Tensor::vector({1, 2, 3})), ShapeError);
  CHECK_THROWS_AS(softmax2(tr, Tensor::vector({std::nan(""), 0.0})), Error);
}

TEST_CASE("softmax2 sums to one on random logits") {
  Trace tr(false);
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    const Tensor p = softmax2(tr, Tensor::vector({rng.uniform(-50, 50), rng.uniform(-50, 50)}));
    CHECK(std::fabs(p[0] + p[1] - 1.0) < 1e-12);
    CHECK(p[0] > 0.0);
    CHECK(p[1] > 0.0);
  }
}

TEST_CASE("concat") {
  Trace tr;
  CHECK(concat(tr, Tensor::vector({1}), Tensor::vector({2})).values == std::vector<double>{1, 2});
  CHECK(concat(tr, Tensor::vector({1, 2}), Tensor::vector({3, 4, 5})).values == std::vector<double>{1, 2, 3, 4, 5});
  // Empty operands cannot even be constructed.
  CHECK_THROWS_AS(Tensor::vector({}), ShapeError);
  CHECK_THROWS_AS(concat(tr, Tensor::matrix(1, 1, {1}), Tensor::vector({2})), ShapeError);
}

TEST_CASE("backward on simple graphs") {
  SECTION("loss = sum(x) gives ones") {
    Trace tr;
    Tensor x0 = Tensor::vector({1, 2, 3});
    x0.requires_grad = true;
    const Tensor x = tr.leaf(x0, "x");
    const Tensor loss = sum(tr, x);
    const Gradients g = tr.backward(loss);
    CHECK(g.named().at("x").values == std::vector<double>{1, 1, 1});
    CHECK(g.wrt(x).values == std::vector<double>{1, 1, 1});
  }
  SECTION("loss = sigmoid(w.x) matches the analytic derivative") {
    Trace tr;
    Tensor w0 = Tensor::vector({0.3, -0.7});
    w0.requires_grad = true;
    const Tensor w = tr.leaf(w0, "w");
    const Tensor x = Tensor::vector({1.5, 2.5});
    const Tensor loss = sigmoid(tr, sum(tr, mul(tr, w, x)));
    const Gradients g = tr.backward(loss);
    const double z = 0.3 * 1.5 + (-0.7) * 2.5;
    const double s = 1.0 / (1.0 + std::exp(-z));
    const Tensor& gw = g.named().at("w");
    CHECK(gw[0] == Catch::Approx(s * (1 - s) * 1.5).epsilon(1e-12));
    CHECK(gw[1] == Catch::Approx(s * (1 - s) * 2.5).epsilon(1e-12));
  }
  SECTION("unused parameters get zero gradients") {
    Trace tr;
    Tensor a0 = Tensor::vector({1.0});
    a0.requires_grad = true;
    Tensor b0 = Tensor::vector({2.0});
    b0.requires_grad = true;
    const Tensor a = tr.leaf(a0, "a");
    tr.leaf(b0, "b");
    const Gradients g = tr.backward(sum(tr, a));
    CHECK(g.named().at("b").values == std::vector<double>{0.0});
  }
  SECTION("loss must be a scalar on the trace") {
    Trace tr;
    Tensor x0 = Tensor::vector({1, 2});
    x0.requires_grad = true;
    const Tensor x = tr.leaf(x0);
    CHECK_THROWS_AS(tr.backward(x), TraceError);
    CHECK_THROWS_AS(tr.backward(Tensor::scalar(1.0)), TraceError);
  }
}

TEST_CASE("gradients of a composed function match finite differences") {
  Rng rng(17);
  ParameterStore store;
  store.add("W1", uniform_matrix(rng, 4, 3));
  store.add("b1", Tensor::zeros({3}));
  store.add("W2", uniform_matrix(rng, 3, 2));
  store.add("b2", Tensor::zeros({2}));
  for (const auto& name : store.names())
    for (double& v : store.value(name).values) v = rng.uniform(-0.5, 0.5);
  const std::vector<double> xv{0.2, -0.4, 0.9, -1.3};

  auto forward = [&](Trace& tr, const ParameterStore& s) {
    const Tensor w1 = tr.leaf(s.value("W1"), "W1");
    const Tensor b1 = tr.leaf(s.value("b1"), "b1");
    const Tensor w2 = tr.leaf(s.value("W2"), "W2");
    const Tensor b2 = tr.leaf(s.value("b2"), "b2");
    const Tensor h = sigmoid(tr, affine(tr, Tensor::vector(xv), w1, b1));
    const Tensor o = tanh(tr, affine(tr, h, w2, b2));
    const Tensor p = softmax2(tr, o);
    return sum(tr, mul(tr, log(tr, p), exp(tr, scale(tr, p, -1.0))));
  };

  Trace tr;
  const Tensor loss = forward(tr, store);
  const Gradients analytic = tr.backward(loss);
  auto f = [&](const ParameterStore& s) {
    Trace t2(false);
    return forward(t2, s).value();
  };
  const FiniteDiffResult fd = finite_diff(f, store, 1e-4);
  CHECK(fd.nonsmooth.empty());
  const RelErrReport rep = max_rel_err(analytic.named(), fd.grad);
  INFO(rep.worst);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("determinism and trace independence") {
  auto run = [](Trace& tr, const ParameterStore& s) {
    const Tensor w = tr.leaf(s.value("w"), "w");
    const Tensor x = Tensor::vector({0.1, 0.2, 0.3});
    return sum(tr, tanh(tr, mul(tr, w, x)));
  };
  Rng rng(5);
  ParameterStore store;
  store.add("w", Tensor::vector({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}));

  SECTION("identical runs are bit-identical") {
    Trace t1, t2;
    const Tensor l1 = run(t1, store);
    const Tensor l2 = run(t2, store);
    CHECK(l1.values == l2.values);
    CHECK(t1.backward(l1).named().at("w").values == t2.backward(l2).named().at("w").values);
  }
  SECTION("two forwards on one trace do not interfere") {
    Trace tr;
    const Tensor w = tr.leaf(store.value("w"), "w");
    const Tensor l1 = sum(tr, tanh(tr, mul(tr, w, Tensor::vector({0.1, 0.2, 0.3}))));
    const Tensor l2 = sum(tr, sigmoid(tr, mul(tr, w, Tensor::vector({0.5, -0.5, 1.0}))));
    const Gradients g1 = tr.backward(l1);
    const Gradients g2 = tr.backward(l2);
    Trace solo;
    const Tensor l1s = run(solo, store);
    CHECK(g1.named().at("w").values == solo.backward(l1s).named().at("w").values);
    CHECK(g2.named().at("w").values != g1.named().at("w").values);
  }
  SECTION("mixing tensors across traces is rejected") {
    Trace t1, t2;
    const Tensor w = t1.leaf(store.value("w"), "w");
    CHECK_THROWS_AS(sum(t2, w), TraceError);
  }
  SECTION("double lease of one name is rejected") {
    Trace tr;
    tr.leaf(store.value("w"), "w");
    CHECK_THROWS_AS(tr.leaf(store.value("w"), "w"), TraceError);
  }
}

TEST_CASE("finite_diff basics") {
  SECTION("quadratic") {
    ParameterStore store;
    store.add("theta", Tensor::scalar(3.0));
    auto f = [](const ParameterStore& s) {
      const double t = s.value("theta").value();
      return t * t;
    };
    const FiniteDiffResult r = finite_diff(f, store, 1e-4);
    CHECK(r.grad.at("theta").value() == Catch::Approx(6.0).margin(1e-7));
    CHECK(r.nonsmooth.empty());
  }
  SECTION("absolute value at the kink is flagged with estimate 0") {
    ParameterStore store;
    store.add("theta", Tensor::scalar(0.0));
    auto f = [](const ParameterStore& s) { return std::fabs(s.value("theta").value()); };
    const FiniteDiffResult r = finite_diff(f, store, 1e-4);
    CHECK(r.grad.at("theta").value() == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(r.nonsmooth.size() == 1);
    CHECK(r.nonsmooth[0] == "theta[0]");
  }
  SECTION("non-finite evaluations are an error") {
    ParameterStore store;
    store.add("theta", Tensor::scalar(0.0));
    auto f = [](const ParameterStore& s) { return std::log(s.value("theta").value()); };
    CHECK_THROWS_AS(finite_diff(f, store, 1e-4), Error);
  }
}

TEST_CASE("adam_step") {
  SECTION("zero gradient leaves parameters unchanged") {
    ParameterStore store;
    store.add("w", Tensor::vector({1.0, -2.0}));
    std::map<std::string, Tensor> grads{{"w", Tensor::zeros({2})}};
    store.adam_step(grads, AdamHyper{0.1, 0.9, 0.999, 1e-8});
    CHECK(store.value("w").values == std::vector<double>{1.0, -2.0});
    CHECK(store.entry("w").step == 1);
  }
  SECTION("first step with unit gradient moves by about -lr") {
    ParameterStore store;
    store.add("w", Tensor::scalar(0.0));
    std::map<std::string, Tensor> grads{{"w", Tensor::scalar(1.0)}};
    store.adam_step(grads, AdamHyper{0.1, 0.9, 0.999, 1e-8});
    CHECK(store.value("w").value() == Catch::Approx(-0.1).epsilon(1e-6));
  }
  SECTION("gradient shape mismatch is rejected") {
    ParameterStore store;
    store.add("w", Tensor::vector({1.0, 2.0}));
    std::map<std::string, Tensor> grads{{"w", Tensor::scalar(1.0)}};
    CHECK_THROWS_AS(store.adam_step(grads, AdamHyper{}), ShapeError);
  }
  SECTION("100 steps on theta^2 walk into the zero region and stay there") {
    ParameterStore store;
    store.add("theta", Tensor::scalar(1.0));
    const AdamHyper hp{0.1, 0.9, 0.999, 1e-8};
    std::vector<double> traj;
    for (int k = 0; k < 100; ++k) {
      const double t = store.value("theta").value();
      std::map<std::string, Tensor> grads{{"theta", Tensor::scalar(2.0 * t)}};
      store.adam_step(grads, hp);
      traj.push_back(std::fabs(store.value("theta").value()));
    }
    for (int k = 1; k < 8; ++k) CHECK(traj[k] < traj[k - 1]);
    double tail = 0.0;
    for (int k = 50; k < 100; ++k) tail = std::max(tail, traj[k]);
    CHECK(tail < 0.2);
    CHECK(store.entry("theta").step == 100);
  }
}
