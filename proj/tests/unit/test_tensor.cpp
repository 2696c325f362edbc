#include <doctest.h>

#include <cmath>
#include <random>

#include "l4sllm/tensor/gradcheck.hpp"
#include "l4sllm/tensor/ops.hpp"
#include "l4sllm/tensor/optim.hpp"

using namespace l4sllm::tensor;

namespace {

std::mt19937_64 rng(3);

Tensor rnd(Shape s, bool grad = true) {
  std::normal_distribution<double> n;
  std::vector<double> v(shape_numel(s));
  for (double& x : v) x = n(rng);
  return Tensor(std::move(s), std::move(v), grad);
}

void expect_grad(const char* name, const std::function<Tensor()>& f, std::vector<Tensor> inputs, double tol) {
  const GradCheckResult r = grad_check(f, std::move(inputs));
  INFO(name << " worst " << r.worst);
  CHECK(r.coords_checked > 0);
  CHECK(r.max_rel_error < tol);
}

}  // namespace

TEST_CASE("forward values") {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2}, {10, 20});
  const Tensor s = add(a, b);
  CHECK(std::vector<double>(s.data().begin(), s.data().end()) == std::vector<double>{11, 22, 13, 24});
  const Tensor m = matmul(a, Tensor({2, 1}, {1, -1}));
  CHECK(m.shape() == Shape{2, 1});
  CHECK(m.at(0) == -1.0);
  CHECK(m.at(1) == -1.0);

  const Tensor sm = softmax(Tensor({1, 3}, {1, 2, 3}));
  CHECK(sm.at(0) + sm.at(1) + sm.at(2) == doctest::Approx(1.0));
  CHECK(sm.at(2) > sm.at(1));

  const Tensor ln = layer_norm(Tensor({1, 4}, {1, 2, 3, 4}), Tensor({4}, {1, 1, 1, 1}), Tensor({4}, {0, 0, 0, 0}));
  CHECK(ln.at(0) + ln.at(1) + ln.at(2) + ln.at(3) == doctest::Approx(0.0).epsilon(1e-12));

  // -log(1/3) for uniform logits.
  const std::vector<int> t{0, 2};
  CHECK(cross_entropy(Tensor({2, 3}, {0, 0, 0, 5, 5, 5}), t).item() == doctest::Approx(std::log(3.0)));
}

TEST_CASE("shape errors are reported") {
  CHECK_THROWS_AS(matmul(Tensor({2, 3}, std::vector<double>(6)), Tensor({2, 2}, std::vector<double>(4))), TensorError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), TensorError);
}

TEST_CASE("non-finite values raise with the op name") {
  const Tensor big({1}, {1e308});
  try {
    (void)scale(big, 1e10);
    FAIL("expected NumericFault");
  } catch (const NumericFault& e) {
    CHECK(e.op() == "scale");
  }
}

TEST_CASE("causal conv output only reads the past") {
  const Tensor k = rnd({2, 1, 5}, false), b = rnd({2}, false);
  Tensor x = rnd({1, 1, 9}, false);
  const Tensor y1 = conv1d(x, k, b, Padding::Causal);
  std::vector<double> v(x.data().begin(), x.data().end());
  v[6] += 3.0;
  const Tensor y2 = conv1d(Tensor({1, 1, 9}, v), k, b, Padding::Causal);
  CHECK(y1.shape() == Shape{1, 2, 9});
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t t = 0; t < 6; ++t) CHECK(y1.at(c * 9 + t) == y2.at(c * 9 + t));
    CHECK(y1.at(c * 9 + 6) != y2.at(c * 9 + 6));
  }
}

TEST_CASE("attention masks") {
  const Tensor q = rnd({1, 4, 3}, false), k = rnd({1, 4, 3}, false);
  AttentionMask causal;
  const Tensor w = attention_weights(q, k, causal);
  for (std::size_t i = 0; i < 4; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      if (j > i) CHECK(w.at(i * 4 + j) == 0.0);
      row += w.at(i * 4 + j);
    }
    CHECK(row == doctest::Approx(1.0));
  }
  AttentionMask keys;
  keys.key_valid = {0, 1, 1, 1};
  keys.groups = 1;
  const Tensor wk = attention_weights(q, k, keys);
  for (std::size_t i = 0; i < 4; ++i) CHECK(wk.at(i * 4) == 0.0);
  // Query 0 only sees key 0, which is masked.
  const Tensor out = attention(q, k, rnd({1, 4, 3}, false), keys);
  for (std::size_t d = 0; d < 3; ++d) CHECK(out.at(d) == 0.0);
}

TEST_CASE("gradients of linear ops") {
  auto x = rnd({2, 3, 4}), w = rnd({4, 5}), b = rnd({5}), y = rnd({2, 3, 4});
  const auto proj = rnd({2, 3, 4}, false);
  expect_grad("linear", [&] { return sum(linear(x, w, b)); }, {x, w, b}, 1e-6);
  expect_grad("matmul", [&] { return sum(matmul(x, w)); }, {x, w}, 1e-6);
  expect_grad("add", [&] { return sum(mul(add(x, y), proj)); }, {x, y}, 1e-6);
  expect_grad("sub", [&] { return sum(mul(sub(x, y), proj)); }, {x, y}, 1e-6);
  expect_grad("scale", [&] { return sum(mul(scale(x, -0.7), proj)); }, {x}, 1e-6);
  expect_grad("mean", [&] { return mean(mul(x, proj)); }, {x}, 1e-6);
  auto a1 = rnd({2, 3, 4}), a2 = rnd({2, 3, 4});
  const auto ip = rnd({2, 6, 4}, false);
  expect_grad("interleave", [&] { return sum(mul(interleave({a1, a2}), ip)); }, {a1, a2}, 1e-6);
  const std::vector<std::size_t> pos{1, 4};
  const auto sp = rnd({2, 2, 4}, false);
  expect_grad("select", [&] { return sum(mul(select_positions(interleave({a1, a2}), pos), sp)); }, {a1, a2}, 1e-6);
  auto table = rnd({4, 3});
  const std::vector<std::size_t> idx{0, 2, 2, 3};
  const auto ep = rnd({2, 2, 3}, false);
  expect_grad("embedding", [&] { return sum(mul(embedding(table, idx, {2, 2}), ep)); }, {table}, 1e-6);
  auto cc = rnd({2, 3, 2});
  const auto cp = rnd({2, 3, 6}, false);
  expect_grad("concat", [&] { return sum(mul(concat_last({x, cc}), cp)); }, {x, cc}, 1e-6);
  const std::vector<double> rs{1, 0, 2, 3, 1, 0};
  expect_grad("scale_rows", [&] { return sum(mul(scale_rows(x, rs), proj)); }, {x}, 1e-6);
  auto h = rnd({2, 5, 6});
  const auto hp = rnd({2, 5, 6}, false);
  expect_grad("reshape/heads",
              [&] { return sum(mul(merge_heads(split_heads(transpose_last2(reshape(h, {2, 6, 5})), 2)), hp)); },
              {h}, 1e-6);
  auto cx = rnd({2, 1, 6}), kern = rnd({3, 1, 3}), cb = rnd({3});
  const auto cop = rnd({2, 3, 6}, false);
  expect_grad("conv same", [&] { return sum(mul(conv1d(cx, kern, cb, Padding::Same), cop)); }, {cx, kern, cb}, 1e-6);
  expect_grad("conv causal", [&] { return sum(mul(conv1d(cx, kern, cb, Padding::Causal), cop)); }, {cx, kern, cb},
              1e-6);
}

TEST_CASE("gradients of nonlinear ops") {
  auto x = rnd({2, 3, 4});
  const auto proj = rnd({2, 3, 4}, false);
  expect_grad("gelu", [&] { return sum(mul(gelu(x), proj)); }, {x}, 1e-3);
  expect_grad("tanh", [&] { return sum(mul(tanh(x), proj)); }, {x}, 1e-3);
  expect_grad("mul", [&] { return sum(mul(mul(x, x), proj)); }, {x}, 1e-3);
  expect_grad("sum_squares", [&] { return sum_squares(x); }, {x}, 1e-3);
  auto g = rnd({4}), be = rnd({4});
  expect_grad("layer_norm", [&] { return sum(mul(layer_norm(x, g, be), proj)); }, {x, g, be}, 1e-3);
  expect_grad("softmax", [&] { return sum(mul(softmax(x), proj)); }, {x}, 1e-3);
  auto logits = rnd({5, 3});
  const std::vector<int> t{0, 1, 2, 1, 0};
  expect_grad("cross_entropy", [&] { return cross_entropy(logits, t); }, {logits}, 1e-3);
  const std::vector<double> w{1, 0, 0.5, 1, 2};
  expect_grad("weighted_cross_entropy", [&] { return weighted_cross_entropy(logits, t, w); }, {logits}, 1e-3);
  auto q = rnd({2, 2, 5, 3}), k = rnd({2, 2, 5, 3}), v = rnd({2, 2, 5, 3});
  const auto ap = rnd({2, 2, 5, 3}, false);
  AttentionMask m;
  m.key_valid = {0, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  m.groups = 2;
  expect_grad("attention", [&] { return sum(mul(attention(q, k, v, m), ap)); }, {q, k, v}, 1e-3);
}

TEST_CASE("gradients accumulate over shared subgraphs") {
  Tensor x({3}, {1, 2, 3}, true);
  const Tensor y = add(x, x);
  backward(sum(mul(y, y)));
  // d/dx sum (2x)^2 = 8x
  CHECK(x.grad()[0] == doctest::Approx(8.0));
  CHECK(x.grad()[2] == doctest::Approx(24.0));
}

TEST_CASE("sgd step, clipping and freezing") {
  Parameter a{"a", Tensor({2}, {1.0, 2.0}, true)};
  Parameter f{"f", Tensor({1}, {5.0}, true), true};
  a.value.mutable_grad()[0] = 3.0;
  a.value.mutable_grad()[1] = 4.0;
  f.value.mutable_grad()[0] = 100.0;
  CHECK(global_grad_norm({&a, &f}) == doctest::Approx(5.0));
  Sgd sgd(0.1, 1.0);
  const StepReport rep = sgd.step({&a, &f});
  CHECK(rep.grad_norm == doctest::Approx(5.0));
  CHECK(rep.clip_scale == doctest::Approx(0.2));
  CHECK(a.value.at(0) == doctest::Approx(1.0 - 0.1 * 0.6));
  CHECK(a.value.at(1) == doctest::Approx(2.0 - 0.1 * 0.8));
  CHECK(f.value.at(0) == 5.0);
  CHECK_FALSE(a.value.has_grad());
}

TEST_CASE("learning rate zero leaves parameters bit-identical") {
  Parameter a{"a", rnd({3, 3})};
  const std::vector<double> before(a.value.data().begin(), a.value.data().end());
  backward(sum_squares(a.value));
  Sgd(0.0, 1.0).step({&a});
  CHECK(std::vector<double>(a.value.data().begin(), a.value.data().end()) == before);
  backward(sum_squares(a.value));
  Adam(0.0, 1.0).step({&a});
  CHECK(std::vector<double>(a.value.data().begin(), a.value.data().end()) == before);
}

TEST_CASE("accumulated micro-batches equal the full batch") {
  const Tensor data = rnd({4, 3}, false);
  const Tensor target = rnd({4, 1}, false);
  auto loss_on = [&](const Parameter& w, std::size_t lo, std::size_t hi) {
    std::vector<double> xs(data.data().begin() + lo * 3, data.data().begin() + hi * 3);
    std::vector<double> ts(target.data().begin() + lo, target.data().begin() + hi);
    const Tensor pred = matmul(Tensor({hi - lo, 3}, xs), w.value);
    return mean(sum_squares(sub(pred, Tensor({hi - lo, 1}, ts))));
  };
  const Tensor w0 = rnd({3, 1});
  Parameter full{"w", Tensor(w0.shape(), std::vector<double>(w0.data().begin(), w0.data().end()), true)};
  Parameter acc{"w", Tensor(w0.shape(), std::vector<double>(w0.data().begin(), w0.data().end()), true)};
  // The full-batch loss is the mean of the two half-batch losses.
  backward(scale(add(loss_on(full, 0, 2), loss_on(full, 2, 4)), 0.5));
  Sgd(0.05, 0.0).step({&full});
  backward(loss_on(acc, 0, 2));
  backward(loss_on(acc, 2, 4));
  Sgd(0.05, 0.0).step({&acc}, 2);
  for (std::size_t i = 0; i < 3; ++i) CHECK(acc.value.at(i) == doctest::Approx(full.value.at(i)).epsilon(1e-12));
}

TEST_CASE("adam first step moves each coordinate by about lr") {
  Parameter a{"a", Tensor({2}, {0.0, 0.0}, true)};
  a.value.mutable_grad()[0] = 0.3;
  a.value.mutable_grad()[1] = -7.0;
  Adam(0.01, 0.0).step({&a});
  CHECK(a.value.at(0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(a.value.at(1) == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("non-finite gradient aborts the step") {
  Parameter a{"a", Tensor({2}, {1.0, 2.0}, true)};
  Parameter b{"b", Tensor({1}, {3.0}, true)};
  a.value.mutable_grad()[0] = 1.0;
  b.value.mutable_grad()[0] = std::nan("");
  CHECK_THROWS_AS(Sgd(0.1, 1.0).step({&a, &b}), NumericFault);
  CHECK(a.value.at(0) == 1.0);
}
