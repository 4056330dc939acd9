#include <algorithm>
#include <cmath>
#include <cstring>

#include <doctest.h>

#include "prema/tensor.hpp"
#include "testutil.hpp"

using namespace prema;
using testutil::fd_check;
using testutil::random_tensor;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("matmul identity and hand-worked product") {
  Rng rng(11);
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor m = random_tensor({3, 3}, rng, -2, 2, false);
  Tensor prod = matmul(eye, m);
  for (std::size_t i = 0; i < 9; ++i) CHECK(prod.at(i) == m.at(i));

  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 1}, {0, 1});
  Tensor c = matmul(a, b);
  CHECK(c.at(0) == 2);
  CHECK(c.at(1) == 4);

  Tensor bad = Tensor::from({3, 1}, {1, 2, 3});
  CHECK_THROWS_AS(matmul(a, bad), shape_error);
}

TEST_CASE("matmul gradient vs finite differences (1e-7 absolute)") {
  Rng rng(42);
  Tensor a = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({5, 3}, rng);
  auto report = fd_check([&] { return sum(matmul(a, b)); }, {a, b});
  CHECK(report.checked == 35);
  CHECK(report.max_abs <= 1e-7);
}

TEST_CASE("sigmoid/tanh/hadamard basics") {
  Tensor zero = Tensor::from({3}, {0, 0, 0});
  Tensor s = sigmoid(zero);
  Tensor t = prema::tanh(zero);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s.at(i) == 0.5);
    CHECK(t.at(i) == 0.0);
  }

  // scalar oracle: 1/(1+e^-0.5)
  Tensor half = sigmoid(Tensor::scalar(0.5));
  CHECK(half.item() == doctest::Approx(1.0 / (1.0 + std::exp(-0.5))).epsilon(1e-12));
  CHECK(half.item() == doctest::Approx(0.622459).epsilon(1e-6));

  Rng rng(7);
  Tensor x = random_tensor({8}, rng, -3, 3, false);
  Tensor ones = Tensor::full({8}, 1.0);
  Tensor hx = hadamard(x, ones);
  for (std::size_t i = 0; i < 8; ++i) CHECK(hx.at(i) == x.at(i));

  Tensor mismatched = Tensor::zeros({7});
  CHECK_THROWS_AS(hadamard(x, mismatched), shape_error);
}

TEST_CASE("sigmoid and tanh stay inside their open intervals on [-50,50]") {
  Rng rng(99);
  for (int rep = 0; rep < 200; ++rep) {
    Tensor x = random_tensor({16}, rng, -50, 50, false);
    Tensor s = sigmoid(x);
    Tensor t = prema::tanh(x);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(s.at(i) > 0.0);
      CHECK(s.at(i) < 1.0);
      CHECK(t.at(i) > -1.0);
      CHECK(t.at(i) < 1.0);
    }
  }
}

TEST_CASE("softmax: uniform, singleton, scalar oracle") {
  for (double c : {0.0, -3.5, 12.0}) {
    Tensor out = softmax(Tensor::full({4}, c));
    for (std::size_t i = 0; i < 4; ++i) CHECK(out.at(i) == doctest::Approx(0.25).epsilon(1e-15));
  }
  CHECK(softmax(Tensor::from({1}, {123.0})).item() == 1.0);

  // [2,0] -> e^2/(e^2+1), 1/(e^2+1)
  Tensor out = softmax(Tensor::from({2}, {2, 0}));
  const double e2 = std::exp(2.0);
  CHECK(out.at(0) == doctest::Approx(e2 / (e2 + 1)).epsilon(1e-12));
  CHECK(out.at(1) == doctest::Approx(1 / (e2 + 1)).epsilon(1e-12));
  CHECK(out.at(0) == doctest::Approx(0.880797).epsilon(1e-6));
  CHECK(out.at(1) == doctest::Approx(0.119203).epsilon(1e-6));
}

TEST_CASE("softmax properties: normalization, shift invariance, order") {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor x = random_tensor({9}, rng, -30, 30, false);
    Tensor y = softmax(x);
    double total = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      CHECK(y.at(i) > 0.0);
      CHECK(y.at(i) <= 1.0);
      total += y.at(i);
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);

    const double shift = rng.uniform(-100, 100);
    std::vector<double> shifted(x.data());
    for (double& v : shifted) v += shift;
    Tensor y2 = softmax(Tensor::from({9}, shifted));
    for (std::size_t i = 0; i < y.size(); ++i) {
      CHECK(std::abs(y.at(i) - y2.at(i)) <= 1e-12);
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
      for (std::size_t j = 0; j < y.size(); ++j) {
        if (x.at(i) > x.at(j)) CHECK(y.at(i) > y.at(j));
      }
    }
  }
  CHECK_THROWS_AS(softmax(Tensor::zeros({2, 2})), shape_error);
}

TEST_CASE("conv2d identity, zero kernels, shape formula") {
  Rng rng(3);
  Tensor img = random_tensor({1, 5, 5}, rng, 0, 1, false);
  Tensor k1 = Tensor::from({1, 1, 1, 1}, {1.0});
  Tensor out = conv2d(img, k1, 1, 0);
  CHECK(out.shape() == Shape{1, 5, 5});
  for (std::size_t i = 0; i < 25; ++i) CHECK(out.at(i) == img.at(i));

  Tensor kz = Tensor::zeros({3, 1, 3, 3});
  Tensor outz = conv2d(img, kz, 1, 1);
  CHECK(outz.shape() == Shape{3, 5, 5});
  for (std::size_t i = 0; i < outz.size(); ++i) CHECK(outz.at(i) == 0.0);

  // H' = floor((H + 2 pad - k)/stride) + 1
  Tensor k3 = Tensor::zeros({2, 1, 3, 3});
  CHECK(conv2d(img, k3, 2, 1).shape() == Shape{2, 3, 3});
  CHECK_THROWS_AS(conv2d(img, Tensor::zeros({1, 1, 7, 7}), 1, 0), shape_error);
}

TEST_CASE("conv2d gradient vs finite differences (1e-7 max abs)") {
  Rng rng(17);
  Tensor img = random_tensor({2, 5, 5}, rng);
  Tensor k = random_tensor({3, 2, 3, 3}, rng);
  auto report = fd_check([&] { return sum(conv2d(img, k, 1, 1)); }, {img, k});
  CHECK(report.max_abs <= 1e-7);
}

TEST_CASE("concat joins along the axis and routes gradients") {
  Tensor a = Tensor::from({2}, {1, 2});
  Tensor b = Tensor::from({3}, {3, 4, 5});
  Tensor c = concat(a, b, 0);
  CHECK(c.shape() == Shape{5});
  for (std::size_t i = 0; i < 5; ++i) CHECK(c.at(i) == double(i + 1));

  Tensor m1 = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor m2 = Tensor::from({2, 1}, {9, 8});
  Tensor m = concat(m1, m2, 1);
  CHECK(m.shape() == Shape{2, 3});
  CHECK(m.at(2) == 9);
  CHECK(m.at(5) == 8);
  CHECK_THROWS_AS(concat(m1, Tensor::zeros({3, 3}), 1), shape_error);

  Rng rng(23);
  Tensor ga = random_tensor({3}, rng);
  Tensor gb = random_tensor({4}, rng);
  auto report = fd_check([&] { return sum(hadamard(concat(ga, gb, 0), concat(gb, ga, 0))); },
                         {ga, gb});
  CHECK(report.max_rel <= 1e-7);
}

TEST_CASE("max_over_set: singleton, coordinatewise, permutation invariance") {
  Tensor d1 = Tensor::from({3}, {0.5, -1, 2});
  Tensor only = max_over_set({d1});
  for (std::size_t i = 0; i < 3; ++i) CHECK(only.at(i) == d1.at(i));

  Tensor a = Tensor::from({2}, {1, -2});
  Tensor b = Tensor::from({2}, {0, 5});
  Tensor mx = max_over_set({a, b});
  CHECK(mx.at(0) == 1);
  CHECK(mx.at(1) == 5);

  Rng rng(31);
  std::vector<Tensor> set;
  for (int i = 0; i < 6; ++i) set.push_back(random_tensor({5}, rng, -2, 2, false));
  Tensor base = max_over_set(set);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<Tensor> perm = set;
    rng.shuffle(perm);
    Tensor shuffled = max_over_set(perm);
    for (std::size_t i = 0; i < 5; ++i) CHECK(shuffled.at(i) == base.at(i));
  }

  CHECK_THROWS_AS(max_over_set({}), shape_error);
  CHECK_THROWS_AS(max_over_set({a, Tensor::zeros({3})}), shape_error);
}

TEST_CASE("max_over_set backward routes ties to the lowest index") {
  Tensor a = Tensor::from({2}, {1.0, 3.0}, true);
  Tensor b = Tensor::from({2}, {1.0, 4.0}, true);
  backward(sum(max_over_set({a, b})));
  CHECK(a.grad()[0] == 1.0);  // tie at coordinate 0 goes to the first input
  CHECK(b.grad()[0] == 0.0);
  CHECK(a.grad()[1] == 0.0);
  CHECK(b.grad()[1] == 1.0);
}

TEST_CASE("cross_entropy: certain prediction, uniform logits, analytic gradient") {
  Tensor sure = Tensor::from({3}, {40.0, 0.0, -5.0});
  CHECK(cross_entropy(sure, 0).item() < 1e-12);
  CHECK(cross_entropy(sure, 0).item() >= 0.0);

  Tensor uniform = Tensor::full({4}, 1.7);
  CHECK(cross_entropy(uniform, 2).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Rng rng(13);
  Tensor logits = random_tensor({6}, rng, -2, 2);
  const std::size_t label = 4;
  backward(cross_entropy(logits, label));
  Tensor probs = softmax(logits.detached());
  for (std::size_t i = 0; i < 6; ++i) {
    const double expected = probs.at(i) - (i == label ? 1.0 : 0.0);
    CHECK(logits.grad()[i] == doctest::Approx(expected).epsilon(1e-12));
  }
  auto report = fd_check([&] { return cross_entropy(logits, label); }, {logits});
  CHECK(report.max_rel <= 1e-8);

  CHECK_THROWS_AS(cross_entropy(logits, 6), std::invalid_argument);
}

TEST_CASE("backward requires a scalar; sgd_step applies the update and zeroes grads") {
  Tensor v = Tensor::from({3}, {1, 2, 3}, true);
  CHECK_THROWS_AS(backward(scale(v, 2.0)), shape_error);

  Tensor theta = Tensor::from({2}, {1.0, 2.0}, true);
  theta.grad() = {0.5, -1.0};
  sgd_step({theta}, 0.1);
  CHECK(theta.at(0) == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(theta.at(1) == doctest::Approx(2.1).epsilon(1e-15));
  CHECK(theta.grad()[0] == 0.0);
  CHECK(theta.grad()[1] == 0.0);

  // lr = 0 leaves parameters bit-identical
  Tensor frozen = Tensor::from({4}, {0.25, -0.5, 0.125, 9.0}, true);
  const std::vector<double> before = frozen.data();
  frozen.grad() = {1, 2, 3, 4};
  sgd_step({frozen}, 0.0);
  CHECK(std::memcmp(before.data(), frozen.data().data(), 4 * sizeof(double)) == 0);
}

TEST_CASE("every differentiable op matches finite differences on random instances") {
  Rng rng(2024);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    Tensor m2 = random_tensor({4, 2}, rng);
    Tensor vec = random_tensor({3}, rng);
    Tensor img = random_tensor({2, 4, 4}, rng);
    Tensor ker = random_tensor({2, 2, 3, 3}, rng);
    Tensor bias = random_tensor({2}, rng);

    auto check = [&](const char* op, const std::function<Tensor()>& fwd,
                     const std::vector<Tensor>& params) {
      auto report = fd_check(fwd, params);
      INFO(op);
      CHECK(report.max_rel <= 1e-5);
    };
    check("add", [&] { return sum(add(a, b)); }, {a, b});
    check("scale", [&] { return sum(scale(a, -1.7)); }, {a});
    check("hadamard", [&] { return sum(hadamard(a, b)); }, {a, b});
    check("sigmoid", [&] { return sum(sigmoid(a)); }, {a});
    check("tanh", [&] { return sum(prema::tanh(a)); }, {a});
    check("relu", [&] { return sum(relu(a)); }, {a});
    check("matmul", [&] { return sum(matmul(a, m2)); }, {a, m2});
    check("matmul_tn", [&] { return sum(matmul_tn(a, hadamard(a, a))); }, {a});
    check("matmul_vec", [&] { return sum(matmul_tn(a, vec)); }, {a, vec});
    check("softmax", [&] { return sum(hadamard(softmax(vec), vec)); }, {vec});
    check("sum", [&] { return sum(a); }, {a});
    check("row_mean", [&] { return sum(row_mean(a)); }, {a});
    check("reshape", [&] { return sum(hadamard(reshape(a, {4, 3}), reshape(b, {4, 3}))); },
          {a, b});
    check("concat", [&] { return sum(hadamard(concat(a, b, 1), concat(b, a, 1))); }, {a, b});
    check("max_over_set", [&] { return sum(max_over_set({vec, hadamard(vec, vec)})); }, {vec});
    Tensor weights = random_tensor({2}, rng);
    check("weighted_column_sum", [&] { return sum(weighted_column_sum(m2, weights)); },
          {m2, weights});
    check("conv2d", [&] { return sum(conv2d(img, ker, 2, 1)); }, {img, ker});
    check("add_channel_bias", [&] { return sum(add_channel_bias(img, bias)); }, {img, bias});
    check("cross_entropy", [&] { return cross_entropy(vec, 1); }, {vec});
  }
}

TEST_CASE("tape is topologically ordered and replays deterministically") {
  Rng rng(6);
  Tensor a = random_tensor({4}, rng);
  Tensor b = random_tensor({4}, rng);
  Tensor h = hadamard(sigmoid(a), prema::tanh(b));
  Tensor loss = sum(hadamard(h, h));

  Tape tape = Tape::record(loss);
  const auto& order = tape.nodes();
  // every node's parents appear before it
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (const auto& parent : order[i]->parents) {
      bool seen = false;
      for (std::size_t j = 0; j < i; ++j) seen = seen || order[j] == parent.get();
      CHECK(seen);
    }
  }

  backward(loss);
  std::vector<double> first_a = a.grad();
  std::vector<double> first_b = b.grad();
  backward(loss);
  CHECK(std::memcmp(first_a.data(), a.grad().data(), first_a.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(first_b.data(), b.grad().data(), first_b.size() * sizeof(double)) == 0);
}

TEST_CASE("non-finite values are rejected at op boundaries") {
  CHECK_THROWS_AS(Tensor::from({2}, {1.0, std::nan("")}), numeric_error);
  Tensor big = Tensor::full({2}, 1e308);
  CHECK_THROWS_AS(add(big, big), numeric_error);
  CHECK_THROWS_AS(hadamard(big, big), numeric_error);
  Tensor ok = Tensor::from({1, 2, 2}, {1e200, 1e200, 1e200, 1e200});
  CHECK_THROWS_AS(conv2d(ok, Tensor::full({1, 1, 2, 2}, 1e200), 1, 0), numeric_error);
}

TEST_CASE("tensor invariants: positive dims, grad shape, item") {
  CHECK_THROWS_AS(Tensor::zeros({3, 0}), shape_error);
  CHECK_THROWS_AS(Tensor::from({2}, {1.0}), shape_error);
  Tensor t = Tensor::zeros({2, 3}, true);
  CHECK(t.grad().size() == t.size());
  CHECK_THROWS_AS(Tensor::zeros({2}).item(), shape_error);
  CHECK(Tensor::scalar(4.5).item() == 4.5);
}

TEST_SUITE_END();
