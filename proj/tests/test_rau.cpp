#include <cmath>
#include <cstring>

#include <doctest.h>

#include "prema/rau.hpp"
#include "testutil.hpp"

using namespace prema;
using testutil::fd_check;
using testutil::random_tensor;

namespace {

RauParams random_rau(std::size_t c_o, std::size_t c_m, std::size_t d_k, Rng& rng) {
  RauParams p;
  p.W_h = random_tensor({c_o, d_k}, rng);
  p.W_r = random_tensor({c_m, d_k}, rng);
  p.W_g = random_tensor({c_m, d_k}, rng);
  return p;
}

}  // namespace

TEST_SUITE_BEGIN("rau");

TEST_CASE("N = 1: singleton softmax, attPart equals the value projection exactly") {
  Rng rng(21);
  RauParams p = random_rau(3, 4, 2, rng);
  Tensor o1 = random_tensor({3}, rng, -1, 1, false);
  Tensor m = random_tensor({4, 1}, rng, -1, 1, false);
  auto [att, conf] = rau_forward(p, o1, m);
  CHECK(conf.conf.size() == 1);
  CHECK(conf.conf.at(0) == 1.0);

  Tensor expected = matmul_tn(p.W_g.detached(), reshape(m, {4}));
  CHECK(att.att_part.shape() == Shape{2});
  for (std::size_t j = 0; j < 2; ++j) CHECK(att.att_part.at(j) == expected.at(j));
}

TEST_CASE("W_r = 0: uniform confidence, attPart is the mean value projection") {
  Rng rng(22);
  const std::size_t n_loc = 5;
  RauParams p = random_rau(3, 4, 2, rng);
  p.W_r = Tensor::zeros({4, 2}, true);
  Tensor o1 = random_tensor({3}, rng, -1, 1, false);
  Tensor m = random_tensor({4, n_loc}, rng, -1, 1, false);
  auto [att, conf] = rau_forward(p, o1, m);
  for (std::size_t i = 0; i < n_loc; ++i) {
    CHECK(conf.conf.at(i) == doctest::Approx(1.0 / n_loc).epsilon(1e-15));
  }
  Tensor values = matmul_tn(p.W_g.detached(), m);  // 2 x N
  for (std::size_t j = 0; j < 2; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < n_loc; ++i) mean += values.at(j * n_loc + i);
    mean /= n_loc;
    CHECK(att.att_part.at(j) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("scalar oracle: h(o1)=2, r(m)=[1,0] gives conf [0.880797, 0.119203]") {
  RauParams p;
  p.W_h = Tensor::from({1, 1}, {2.0}, true);  // o1 = 1 -> query 2
  p.W_r = Tensor::from({1, 1}, {1.0}, true);  // m = [1, 0] -> keys [1, 0]
  p.W_g = Tensor::from({1, 1}, {0.7}, true);
  Tensor o1 = Tensor::from({1}, {1.0});
  Tensor m = Tensor::from({1, 2}, {1.0, 0.0});
  auto [att, conf] = rau_forward(p, o1, m);

  CHECK(conf.scores.at(0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(conf.scores.at(1) == 0.0);
  const double e2 = std::exp(2.0);
  CHECK(conf.conf.at(0) == doctest::Approx(e2 / (e2 + 1)).epsilon(1e-12));
  CHECK(conf.conf.at(1) == doctest::Approx(1 / (e2 + 1)).epsilon(1e-12));
  CHECK(conf.conf.at(0) == doctest::Approx(0.880797).epsilon(1e-6));
  CHECK(conf.conf.at(1) == doctest::Approx(0.119203).epsilon(1e-6));
  // attPart = conf_0 * g(m^1) + conf_1 * g(m^2) with g(m^1)=0.7, g(m^2)=0
  CHECK(att.att_part.at(0) ==
        doctest::Approx(conf.conf.at(0) * 0.7 + conf.conf.at(1) * 0.0).epsilon(1e-15));
}

TEST_CASE("normalization: confidence sums to 1 within 1e-12 on 1000 random instances") {
  Rng rng(23);
  for (int rep = 0; rep < 1000; ++rep) {
    RauParams p = random_rau(2, 3, 2, rng);
    Tensor o1 = random_tensor({2}, rng, -2, 2, false);
    Tensor m = random_tensor({3, 6}, rng, -2, 2, false);
    auto [att, conf] = rau_forward(p, o1, m);
    double total = 0;
    for (std::size_t i = 0; i < conf.conf.size(); ++i) {
      CHECK(conf.conf.at(i) > 0.0);
      CHECK(conf.conf.at(i) <= 1.0);
      total += conf.conf.at(i);
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("the sqrt(d_k) divisor is live: zero-padding d_k scales scores by 1/sqrt(2)") {
  Rng rng(24);
  const std::size_t d_k = 2;
  RauParams p = random_rau(3, 4, d_k, rng);
  Tensor o1 = random_tensor({3}, rng, -1, 1, false);
  Tensor m = random_tensor({4, 5}, rng, -1, 1, false);
  auto [att1, c1] = rau_forward(p, o1, m);

  // extend W_h / W_r with zero columns: dot products unchanged, divisor grows
  RauParams wide;
  auto pad = [&](const Tensor& t) {
    std::vector<double> v;
    for (std::size_t r = 0; r < t.shape()[0]; ++r) {
      for (std::size_t c = 0; c < d_k; ++c) v.push_back(t.at(r * d_k + c));
      for (std::size_t c = 0; c < d_k; ++c) v.push_back(0.0);
    }
    return Tensor::from({t.shape()[0], 2 * d_k}, std::move(v), true);
  };
  wide.W_h = pad(p.W_h);
  wide.W_r = pad(p.W_r);
  wide.W_g = pad(p.W_g);
  auto [att2, c2] = rau_forward(wide, o1, m);
  const double ratio = std::sqrt(2.0);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(c2.scores.at(i) * ratio == doctest::Approx(c1.scores.at(i)).epsilon(1e-14));
  }
}

TEST_CASE("location-permutation equivariance is exact") {
  Rng rng(25);
  const std::size_t n_loc = 7;
  RauParams p = random_rau(3, 4, 2, rng);
  Tensor o1 = random_tensor({3}, rng, -1, 1, false);
  Tensor m = random_tensor({4, n_loc}, rng, -1, 1, false);
  auto [att, conf] = rau_forward(p, o1, m);

  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::size_t> perm(n_loc);
    for (std::size_t i = 0; i < n_loc; ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<double> permuted(4 * n_loc);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t i = 0; i < n_loc; ++i) {
        permuted[r * n_loc + i] = m.at(r * n_loc + perm[i]);
      }
    }
    auto [att_p, conf_p] = rau_forward(p, o1, Tensor::from({4, n_loc}, permuted));
    for (std::size_t i = 0; i < n_loc; ++i) {
      CHECK(conf_p.conf.at(i) == conf.conf.at(perm[i]));
      CHECK(conf_p.scores.at(i) == conf.scores.at(perm[i]));
    }
    for (std::size_t j = 0; j < 2; ++j) CHECK(att_p.att_part.at(j) == att.att_part.at(j));
  }
}

TEST_CASE("gradients through all three projections match finite differences") {
  Rng rng(26);
  RauParams p = random_rau(3, 4, 2, rng);
  Tensor o1 = random_tensor({3}, rng);
  Tensor m = random_tensor({4, 5}, rng);
  auto report = fd_check(
      [&] {
        auto [att, conf] = rau_forward(p, o1, m);
        return sum(hadamard(att.att_part, att.att_part));
      },
      {p.W_h, p.W_r, p.W_g, o1, m});
  CHECK(report.max_rel <= 1e-5);
}

TEST_CASE("monotone attention: pushing a score up strictly raises its confidence") {
  Rng rng(27);
  for (int rep = 0; rep < 20; ++rep) {
    RauParams p = random_rau(2, 3, 2, rng);
    Tensor o1 = random_tensor({2}, rng, -1, 1, false);
    Tensor m = random_tensor({3, 4}, rng, -1, 1, false);
    auto [att0, c0] = rau_forward(p, o1, m);

    // perturb location j along the key preimage direction that raises s_j
    const std::size_t j = rep % 4;
    Tensor query = matmul_tn(p.W_h.detached(), o1);  // d_k
    std::vector<double> bumped = m.data();
    // r(m_j + dm) = r(m_j) + W_r^T dm; choose dm = W_r query so the score
    // change is query . W_r^T W_r query >= 0 (strictly > 0 generically)
    for (std::size_t row = 0; row < 3; ++row) {
      double delta = 0;
      for (std::size_t kk = 0; kk < 2; ++kk) delta += p.W_r.at(row * 2 + kk) * query.at(kk);
      bumped[row * 4 + j] += 0.5 * delta;
    }
    auto [att1, c1] = rau_forward(p, o1, Tensor::from({3, 4}, bumped));
    if (c1.scores.at(j) > c0.scores.at(j)) {
      CHECK(c1.conf.at(j) > c0.conf.at(j));
    }
  }
}

TEST_CASE("dimension mismatches are rejected") {
  Rng rng(28);
  RauParams p = random_rau(3, 4, 2, rng);
  CHECK_THROWS_AS(rau_forward(p, Tensor::zeros({2}), Tensor::zeros({4, 5})), shape_error);
  CHECK_THROWS_AS(rau_forward(p, Tensor::zeros({3}), Tensor::zeros({5, 5})), shape_error);
}

TEST_SUITE_END();
