#include <cmath>
#include <cstring>

#include <doctest.h>

#include "prema/aggregator.hpp"
#include "testutil.hpp"

using namespace prema;
using testutil::fd_check;
using testutil::random_tensor;

namespace {

LstmParams random_lstm(std::size_t d_in, std::size_t d_h, Rng& rng, double scale = 0.8) {
  LstmParams p = LstmParams::zeros(d_in, d_h, true);
  for (Tensor& t : p.all()) {
    for (double& v : t.data()) v = rng.uniform(-scale, scale);
  }
  return p;
}

// Feature-level model: aggregate() never touches the encoder, so tests can
// drive arbitrary (m, v) dimensions directly.
PremaParams make_feature_model(std::size_t c_v, std::size_t c_m, std::size_t d_h1,
                               std::size_t d_k, std::size_t d_h2, std::size_t classes,
                               AggregationVariant variant, Rng& rng) {
  PremaParams p;
  p.variant = variant;
  p.dims.d_h1 = d_h1;
  p.dims.d_k = d_k;
  p.dims.d_h2 = d_h2;
  p.dims.class_count = classes;
  if (p.has_lstms()) {
    p.level1_fwd = random_lstm(c_v, d_h1, rng);
    if (p.bidirectional()) p.level1_bwd = random_lstm(c_v, d_h1, rng);
    if (p.has_rau()) {
      p.rau.W_h = random_tensor({p.level1_out_dim(), d_k}, rng);
      p.rau.W_r = random_tensor({c_m, d_k}, rng);
      p.rau.W_g = random_tensor({c_m, d_k}, rng);
    }
    p.level2_fwd = random_lstm(p.level2_in_dim(), d_h2, rng);
    if (p.bidirectional()) p.level2_bwd = random_lstm(p.level2_in_dim(), d_h2, rng);
  }
  const std::size_t desc = variant == AggregationVariant::MaxPoolOnly ? c_v : p.descriptor_dim();
  p.cls_w = random_tensor({classes, desc}, rng);
  p.cls_b = random_tensor({classes}, rng, -0.1, 0.1);
  return p;
}

std::vector<ViewFeatures> random_views(std::size_t n, std::size_t c_m, std::size_t n_loc,
                                       std::size_t c_v, Rng& rng) {
  std::vector<ViewFeatures> out;
  for (std::size_t t = 0; t < n; ++t) {
    out.push_back({random_tensor({c_m, n_loc}, rng, -1, 1, false),
                   random_tensor({c_v}, rng, -1, 1, false)});
  }
  return out;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar peephole cell with vector input, mirroring Eqs. 2-6 in plain
// doubles for the unrolled oracle.
struct OracleCell {
  std::vector<double> Wi, Wf, Wc, Wo;  // d_in each (d_h = 1)
  double Ui, Uf, Uc, Uo, Hi, Hf, Ho, bi, bf, bc, bo;

  static double dot(const std::vector<double>& w, const std::vector<double>& x) {
    double acc = 0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * x[i];
    return acc;
  }
  void step(const std::vector<double>& x, double& h, double& c) const {
    const double i = sig(dot(Wi, x) + Ui * h + Hi * c + bi);
    const double f = sig(dot(Wf, x) + Uf * h + Hf * c + bf);
    const double g = std::tanh(dot(Wc, x) + Uc * h + bc);
    const double c_new = f * c + i * g;
    const double o = sig(dot(Wo, x) + Uo * h + Ho * c_new + bo);
    c = c_new;
    h = o * std::tanh(c);
  }
};

OracleCell cell_of(const LstmParams& p) {
  OracleCell c;
  c.Wi = p.W_i.data();
  c.Wf = p.W_f.data();
  c.Wc = p.W_c.data();
  c.Wo = p.W_o.data();
  c.Ui = p.U_i.at(0);
  c.Uf = p.U_f.at(0);
  c.Uc = p.U_c.at(0);
  c.Uo = p.U_o.at(0);
  c.Hi = p.H_i.at(0);
  c.Hf = p.H_f.at(0);
  c.Ho = p.H_o.at(0);
  c.bi = p.b_i.at(0);
  c.bf = p.b_f.at(0);
  c.bc = p.b_c.at(0);
  c.bo = p.b_o.at(0);
  return c;
}

}  // namespace

TEST_SUITE_BEGIN("aggregator");

TEST_CASE("variant names round-trip") {
  for (AggregationVariant v :
       {AggregationVariant::Prema, AggregationVariant::DoubleLstms,
        AggregationVariant::MaxPoolOnly, AggregationVariant::SingleDirectionPrema}) {
    CHECK(parse_variant(to_string(v)) == v);
  }
  CHECK_THROWS_AS(parse_variant("prema"), std::invalid_argument);
}

TEST_CASE("prema_step with zero parameters: uniform confidence, zero output") {
  Rng rng(41);
  PremaParams p = make_feature_model(2, 3, 2, 2, 2, 3, AggregationVariant::Prema, rng);
  for (Tensor& t : p.all()) std::fill(t.data().begin(), t.data().end(), 0.0);
  Tensor o1 = Tensor::zeros({p.level1_out_dim()});
  Tensor m = random_tensor({3, 5}, rng, -1, 1, false);
  auto [trace, state] = prema_step(p, o1, m, LstmState::zeros(2));
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(trace.conf.conf.at(i) == doctest::Approx(0.2).epsilon(1e-15));
  }
  for (std::size_t j = 0; j < trace.d.size(); ++j) CHECK(trace.d.at(j) == 0.0);
}

TEST_CASE("prema_step: the trace output is definitionally the LSTM2 output") {
  Rng rng(42);
  for (int rep = 0; rep < 100; ++rep) {
    PremaParams p = make_feature_model(2, 3, 2, 2, 2, 3, AggregationVariant::Prema, rng);
    auto views = random_views(3, 3, 4, 2, rng);
    auto [desc, traces] = aggregate(p, views, "x");
    for (const PremaStepTrace& tr : traces) {
      REQUIRE(tr.d.size() == tr.o2.size());
      for (std::size_t j = 0; j < tr.d.size(); ++j) CHECK(tr.d.at(j) == tr.o2.at(j));
    }
  }
}

TEST_CASE("prema_step matches manual composition of rau_forward + lstm_cell_step") {
  Rng rng(43);
  PremaParams p = make_feature_model(2, 3, 2, 2, 2, 3, AggregationVariant::Prema, rng);
  Tensor o1 = random_tensor({p.level1_out_dim()}, rng, -1, 1, false);
  Tensor m = random_tensor({3, 5}, rng, -1, 1, false);
  LstmState st = LstmState::zeros(2);
  auto [trace, next] = prema_step(p, o1, m, st);

  auto [att, conf] = rau_forward(p.rau, o1, m);
  Tensor x = concat(att.att_part, o1, 0);
  auto [manual, gates] = lstm_cell_step(p.level2_fwd, x, st);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(trace.o2.at(j) == manual.h.at(j));
    CHECK(next.c.at(j) == manual.c.at(j));
  }
}

TEST_CASE("aggregate with one view: descriptor is that step's output") {
  Rng rng(44);
  for (AggregationVariant v :
       {AggregationVariant::Prema, AggregationVariant::DoubleLstms,
        AggregationVariant::SingleDirectionPrema}) {
    PremaParams p = make_feature_model(2, 3, 2, 2, 2, 3, v, rng);
    auto views = random_views(1, 3, 4, 2, rng);
    auto [desc, traces] = aggregate(p, views, "one");
    REQUIRE(traces.size() == 1);
    for (std::size_t j = 0; j < desc.D.size(); ++j) CHECK(desc.D.at(j) == traces[0].d.at(j));
  }
  PremaParams mp = make_feature_model(2, 3, 2, 2, 2, 3, AggregationVariant::MaxPoolOnly, rng);
  auto views = random_views(1, 3, 4, 2, rng);
  auto [desc, traces] = aggregate(mp, views, "one");
  CHECK(traces.empty());
  for (std::size_t j = 0; j < desc.D.size(); ++j) CHECK(desc.D.at(j) == views[0].v.at(j));

  CHECK_THROWS_AS(aggregate(mp, {}, "none"), std::invalid_argument);
}

TEST_CASE("Eq.1: descriptor equals the coordinatewise max of the traces, bit-exact") {
  Rng rng(45);
  for (AggregationVariant v : {AggregationVariant::Prema, AggregationVariant::DoubleLstms}) {
    PremaParams p = make_feature_model(2, 3, 2, 2, 2, 3, v, rng);
    auto views = random_views(5, 3, 4, 2, rng);
    auto [desc, traces] = aggregate(p, views, "eq1");
    for (std::size_t j = 0; j < desc.D.size(); ++j) {
      double mx = traces[0].d.at(j);
      for (const auto& tr : traces) mx = std::max(mx, tr.d.at(j));
      CHECK(desc.D.at(j) == mx);
      bool from_some_step = false;
      for (const auto& tr : traces) from_some_step = from_some_step || tr.d.at(j) == desc.D.at(j);
      CHECK(from_some_step);
    }
  }
}

TEST_CASE("MaxPoolOnly is permutation invariant; recurrent variants are order sensitive") {
  Rng rng(46);
  PremaParams mp = make_feature_model(3, 3, 2, 2, 2, 3, AggregationVariant::MaxPoolOnly, rng);
  auto views = random_views(6, 3, 4, 3, rng);
  auto [base, t0] = aggregate(mp, views, "perm");
  for (int rep = 0; rep < 50; ++rep) {
    auto shuffled = views;
    rng.shuffle(shuffled);
    auto [d, t] = aggregate(mp, shuffled, "perm");
    for (std::size_t j = 0; j < d.D.size(); ++j) CHECK(d.D.at(j) == base.D.at(j));
  }

  for (AggregationVariant v : {AggregationVariant::Prema, AggregationVariant::DoubleLstms}) {
    PremaParams p = make_feature_model(3, 3, 2, 2, 2, 3, v, rng);
    auto [ref, tr] = aggregate(p, views, "perm");
    bool changed = false;
    for (int rep = 0; rep < 50 && !changed; ++rep) {
      auto shuffled = views;
      rng.shuffle(shuffled);
      auto [d, t] = aggregate(p, shuffled, "perm");
      for (std::size_t j = 0; j < d.D.size(); ++j) changed = changed || d.D.at(j) != ref.D.at(j);
    }
    CHECK(changed);
  }
}

TEST_CASE("variant collapse: W_g = 0 PREMA equals the zero-padded two-LSTM pipeline") {
  Rng rng(47);
  PremaParams p = make_feature_model(2, 3, 2, 2, 2, 3, AggregationVariant::Prema, rng);
  std::fill(p.rau.W_g.data().begin(), p.rau.W_g.data().end(), 0.0);
  auto views = random_views(4, 3, 5, 2, rng);
  auto [desc, traces] = aggregate(p, views, "collapse");

  // the same computation with the attention removed and the LSTM2 input
  // zero-padded in the attPart slots
  std::vector<Tensor> inputs;
  for (const auto& vf : views) inputs.push_back(vf.v);
  auto o1 = bilstm_run(p.level1_fwd, p.level1_bwd, inputs);
  std::vector<Tensor> xs;
  for (const Tensor& o : o1) xs.push_back(concat(Tensor::zeros({p.dims.d_k}), o, 0));
  auto fwd = lstm_run(p.level2_fwd, xs, LstmState::zeros(p.dims.d_h2));
  std::vector<Tensor> xs_rev(xs.rbegin(), xs.rend());
  auto bwd = lstm_run(p.level2_bwd, xs_rev, LstmState::zeros(p.dims.d_h2));
  std::vector<Tensor> ds;
  const std::size_t n = views.size();
  for (std::size_t t = 0; t < n; ++t) {
    ds.push_back(concat(fwd[t].h, bwd[n - 1 - t].h, 0));
  }
  Tensor expected = max_over_set(ds);
  REQUIRE(desc.D.size() == expected.size());
  for (std::size_t j = 0; j < expected.size(); ++j) CHECK(desc.D.at(j) == expected.at(j));
}

TEST_CASE("3-view scalar PREMA against a fully unrolled hand computation") {
  Rng rng(48);
  // c_v=1, d_h1=1 (C_o=2), c_m=1, N=2, d_k=1, d_h2=1 (descriptor dim 2)
  PremaParams p = make_feature_model(1, 1, 1, 1, 1, 2, AggregationVariant::Prema, rng);
  const std::vector<double> vs = {0.8, -0.4, 0.3};
  const std::vector<std::array<double, 2>> ms = {{0.5, -0.2}, {0.1, 0.9}, {-0.7, 0.4}};
  std::vector<ViewFeatures> views;
  for (std::size_t t = 0; t < 3; ++t) {
    views.push_back({Tensor::from({1, 2}, {ms[t][0], ms[t][1]}), Tensor::from({1}, {vs[t]})});
  }
  auto [desc, traces] = aggregate(p, views, "scalar");

  // ---- oracle ----
  const OracleCell l1f = cell_of(p.level1_fwd);
  const OracleCell l1b = cell_of(p.level1_bwd);
  const OracleCell l2f = cell_of(p.level2_fwd);
  const OracleCell l2b = cell_of(p.level2_bwd);
  double hf = 0, cf = 0, hb = 0, cb = 0;
  std::vector<double> fwd1(3), bwd1(3);
  for (std::size_t t = 0; t < 3; ++t) {
    l1f.step({vs[t]}, hf, cf);
    fwd1[t] = hf;
    l1b.step({vs[2 - t]}, hb, cb);
    bwd1[t] = hb;
  }
  const double wh0 = p.rau.W_h.at(0), wh1 = p.rau.W_h.at(1);
  const double wr = p.rau.W_r.at(0), wg = p.rau.W_g.at(0);
  std::vector<std::vector<double>> xs(3);
  for (std::size_t t = 0; t < 3; ++t) {
    const double o1_0 = fwd1[t], o1_1 = bwd1[2 - t];
    const double query = wh0 * o1_0 + wh1 * o1_1;
    const double s0 = query * (wr * ms[t][0]);
    const double s1 = query * (wr * ms[t][1]);
    const double mx = std::max(s0, s1);
    const double e0 = std::exp(s0 - mx), e1 = std::exp(s1 - mx);
    const double conf0 = e0 / (e0 + e1), conf1 = e1 / (e0 + e1);
    CHECK(traces[t].conf.conf.at(0) == doctest::Approx(conf0).epsilon(1e-12));
    CHECK(traces[t].conf.conf.at(1) == doctest::Approx(conf1).epsilon(1e-12));
    const double att = conf0 * (wg * ms[t][0]) + conf1 * (wg * ms[t][1]);
    CHECK(traces[t].att_part.att_part.at(0) == doctest::Approx(att).epsilon(1e-12));
    xs[t] = {att, o1_0, o1_1};
  }
  double h2f = 0, c2f = 0, h2b = 0, c2b = 0;
  std::vector<double> fwd2(3), bwd2(3);
  for (std::size_t t = 0; t < 3; ++t) {
    l2f.step(xs[t], h2f, c2f);
    fwd2[t] = h2f;
    l2b.step(xs[2 - t], h2b, c2b);
    bwd2[t] = h2b;
  }
  double d0 = -1e30, d1 = -1e30;
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(traces[t].d.at(0) == doctest::Approx(fwd2[t]).epsilon(1e-12));
    CHECK(traces[t].d.at(1) == doctest::Approx(bwd2[2 - t]).epsilon(1e-12));
    d0 = std::max(d0, fwd2[t]);
    d1 = std::max(d1, bwd2[2 - t]);
  }
  CHECK(desc.D.at(0) == doctest::Approx(d0).epsilon(1e-12));
  CHECK(desc.D.at(1) == doctest::Approx(d1).epsilon(1e-12));
}

TEST_CASE("classify: zero map, identity map, end-to-end gradient flow") {
  Rng rng(49);
  PremaParams p = make_feature_model(2, 3, 2, 2, 2, 2, AggregationVariant::Prema, rng);
  std::fill(p.cls_w.data().begin(), p.cls_w.data().end(), 0.0);
  std::fill(p.cls_b.data().begin(), p.cls_b.data().end(), 0.0);
  ShapeDescriptor d{Tensor::from({4}, {1, 2, 3, 4}), p.variant, "zero"};
  Tensor logits = classify(p, d);
  for (std::size_t i = 0; i < 2; ++i) CHECK(logits.at(i) == 0.0);

  PremaParams ident = make_feature_model(2, 3, 2, 2, 1, 2, AggregationVariant::Prema, rng);
  ident.cls_w = Tensor::from({2, 2}, {1, 0, 0, 1}, true);
  ident.cls_b = Tensor::zeros({2}, true);
  ShapeDescriptor d2{Tensor::from({2}, {3, -1}), ident.variant, "ident"};
  Tensor logits2 = classify(ident, d2);
  CHECK(logits2.at(0) == 3.0);
  CHECK(logits2.at(1) == -1.0);

  ShapeDescriptor bad{Tensor::from({5}, {1, 2, 3, 4, 5}), p.variant, "bad"};
  CHECK_THROWS_AS(classify(p, bad), shape_error);
}

TEST_CASE("end-to-end gradients on the sliced config pass FD for every parameter array") {
  Rng rng(50);
  // n=3, C_m=4, N=6, d_h1=3, d_k=4, d_h2=4, C=3, c_v=3
  PremaParams p = make_feature_model(3, 4, 3, 4, 4, 3, AggregationVariant::Prema, rng);
  auto views = random_views(3, 4, 6, 3, rng);
  auto params = p.all();
  CHECK(params.size() == 65);
  auto report = fd_check(
      [&] {
        auto [desc, traces] = aggregate(p, views, "fd");
        return cross_entropy(classify(p, desc), 1);
      },
      params);
  CHECK(report.max_rel <= 1e-5);
}

TEST_CASE("determinism: identical parameters and views give byte-identical descriptors") {
  Rng rng(51);
  PremaParams p = make_feature_model(2, 3, 2, 2, 2, 3, AggregationVariant::Prema, rng);
  auto views = random_views(4, 3, 5, 2, rng);
  auto [d1, t1] = aggregate(p, views, "det");
  auto [d2, t2] = aggregate(p, views, "det");
  CHECK(std::memcmp(d1.D.data().data(), d2.D.data().data(), d1.D.size() * sizeof(double)) == 0);
}

TEST_SUITE_END();
