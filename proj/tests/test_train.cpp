#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "mnnh2/h2.hpp"
#include "mnnh2/train.hpp"
#include "test_util.hpp"

using namespace mnnh2;

namespace {

// Single scalar parameter wrapped as a model so the optimizer can drive it.
struct ScalarModel {
  using value_type = double;
  Layer lay;
  ScalarModel() {
    LayerSpec sp = interpolation_spec(1, {1, 1}, 1, 1, Activation::linear, Sharing::local);
    sp.bias = false;
    lay = Layer(sp);
  }
  int num_layers() const { return 1; }
  Layer* layer_at(int) { return &lay; }
  const Layer* layer_at(int) const { return &lay; }
};

Dataset realizable_dataset(const H2Matrix& h2, std::int64_t count, std::uint64_t seed) {
  Dataset ds;
  ds.d = 1;
  ds.N = h2.dim();
  RngStream rng(seed);
  for (std::int64_t i = 0; i < count; ++i) {
    Eigen::VectorXd v(ds.N);
    for (std::int64_t k = 0; k < ds.N; ++k) v[k] = rng.normal();
    const Eigen::VectorXd u = matvec(h2, v);
    ds.inputs.push_back(Tensor({1, ds.N}, std::vector<double>(v.data(), v.data() + ds.N)));
    ds.targets.push_back(Tensor({1, ds.N}, std::vector<double>(u.data(), u.data() + ds.N)));
  }
  return ds;
}

NetworkConfig small_linear_cfg() {
  NetworkConfig cfg;
  cfg.d = 1;
  cfg.N = 40;
  cfg.L = 3;
  cfg.m = 5;
  cfg.r = 2;
  cfg.K = 1;
  cfg.sharing = SharingMode::lc;
  cfg.activation = Activation::linear;
  return cfg;
}

}  // namespace

TEST_CASE("mse loss basics and the elementwise oracle") {
  const Tensor a = testutil::random_tensor({1, 12}, 1);
  CHECK(mse_loss(a, a) == 0.0);

  Tensor ones({1, 10});
  Tensor zero({1, 10});
  for (auto& v : ones.data) v = 1.0;
  CHECK(mse_loss(ones, zero) == doctest::Approx(1.0));

  const Tensor p = testutil::random_tensor({1, 7}, 2);
  const Tensor t = testutil::random_tensor({1, 7}, 3);
  Tensor grad;
  const double got = mse_loss(p, t, &grad);
  double want = 0.0;
  for (int i = 0; i < 7; ++i) want += std::pow(p.data[i] - t.data[i], 2);
  want /= 7.0;
  CHECK(got == doctest::Approx(want).epsilon(1e-14));
  for (int i = 0; i < 7; ++i)
    CHECK(grad.data[i] == doctest::Approx(2.0 * (p.data[i] - t.data[i]) / 7.0).epsilon(1e-14));
}

TEST_CASE("relative l2 error basics") {
  const Tensor t = testutil::random_tensor({1, 9}, 4);
  CHECK(rel_l2_error(t, t) == 0.0);
  Tensor twice = t;
  for (auto& v : twice.data) v *= 2.0;
  CHECK(rel_l2_error(twice, t) == doctest::Approx(1.0).epsilon(1e-14));

  const Tensor p = testutil::random_tensor({1, 9}, 5);
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 9; ++i) {
    num += std::pow(p.data[i] - t.data[i], 2);
    den += t.data[i] * t.data[i];
  }
  CHECK(rel_l2_error(p, t) == doctest::Approx(std::sqrt(num / den)).epsilon(1e-14));

  CHECK_THROWS_AS(rel_l2_error(p, Tensor({1, 9})), numeric_error);
}

TEST_CASE("error statistics equal a direct two-pass computation") {
  const std::vector<double> eps = {0.1, 0.4, 0.25, 0.05, 0.9};
  const ErrorStats st = error_stats(eps);
  double mean = 0.0;
  for (double e : eps) mean += e;
  mean /= 5.0;
  double var = 0.0;
  for (double e : eps) var += (e - mean) * (e - mean);
  var /= 4.0;
  CHECK(st.mean == doctest::Approx(mean).epsilon(1e-15));
  CHECK(st.stddev == doctest::Approx(std::sqrt(var)).epsilon(1e-15));
  CHECK(error_stats({0.3}).stddev == 0.0);
}

TEST_CASE("nadam leaves parameters unchanged for zero gradients") {
  ScalarModel model;
  model.lay.W[0] = 0.75;
  NadamT<double> opt;
  opt.init(model);
  GradsT<double> g;
  g.w = {{0.0}};
  g.b = {{}};
  for (int s = 0; s < 3; ++s) opt.step(model, g);
  CHECK(model.lay.W[0] == 0.75);
}

TEST_CASE("nadam matches a hand-rolled scalar reference for two steps") {
  ScalarModel model;
  model.lay.W[0] = 0.0;
  NadamT<double> opt;
  opt.cfg.lr = 1e-3;
  opt.init(model);
  GradsT<double> g;
  g.w = {{1.0}};
  g.b = {{}};
  opt.step(model, g);
  opt.step(model, g);

  // Straight-line reference of the same published update rule.
  const double beta1 = 0.9, beta2 = 0.999, lr = 1e-3, eps = 1e-8;
  auto mu = [&](double t) { return beta1 * (1.0 - 0.5 * std::pow(0.96, t / 250.0)); };
  double theta = 0.0, m = 0.0, v = 0.0, mprod = 1.0;
  for (int t = 1; t <= 2; ++t) {
    const double g0 = 1.0;
    const double mu_t = mu(t), mu_next = mu(t + 1);
    mprod *= mu_t;
    m = beta1 * m + (1 - beta1) * g0;
    v = beta2 * v + (1 - beta2) * g0 * g0;
    const double g_hat = g0 / (1 - mprod);
    const double m_hat = m / (1 - mprod * mu_next);
    const double v_hat = v / (1 - std::pow(beta2, t));
    const double m_bar = (1 - mu_t) * g_hat + mu_next * m_hat;
    theta -= lr * m_bar / (std::sqrt(v_hat) + eps);
  }
  CHECK(model.lay.W[0] == doctest::Approx(theta).epsilon(1e-15));
  // Both steps descend for a constant positive gradient.
  CHECK(model.lay.W[0] < 0.0);
}

TEST_CASE("nadam update does not depend on accumulation order of equal gradients") {
  ScalarModel a, b;
  a.lay.W[0] = b.lay.W[0] = 0.3;
  NadamT<double> oa, ob;
  oa.init(a);
  ob.init(b);
  const std::vector<double> parts = {0.125, 0.125, 0.125, 0.125};
  GradsT<double> ga, gb;
  double fwd = 0.0, rev = 0.0;
  for (std::size_t i = 0; i < parts.size(); ++i) fwd += parts[i];
  for (std::size_t i = parts.size(); i-- > 0;) rev += parts[i];
  ga.w = {{fwd}};
  ga.b = {{}};
  gb.w = {{rev}};
  gb.b = {{}};
  oa.step(a, ga);
  ob.step(b, gb);
  CHECK(a.lay.W[0] == b.lay.W[0]);
}

TEST_CASE("end-to-end gradients match finite differences") {
  // Linear network: tight tolerance.
  {
    NetworkConfig cfg = small_linear_cfg();
    Network net = build_mnn_h2<double>(cfg, 11);
    RngStream rng(12);
    for (int i = 0; i < net.num_layers(); ++i) {
      net.layer_at(i)->init_normal(rng, 0.4);
      for (auto& b : net.layer_at(i)->b) b = 0.2 * rng.normal();
    }
    const Tensor v = testutil::random_tensor({1, 40}, 13);
    const Tensor u = testutil::random_tensor({1, 40}, 14);
    CHECK(grad_check(net, v, u, 200) <= 1e-7);
  }
  // Relu network, preactivations away from the kink.
  {
    NetworkConfig cfg = small_linear_cfg();
    cfg.activation = Activation::relu;
    cfg.K = 2;
    Network net = build_mnn_h2<double>(cfg, 15);
    RngStream rng(16);
    for (int i = 0; i < net.num_layers(); ++i) {
      net.layer_at(i)->init_normal(rng, 0.4);
      for (auto& b : net.layer_at(i)->b) b = 0.3 + 0.1 * rng.normal();
    }
    const Tensor v = testutil::random_tensor({1, 40}, 17);
    const Tensor u = testutil::random_tensor({1, 40}, 18);
    CHECK(grad_check(net, v, u, 200) <= 1e-5);
  }
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
  NetworkConfig cfg = small_linear_cfg();
  Network net = build_mnn_h2<double>(cfg, 19);
  const Tensor v = testutil::random_tensor({1, 40}, 20);
  Network::Workspace ws;
  net.forward(v, ws);
  GradsT<double> grads;
  net.init_grads(grads);
  net.backward(ws, Tensor({1, 40}), grads);
  double total = 0.0;
  for (const auto& g : grads.w)
    for (double x : g) total += std::abs(x);
  for (const auto& g : grads.b)
    for (double x : g) total += std::abs(x);
  CHECK(total == 0.0);
}

TEST_CASE("one epoch with lr=0 leaves parameters bitwise unchanged") {
  const IndexTree t = build_tree(3, 5, 1);
  const H2Matrix h2 = random_h2(t, 2, 21);
  const Dataset data = realizable_dataset(h2, 20, 22);
  Network net = build_mnn_h2<double>(small_linear_cfg(), 23);
  const Network before = net;
  NadamT<double> opt;
  opt.cfg.lr = 0.0;
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 5;
  train(net, opt, data, data, cfg);
  for (int i = 0; i < net.num_layers(); ++i) {
    CHECK(net.layer_at(i)->W == before.layer_at(i)->W);
    CHECK(net.layer_at(i)->b == before.layer_at(i)->b);
  }
}

TEST_CASE("training history is reproducible under a fixed seed") {
  const IndexTree t = build_tree(3, 5, 1);
  const H2Matrix h2 = random_h2(t, 2, 31);
  const Dataset data = realizable_dataset(h2, 30, 32);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 5;
  cfg.seed = 9;
  auto run = [&]() {
    Network net = build_mnn_h2<double>(small_linear_cfg(), 33);
    NadamT<double> opt;
    return train(net, opt, data, data, cfg);
  };
  const auto h1 = run();
  const auto h2_ = run();
  REQUIRE(h1.size() == h2_.size());
  for (std::size_t i = 0; i < h1.size(); ++i) {
    CHECK(h1[i].loss == h2_[i].loss);
    CHECK(h1[i].eps_train == h2_[i].eps_train);
    CHECK(h1[i].eps_test == h2_[i].eps_test);
  }
}

TEST_CASE("loss is non-increasing over the first five epochs of the realizable task") {
  const IndexTree t = build_tree(3, 5, 1);
  const H2Matrix h2 = random_h2(t, 2, 41);
  const Dataset data = realizable_dataset(h2, 60, 42);
  double prev_drop = 0.0;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    Network net = build_mnn_h2<double>(small_linear_cfg(), 50 + seed);
    NadamT<double> opt;
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch = 6;
    cfg.seed = seed;
    const auto hist = train(net, opt, data, data, cfg);
    for (std::size_t e = 0; e + 1 < hist.size(); ++e) CHECK(hist[e + 1].loss <= hist[e].loss);
    prev_drop += hist.front().loss - hist.back().loss;
  }
  CHECK(prev_drop > 0.0);
}

TEST_CASE("the realizable linear model recovers the target map to 1e-4") {
  const IndexTree t = build_tree(4, 5, 1);
  const H2Matrix h2 = random_h2(t, 2, 61);
  const Dataset train_data = realizable_dataset(h2, 2000, 62);
  const Dataset test_data = realizable_dataset(h2, 200, 63);
  NetworkConfig cfg = small_linear_cfg();
  cfg.N = 80;
  cfg.L = 4;
  cfg.sigma_init = 0.2;
  Network net = build_mnn_h2<double>(cfg, 64);
  NadamT<double> opt;
  TrainConfig tc;
  tc.epochs = 200;
  tc.seed = 3;
  train(net, opt, train_data, test_data, tc);
  // Anneal out the minibatch noise floor; the map is realizable so the
  // error keeps dropping.
  opt.cfg.lr = 1e-4;
  tc.epochs = 80;
  tc.seed = 4;
  const auto hist = train(net, opt, train_data, test_data, tc);
  CHECK(hist.back().eps_test <= 1e-4);
}

TEST_CASE("training aborts with a diagnostic when the loss blows up") {
  const IndexTree t = build_tree(3, 5, 1);
  const H2Matrix h2 = random_h2(t, 2, 71);
  Dataset data = realizable_dataset(h2, 10, 72);
  for (auto& v : data.targets[0].data) v = 1e300;  // forces inf loss
  Network net = build_mnn_h2<double>(small_linear_cfg(), 73);
  NadamT<double> opt;
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 10;
  CHECK_THROWS_AS(train(net, opt, data, data, cfg), numeric_error);
}
