#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "mnnh2/network.hpp"
#include "test_util.hpp"

using namespace mnnh2;

namespace {

Tensor tensor_from_vec(const Eigen::VectorXd& v, int d, std::int64_t n) {
  const std::vector<std::int64_t> shape =
      d == 1 ? std::vector<std::int64_t>{1, n} : std::vector<std::int64_t>{1, n, n};
  return Tensor(shape, std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd random_vec(std::int64_t n, std::uint64_t seed) {
  Eigen::VectorXd v(n);
  RngStream rng(seed);
  for (std::int64_t i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

// Closed-form locally connected parameter count (weights only):
// 2^L m^2 K (2 nb_ad + 1) + N r + 2 sum_{l=2}^{L-1} 2^(l+1) r^2
// + K sum_{l=2}^{L} 2^l r^2 (2 nb_l + 1) + 2^L r m.
std::int64_t lc_weight_closed_form(const NetworkConfig& c) {
  const std::int64_t two_L = std::int64_t(1) << c.L;
  std::int64_t total = two_L * c.m * c.m * c.K * (2 * c.nb_ad + 1);
  total += c.N * c.r;
  for (int level = 2; level <= c.L - 1; ++level) total += 2 * (std::int64_t(2) << level) * c.r * c.r;
  for (int level = 2; level <= c.L; ++level)
    total += c.K * (std::int64_t(1) << level) * c.r * c.r * (2 * c.nb(level) + 1);
  total += two_L * c.r * c.m;
  return total;
}

void randomize_biases(Network& net, std::uint64_t seed) {
  RngStream rng(seed);
  for (int i = 0; i < net.num_layers(); ++i)
    for (auto& b : net.layer_at(i)->b) b = 0.05 * rng.normal();
}

Tensor shift_input(const Tensor& v, int d, std::int64_t s) {
  Tensor out = cyclic_shift(v, 1, s);
  if (d == 2) out = cyclic_shift(out, 2, s);
  return out;
}

}  // namespace

TEST_CASE("loaded network reproduces the 1d factorization matvec") {
  for (int L : {3, 4, 5})
    for (int r : {2, 4}) {
      const IndexTree t = build_tree(L, 5, 1);
      const H2Matrix h2 = random_h2(t, r, 1000 + 10 * L + r);
      const Network net = build_linear_h2_nn(h2);
      for (int trial = 0; trial < 20; ++trial) {
        const Eigen::VectorXd v = random_vec(h2.dim(), 7000 + trial);
        const Eigen::VectorXd want = matvec(h2, v);
        const Tensor got = net.forward(tensor_from_vec(v, 1, h2.dim()));
        const Eigen::Map<const Eigen::VectorXd> got_v(got.data.data(), got.numel());
        CHECK(testutil::rel_err(got_v, want) <= 1e-12);
      }
    }
}

TEST_CASE("loaded network reproduces the 2d factorization matvec") {
  for (int r : {2, 4}) {
    const IndexTree t = build_tree(3, 4, 2);
    const H2Matrix h2 = random_h2(t, r, 2000 + r);
    const Network net = build_linear_h2_nn(h2);
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::VectorXd v = random_vec(h2.dim(), 7100 + trial);
      const Eigen::VectorXd want = matvec(h2, v);
      const Tensor got = net.forward(tensor_from_vec(v, 2, t.points_per_axis()));
      const Eigen::Map<const Eigen::VectorXd> got_v(got.data.data(), got.numel());
      CHECK(testutil::rel_err(got_v, want) <= 1e-12);
    }
  }
}

TEST_CASE("identity-only blocks give the identity network") {
  const IndexTree t = build_tree(3, 5, 1);
  H2Matrix h2 = random_h2(t, 2, 3);
  for (auto& lvl : h2.M)
    for (auto& row : lvl)
      for (auto& blk : row) blk.setZero();
  for (std::int64_t b = 0; b < t.num_boxes(3); ++b)
    for (std::size_t k = 0; k < t.nl[3][b].size(); ++k)
      h2.Aad[b][k] = t.nl[3][b][k] == b ? Eigen::MatrixXd(Eigen::MatrixXd::Identity(5, 5))
                                        : Eigen::MatrixXd(Eigen::MatrixXd::Zero(5, 5));
  const Network net = build_linear_h2_nn(h2);
  const Tensor v = testutil::random_tensor({1, t.num_points()}, 4);
  const Tensor u = net.forward(v);
  CHECK(testutil::max_abs_diff(u, v) <= 1e-14);
}

TEST_CASE("cnn sharing commutes with shifts at the coarse-box granularity") {
  // The strided restriction chain downsamples to 4 boxes at level 2, so the
  // exact symmetry group of the architecture is generated by shifts of
  // N/4 = m 2^(L-2) grid points (a multiple of m). Verified bitwise here,
  // for any weights, relu included.
  for (int d : {1, 2}) {
    NetworkConfig cfg;
    cfg.d = d;
    cfg.L = 3;
    cfg.m = d == 1 ? 5 : 3;
    cfg.N = 8 * cfg.m;
    cfg.r = 3;
    cfg.K = 2;
    cfg.sharing = SharingMode::cnn;
    Network net = build_mnn_h2<double>(cfg, 99);
    randomize_biases(net, 100);
    const std::int64_t granule = cfg.m * (std::int64_t(1) << (cfg.L - 2));
    const Tensor v = testutil::random_tensor(
        d == 1 ? std::vector<std::int64_t>{1, cfg.N} : std::vector<std::int64_t>{1, cfg.N, cfg.N},
        101);
    for (std::int64_t mult : {1, 2, 3}) {
      const std::int64_t s = mult * granule;
      const Tensor lhs = net.forward(shift_input(v, d, s));
      const Tensor rhs = shift_input(net.forward(v), d, s);
      CHECK(testutil::max_abs_diff(lhs, rhs) == 0.0);
    }
  }
}

TEST_CASE("shifts by a single leaf box are not a symmetry of the strided chain") {
  // Sharpness of the granularity above: the adjacent branch and the first
  // restriction commute with m-point shifts, but the stride-2 restrictions
  // below level L do not.
  NetworkConfig cfg;
  cfg.d = 1;
  cfg.L = 4;
  cfg.m = 5;
  cfg.N = 80;
  cfg.r = 3;
  cfg.K = 1;
  cfg.sharing = SharingMode::cnn;
  Network net = build_mnn_h2<double>(cfg, 7);
  randomize_biases(net, 8);
  const Tensor v = testutil::random_tensor({1, 80}, 9);
  const Tensor lhs = net.forward(shift_input(v, 1, cfg.m));
  const Tensor rhs = shift_input(net.forward(v), 1, cfg.m);
  CHECK(testutil::max_abs_diff(lhs, rhs) > 1e-6);
}

TEST_CASE("lc sharing offers no shift symmetry") {
  NetworkConfig cfg;
  cfg.d = 1;
  cfg.L = 3;
  cfg.m = 5;
  cfg.N = 40;
  cfg.r = 2;
  cfg.K = 1;
  cfg.sharing = SharingMode::lc;
  Network net = build_mnn_h2<double>(cfg, 31);
  randomize_biases(net, 32);
  const std::int64_t granule = cfg.m * (std::int64_t(1) << (cfg.L - 2));
  const Tensor v = testutil::random_tensor({1, 40}, 33);
  const Tensor lhs = net.forward(shift_input(v, 1, granule));
  const Tensor rhs = shift_input(net.forward(v), 1, granule);
  CHECK(testutil::max_abs_diff(lhs, rhs) > 1e-6);
}

TEST_CASE("K=1 linear override matches the loaded-network topology") {
  const IndexTree t = build_tree(4, 5, 1);
  const H2Matrix h2 = random_h2(t, 3, 5);
  const Network loaded = build_linear_h2_nn(h2);
  NetworkConfig cfg = loaded.cfg;
  const Network fresh = build_mnn_h2<double>(cfg, 77);
  REQUIRE(fresh.num_layers() == loaded.num_layers());
  for (int i = 0; i < fresh.num_layers(); ++i) {
    const LayerSpec& a = fresh.layer_at(i)->spec;
    const LayerSpec& b = loaded.layer_at(i)->spec;
    CHECK(a.kind == b.kind);
    CHECK(a.sharing == b.sharing);
    CHECK(a.act == b.act);
    CHECK(a.nx == b.nx);
    CHECK(a.nxp == b.nxp);
    CHECK(a.w == b.w);
    CHECK(a.alpha == b.alpha);
    CHECK(a.alphap == b.alphap);
    CHECK(fresh.layer_at(i)->W.size() == loaded.layer_at(i)->W.size());
  }
}

TEST_CASE("same seed gives identical initial weights") {
  NetworkConfig cfg;
  cfg.d = 1;
  cfg.N = 40;
  cfg.L = 3;
  cfg.m = 5;
  cfg.r = 2;
  cfg.K = 2;
  const Network a = build_mnn_h2<double>(cfg, 123);
  const Network b = build_mnn_h2<double>(cfg, 123);
  const Network c = build_mnn_h2<double>(cfg, 124);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < a.num_layers(); ++i) {
    all_equal = all_equal && a.layer_at(i)->W == b.layer_at(i)->W;
    any_diff = any_diff || a.layer_at(i)->W != c.layer_at(i)->W;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("the reference cnn configuration counts 6951 weights and 7209 with biases") {
  NetworkConfig cfg;
  cfg.d = 1;
  cfg.N = 320;
  cfg.m = 5;
  cfg.L = 6;
  cfg.r = 6;
  cfg.K = 5;
  cfg.sharing = SharingMode::cnn;
  const Network net = build_mnn_h2<double>(cfg, 1);
  CHECK(net.count_params(false) == 6951);
  CHECK(net.count_params(true) == 7209);
}

TEST_CASE("lc counts match the closed-form sum term by term") {
  struct C {
    int L, m, r, K;
  };
  for (const C& c : {C{3, 5, 2, 1}, C{4, 5, 4, 3}, C{5, 5, 6, 5}, C{4, 4, 3, 2}, C{6, 5, 6, 5}}) {
    NetworkConfig cfg;
    cfg.d = 1;
    cfg.L = c.L;
    cfg.m = c.m;
    cfg.r = c.r;
    cfg.K = c.K;
    cfg.N = (std::int64_t(1) << c.L) * c.m;
    cfg.sharing = SharingMode::lc;
    const Network net = build_mnn_h2<double>(cfg, 2);
    CHECK(net.count_params(false) == lc_weight_closed_form(cfg));
    // Eq-bound: N_p <= 3 N m K (2 nb + 3) with nb the largest band in play.
    const std::int64_t nb = std::max(cfg.nb_ad, cfg.nb_coarse);
    CHECK(net.count_params(false) <= 3 * cfg.N * cfg.m * cfg.K * (2 * nb + 3));
  }
}

TEST_CASE("cnn counts grow by a fixed constant per level") {
  std::vector<std::int64_t> counts;
  for (int L : {4, 5, 6, 7}) {
    NetworkConfig cfg;
    cfg.d = 1;
    cfg.L = L;
    cfg.m = 5;
    cfg.r = 6;
    cfg.K = 5;
    cfg.N = (std::int64_t(1) << L) * 5;
    cfg.sharing = SharingMode::cnn;
    counts.push_back(build_mnn_h2<double>(cfg, 3).count_params(true));
  }
  const std::int64_t inc = counts[1] - counts[0];
  CHECK(inc > 0);
  for (std::size_t k = 1; k + 1 < counts.size(); ++k) CHECK(counts[k + 1] - counts[k] == inc);
}

TEST_CASE("mixed sharing counts fall strictly between cnn and lc") {
  NetworkConfig cfg;
  cfg.d = 1;
  cfg.N = 80;
  cfg.L = 4;
  cfg.m = 5;
  cfg.r = 8;
  cfg.K = 5;
  cfg.sharing = SharingMode::cnn;
  const std::int64_t cnn = build_mnn_h2<double>(cfg, 4).count_params(true);
  cfg.sharing = SharingMode::mixed;
  const std::int64_t mixed = build_mnn_h2<double>(cfg, 4).count_params(true);
  cfg.sharing = SharingMode::lc;
  const std::int64_t lc = build_mnn_h2<double>(cfg, 4).count_params(true);
  CHECK(cnn < mixed);
  CHECK(mixed < lc);
}

TEST_CASE("cnn forward equals lc forward when positions share weights") {
  NetworkConfig cfg;
  cfg.d = 1;
  cfg.N = 40;
  cfg.L = 3;
  cfg.m = 5;
  cfg.r = 2;
  cfg.K = 2;
  cfg.sharing = SharingMode::cnn;
  Network conv = build_mnn_h2<double>(cfg, 5);
  randomize_biases(conv, 6);
  cfg.sharing = SharingMode::lc;
  Network local = build_mnn_h2<double>(cfg, 7);
  for (int i = 0; i < conv.num_layers(); ++i) {
    const Layer* c = conv.layer_at(i);
    Layer* l = local.layer_at(i);
    const std::int64_t positions = l->spec.out_positions();
    for (std::int64_t p = 0; p < positions; ++p) {
      std::copy(c->W.begin(), c->W.end(), l->W.begin() + p * c->W.size());
      std::copy(c->b.begin(), c->b.end(), l->b.begin() + p * c->b.size());
    }
  }
  const Tensor v = testutil::random_tensor({1, 40}, 8);
  CHECK(testutil::max_abs_diff(conv.forward(v), local.forward(v)) == 0.0);
}

TEST_CASE("plain cnn baseline counts 38161 parameters in the reference setup") {
  const PlainCnn net = build_plain_cnn<double>(15, 10, 25, 320, 1);
  CHECK(net.count_params(true) == 38161);
  CHECK(net.num_layers() == 17);  // 1->10, 15 interior, 10->1
}

TEST_CASE("single-channel window-1 plain cnn is a positionless affine map") {
  const PlainCnn net = build_plain_cnn<double>(1, 1, 1, 16, 9, Activation::linear);
  const Tensor x = testutil::random_tensor({1, 16}, 10);
  const Tensor zero({1, 16});
  const Tensor f0 = net.forward(zero);
  const Tensor fx = net.forward(x);
  // Affine with a constant slope and offset across positions.
  const double slope = (fx.data[0] - f0.data[0]) / x.data[0];
  for (std::int64_t i = 0; i < 16; ++i) {
    CHECK(f0.data[i] == doctest::Approx(f0.data[0]).epsilon(1e-13));
    CHECK(fx.data[i] - f0.data[i] == doctest::Approx(slope * x.data[i]).epsilon(1e-10));
  }
}

TEST_CASE("plain cnn forward commutes with any cyclic shift") {
  const PlainCnn net = build_plain_cnn<double>(2, 3, 5, 16, 11);
  const Tensor x = testutil::random_tensor({1, 16}, 12);
  for (std::int64_t s : {1, 3, 7}) {
    const Tensor lhs = net.forward(cyclic_shift(x, 1, s));
    const Tensor rhs = cyclic_shift(net.forward(x), 1, s);
    CHECK(testutil::max_abs_diff(lhs, rhs) == 0.0);
  }
}
