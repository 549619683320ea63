#include "mnnh2/verify.hpp"

#include <Eigen/Dense>
#include <set>

#include "mnnh2/h2.hpp"
#include "mnnh2/network.hpp"
#include "mnnh2/train.hpp"

namespace mnnh2 {

namespace {

struct Suite {
  std::ostream& out;
  bool ok = true;

  void line(const std::string& name, bool passed, const std::string& detail = "") {
    out << (passed ? "[pass] " : "[FAIL] ") << name;
    if (!detail.empty()) out << " (" << detail << ")";
    out << "\n";
    ok = ok && passed;
  }
};

Eigen::VectorXd random_vec(std::int64_t n, std::uint64_t seed) {
  Eigen::VectorXd v(n);
  RngStream rng(seed);
  for (std::int64_t i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

Tensor tensor_of(const Eigen::VectorXd& v, int d, std::int64_t n) {
  const std::vector<std::int64_t> shape =
      d == 1 ? std::vector<std::int64_t>{1, n} : std::vector<std::int64_t>{1, n, n};
  return Tensor(shape, std::vector<double>(v.data(), v.data() + v.size()));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

}  // namespace

bool verify_tree(std::ostream& out) {
  Suite s{out};
  // Frozen example: level 3, segment 3 (1-based), IL = {1,5,6} 1-based.
  {
    const IndexTree t = build_tree(3, 1, 1);
    const bool match = t.il[3][2] == std::vector<std::int32_t>{0, 4, 5};
    s.line("tree: level-3 interaction list matches {1,5,6} (1-based)", match);
    bool l2 = true;
    for (std::int64_t b = 0; b < 4; ++b)
      l2 = l2 && t.il[2][b].size() == 1 && t.il[2][b][0] == (b + 2) % 4;
    s.line("tree: level-2 interaction list is the opposite segment", l2);
  }
  // Offset shortcut across depths: even children {-2,+2,+3}, odd {-3,-2,+2}.
  bool offsets = true;
  for (int L : {3, 4, 5, 6}) {
    const IndexTree t = build_tree(L, 2, 1);
    for (int level = 3; level <= L && offsets; ++level) {
      const std::int64_t n = std::int64_t(1) << level;
      for (std::int64_t b = 0; b < n && offsets; ++b) {
        std::set<std::int64_t> want;
        for (std::int64_t off : b % 2 == 0 ? std::vector<std::int64_t>{-2, 2, 3}
                                           : std::vector<std::int64_t>{-3, -2, 2})
          want.insert(((b + off) % n + n) % n);
        offsets = std::set<std::int64_t>(t.il[level][b].begin(), t.il[level][b].end()) == want;
      }
    }
  }
  s.line("tree: interaction lists equal the cyclic-offset shortcut", offsets);
  bool self = true;
  const IndexTree t2 = build_tree(4, 2, 2);
  for (int level = 0; level <= 4 && self; ++level)
    for (std::int64_t b = 0; b < t2.num_boxes(level) && self; ++b)
      self = std::find(t2.nl[level][b].begin(), t2.nl[level][b].end(), b) != t2.nl[level][b].end();
  s.line("tree: every box neighbors itself", self);
  return s.ok;
}

bool verify_linear(std::ostream& out) {
  Suite s{out};
  struct Case {
    int d, L, m, r;
  };
  const std::vector<Case> cases = {{1, 3, 5, 2}, {1, 3, 5, 4}, {1, 4, 5, 2}, {1, 4, 5, 4},
                                   {1, 5, 5, 2}, {1, 5, 5, 4}, {2, 3, 4, 2}, {2, 3, 4, 4}};
  for (const Case& c : cases) {
    const IndexTree tree = build_tree(c.L, c.m, c.d);
    const H2Matrix h2 = random_h2(tree, c.r, 4000 + 100 * c.d + 10 * c.L + c.r);
    const Network net = build_linear_h2_nn(h2);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::VectorXd v = random_vec(h2.dim(), 600 + trial);
      const Eigen::VectorXd want = matvec(h2, v);
      const Tensor got = net.forward(tensor_of(v, c.d, tree.points_per_axis()));
      const Eigen::Map<const Eigen::VectorXd> gv(got.data.data(), got.numel());
      worst = std::max(worst, (gv - want).norm() / want.norm());
    }
    s.line("linear: d=" + std::to_string(c.d) + " L=" + std::to_string(c.L) +
               " r=" + std::to_string(c.r) + " network == sweep",
           worst <= 1e-12, "max rel err " + fmt(worst));
  }
  return s.ok;
}

bool verify_grad(std::ostream& out) {
  Suite s{out};
  std::uint64_t seed = 9000;
  for (int d : {1, 2})
    for (SharingMode mode : {SharingMode::lc, SharingMode::cnn, SharingMode::mixed})
      for (PadMode padv : {PadMode::periodic, PadMode::zero})
        for (Activation act : {Activation::linear, Activation::relu}) {
          NetworkConfig cfg;
          cfg.d = d;
          cfg.L = 3;
          cfg.m = d == 1 ? 5 : 2;
          cfg.N = 8 * cfg.m;
          cfg.r = 2;
          cfg.K = 2;
          cfg.sharing = mode;
          cfg.padding = padv;
          cfg.activation = act;
          Network net = build_mnn_h2<double>(cfg, ++seed);
          RngStream rng(seed + 1);
          for (int i = 0; i < net.num_layers(); ++i) {
            net.layer_at(i)->init_normal(rng, 0.4);
            for (auto& b : net.layer_at(i)->b)
              b = act == Activation::relu ? 0.3 + 0.1 * rng.normal() : 0.2 * rng.normal();
          }
          const std::vector<std::int64_t> shape =
              d == 1 ? std::vector<std::int64_t>{1, cfg.N}
                     : std::vector<std::int64_t>{1, cfg.N, cfg.N};
          Tensor v(shape), u(shape);
          RngStream data_rng(seed + 2);
          for (auto& x : v.data) x = data_rng.normal();
          for (auto& x : u.data) x = data_rng.normal();
          const double dev = grad_check(net, v, u, 200);
          const double tol = act == Activation::linear ? 1e-7 : 1e-5;
          const std::string name =
              std::string("grad: d=") + std::to_string(d) + " " +
              (mode == SharingMode::lc ? "lc" : mode == SharingMode::cnn ? "cnn" : "mixed") +
              (padv == PadMode::periodic ? " periodic" : " zero") +
              (act == Activation::linear ? " linear" : " relu");
          s.line(name, dev <= tol, "max dev " + fmt(dev) + " tol " + fmt(tol));
        }
  return s.ok;
}

bool verify_params(std::ostream& out) {
  Suite s{out};
  {
    NetworkConfig cfg;
    cfg.d = 1;
    cfg.N = 320;
    cfg.m = 5;
    cfg.L = 6;
    cfg.r = 6;
    cfg.K = 5;
    cfg.sharing = SharingMode::cnn;
    const Network net = build_mnn_h2<double>(cfg, 1);
    s.line("params: reference cnn config has 6951 weights",
           net.count_params(false) == 6951, std::to_string(net.count_params(false)));
    s.line("params: reference cnn config has 7209 weights+biases",
           net.count_params(true) == 7209, std::to_string(net.count_params(true)));
  }
  {
    bool all = true;
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
      const std::int64_t two_L = std::int64_t(1) << c.L;
      std::int64_t closed = two_L * c.m * c.m * c.K * (2 * cfg.nb_ad + 1) + cfg.N * c.r;
      for (int level = 2; level <= c.L - 1; ++level)
        closed += 2 * (std::int64_t(2) << level) * c.r * c.r;
      for (int level = 2; level <= c.L; ++level)
        closed += c.K * (std::int64_t(1) << level) * c.r * c.r * (2 * cfg.nb(level) + 1);
      closed += two_L * c.r * c.m;
      all = all && build_mnn_h2<double>(cfg, 2).count_params(false) == closed;
    }
    s.line("params: lc counts equal the closed-form sum for 5 configs", all);
  }
  {
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
    const bool log_growth =
        inc > 0 && counts[2] - counts[1] == inc && counts[3] - counts[2] == inc;
    s.line("params: cnn counts add a fixed constant per level", log_growth,
           std::to_string(inc) + " per level");
  }
  return s.ok;
}

bool run_verify_suite(const std::string& name, std::ostream& out) {
  if (name == "tree") return verify_tree(out);
  if (name == "linear") return verify_linear(out);
  if (name == "grad") return verify_grad(out);
  if (name == "params") return verify_params(out);
  if (name == "all") {
    bool ok = verify_tree(out);
    ok = verify_linear(out) && ok;
    ok = verify_grad(out) && ok;
    ok = verify_params(out) && ok;
    return ok;
  }
  throw error("verify: unknown suite '" + name + "' (expected tree|linear|grad|params|all)");
}

}  // namespace mnnh2
