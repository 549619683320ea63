#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "mnnh2/io.hpp"
#include "test_util.hpp"

using namespace mnnh2;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("mnnh2_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

std::vector<unsigned char> file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

Dataset tiny_dataset() {
  Dataset ds;
  ds.d = 1;
  ds.N = 2;
  ds.inputs.push_back(Tensor({1, 2}, {1.0, 2.0}));
  ds.targets.push_back(Tensor({1, 2}, {3.0, 0.5}));
  return ds;
}

}  // namespace

TEST_CASE("config: defaults text parses back to the default values") {
  const RunConfig cfg = parse_run_config(default_run_config());
  CHECK(cfg.problem.problem == Problem::nlse);
  CHECK(cfg.network.N == 80);
  CHECK(cfg.network.L == 4);
  CHECK(cfg.network.m == 5);
  CHECK(cfg.network.r == 6);
  CHECK(cfg.network.K == 5);
  CHECK(cfg.network.sharing == SharingMode::cnn);
  CHECK(cfg.network.padding == PadMode::periodic);
  CHECK(cfg.network.dtype_bytes == 8);
  CHECK(cfg.optimizer.lr == 1e-3);
  CHECK(cfg.training.epochs == 500);
  CHECK(cfg.training.batch == 0);
  CHECK(cfg.training.shuffle);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("config: unknown keys and malformed values are rejected") {
  CHECK_THROWS_WITH_AS(parse_run_config("no_such_key = 1\n"), "config: unknown key 'no_such_key'",
                       error);
  CHECK_THROWS_AS(parse_run_config("L = five\n"), error);
  CHECK_THROWS_AS(parse_run_config("sharing = dense\n"), error);
  CHECK_THROWS_AS(parse_run_config("just a line\n"), error);
}

TEST_CASE("config: comments, blanks, and overrides") {
  const RunConfig cfg = parse_run_config(
      "# a comment\n"
      "\n"
      "problem = rte   # trailing comment\n"
      "sharing = mixed\n"
      "padding = zero\n"
      "N = 160\nL = 5\nm = 5\nr = 8\n"
      "dtype = float32\n"
      "seed = 17\n");
  CHECK(cfg.problem.problem == Problem::rte);
  CHECK(cfg.network.sharing == SharingMode::mixed);
  CHECK(cfg.network.padding == PadMode::zero);
  CHECK(cfg.network.N == 160);
  CHECK(cfg.network.r == 8);
  CHECK(cfg.network.dtype_bytes == 4);
  CHECK(cfg.training.seed == 17);
}

TEST_CASE("config: geometry mismatch fails validation") {
  const RunConfig cfg = parse_run_config("N = 80\nL = 3\nm = 5\n");  // 2^3*5 = 40 != 80
  CHECK_THROWS_AS(cfg.validate(), shape_error);
}

TEST_CASE("dataset file bytes match the frozen layout") {
  const TempFile f("golden.ds");
  write_dataset(f.path, tiny_dataset(), 8);
  std::vector<unsigned char> want = {'M', 'N', 'H', '2', 'D', 'S', '1', '\0'};
  auto push_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) want.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
  };
  auto push_f64 = [&](double v) {
    unsigned char b[8];
    store_le_f64(v, b);
    want.insert(want.end(), b, b + 8);
  };
  push_u32(1);  // version
  push_u32(1);  // d
  push_u32(2);  // N
  push_u32(1);  // count
  want.push_back(8);
  push_f64(1.0);
  push_f64(2.0);
  push_f64(3.0);
  push_f64(0.5);
  CHECK(file_bytes(f.path) == want);
}

TEST_CASE("dataset round trip preserves payloads, float32 rounds") {
  const TempFile f("roundtrip.ds");
  Dataset ds;
  ds.d = 1;
  ds.N = 16;
  for (int i = 0; i < 3; ++i) {
    ds.inputs.push_back(testutil::random_tensor({1, 16}, 100 + i));
    ds.targets.push_back(testutil::random_tensor({1, 16}, 200 + i));
  }
  write_dataset(f.path, ds, 8);
  int dt = 0;
  const Dataset back = read_dataset(f.path, &dt);
  CHECK(dt == 8);
  CHECK(back.count() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back.inputs[i].data == ds.inputs[i].data);
    CHECK(back.targets[i].data == ds.targets[i].data);
  }

  write_dataset(f.path, ds, 4);
  const Dataset f32 = read_dataset(f.path, &dt);
  CHECK(dt == 4);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 16; ++k)
      CHECK(f32.inputs[i].data[k] == static_cast<double>(static_cast<float>(ds.inputs[i].data[k])));
}

TEST_CASE("dataset loader rejects corrupted magic and truncation") {
  const TempFile f("bad.ds");
  write_dataset(f.path, tiny_dataset(), 8);
  auto bytes = file_bytes(f.path);
  {
    auto corrupted = bytes;
    corrupted[0] = 'X';
    std::ofstream out(f.path, std::ios::binary);
    out.write(reinterpret_cast<char*>(corrupted.data()), corrupted.size());
  }
  CHECK_THROWS_AS(read_dataset(f.path), error);
  {
    std::ofstream out(f.path, std::ios::binary);
    out.write(reinterpret_cast<char*>(bytes.data()), bytes.size() - 5);
  }
  CHECK_THROWS_AS(read_dataset(f.path), error);
}

TEST_CASE("checkpoint: header magic and dtype probing") {
  const TempFile f("probe.ckpt");
  NetworkConfig cfg;
  cfg.d = 1;
  cfg.N = 40;
  cfg.L = 3;
  cfg.m = 5;
  cfg.r = 2;
  cfg.K = 1;
  const Network net = build_mnn_h2<double>(cfg, 5);
  write_checkpoint(f.path, net);
  CHECK(checkpoint_dtype(f.path) == 8);
  auto bytes = file_bytes(f.path);
  CHECK(std::string(bytes.begin(), bytes.begin() + 7) == "MNH2CK1");
}

TEST_CASE("checkpoint round trip reproduces forward outputs bitwise") {
  const TempFile f("roundtrip.ckpt");
  NetworkConfig cfg;
  cfg.d = 1;
  cfg.N = 40;
  cfg.L = 3;
  cfg.m = 5;
  cfg.r = 3;
  cfg.K = 2;
  cfg.sharing = SharingMode::mixed;
  Network net = build_mnn_h2<double>(cfg, 6);
  RngStream rng(7);
  for (int i = 0; i < net.num_layers(); ++i)
    for (auto& b : net.layer_at(i)->b) b = 0.1 * rng.normal();
  write_checkpoint(f.path, net);
  const Network back = read_checkpoint<double>(f.path);
  const Tensor v = testutil::random_tensor({1, 40}, 8);
  const Tensor a = net.forward(v);
  const Tensor b = back.forward(v);
  CHECK(testutil::max_abs_diff(a, b) == 0.0);
  CHECK(back.cfg.sharing == SharingMode::mixed);
}

TEST_CASE("checkpoint carries optimizer state for exact resume") {
  const TempFile f("resume.ckpt");
  NetworkConfig cfg;
  cfg.d = 1;
  cfg.N = 40;
  cfg.L = 3;
  cfg.m = 5;
  cfg.r = 2;
  cfg.K = 1;
  Network net = build_mnn_h2<double>(cfg, 9);
  NadamT<double> opt;
  opt.init(net);
  GradsT<double> g;
  net.init_grads(g);
  for (auto& layer_grads : g.w)
    for (auto& x : layer_grads) x = 0.25;
  opt.step(net, g);
  opt.step(net, g);
  write_checkpoint(f.path, net, &opt, 13);

  NadamT<double> opt2;
  CheckpointExtra extra;
  const Network back = read_checkpoint<double>(f.path, &opt2, &extra);
  CHECK(extra.epoch_done == 13);
  CHECK(opt2.step_count == 2);
  CHECK(opt2.mu_product == opt.mu_product);
  for (std::size_t i = 0; i < opt.m_w.size(); ++i) {
    CHECK(opt2.m_w[i] == opt.m_w[i]);
    CHECK(opt2.v_w[i] == opt.v_w[i]);
  }
  // One more identical step on both reaches identical parameters.
  opt.step(net, g);
  Network net2 = back;
  opt2.step(net2, g);
  for (int i = 0; i < net.num_layers(); ++i) CHECK(net.layer_at(i)->W == net2.layer_at(i)->W);
}

TEST_CASE("float32 checkpoints round trip through the float network") {
  const TempFile f("f32.ckpt");
  NetworkConfig cfg;
  cfg.d = 1;
  cfg.N = 40;
  cfg.L = 3;
  cfg.m = 5;
  cfg.r = 2;
  cfg.K = 1;
  cfg.dtype_bytes = 4;
  NetworkT<float> net = build_mnn_h2<float>(cfg, 10);
  write_checkpoint(f.path, net);
  CHECK(checkpoint_dtype(f.path) == 4);
  const NetworkT<float> back = read_checkpoint<float>(f.path);
  for (int i = 0; i < net.num_layers(); ++i) CHECK(net.layer_at(i)->W == back.layer_at(i)->W);
}
