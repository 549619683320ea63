#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mnnh2/io.hpp"
#include "test_util.hpp"

#ifndef MNNH2_CLI_PATH
#error "MNNH2_CLI_PATH must point at the built command-line binary"
#endif

using namespace mnnh2;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MNNH2_CLI_PATH) + " " + args + " >cli_stdout.txt 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp_text(const std::string& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<unsigned char> slurp_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

// Final row of a metrics CSV.
std::vector<double> last_csv_row(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line, last;
  std::getline(in, line);  // header
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  std::vector<double> row;
  std::stringstream ss(last);
  std::string cell;
  while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
  return row;
}

const char* kTinyConfig =
    "problem = rte\npadding = zero\nsharing = mixed\n"
    "N = 40\nL = 3\nm = 5\nr = 2\nK = 1\n"
    "epochs = 3\nbatch = 4\nseed = 5\nsigma_init = 0.2\n"
    "metrics = tiny_metrics.csv\n";

}  // namespace

TEST_CASE("gen is deterministic and prints a residual summary") {
  write_text("tiny.cfg", kTinyConfig);
  REQUIRE(run_cli("gen --config tiny.cfg --out tiny_a.ds --count 8 --seed 3") == 0);
  CHECK(slurp_text("cli_stdout.txt").find("solver residuals") != std::string::npos);
  REQUIRE(run_cli("gen --config tiny.cfg --out tiny_b.ds --count 8 --seed 3") == 0);
  CHECK(slurp_bytes("tiny_a.ds") == slurp_bytes("tiny_b.ds"));
  const Dataset ds = read_dataset("tiny_a.ds");
  CHECK(ds.N == 40);
  CHECK(ds.count() == 8);
}

TEST_CASE("train writes a checkpoint and metrics; eval reproduces eps_train") {
  write_text("tiny.cfg", kTinyConfig);
  REQUIRE(run_cli("gen --config tiny.cfg --out tiny_train.ds --count 12 --seed 4") == 0);
  REQUIRE(run_cli("gen --config tiny.cfg --out tiny_test.ds --count 4 --seed 5") == 0);
  REQUIRE(run_cli("train --config tiny.cfg --data tiny_train.ds --test-data tiny_test.ds "
                  "--out tiny.ckpt") == 0);
  const auto row = last_csv_row("tiny_metrics.csv");
  REQUIRE(row.size() == 6);  // epoch,loss,eps_train,sigma_train,eps_test,sigma_test
  CHECK(row[0] == 3.0);

  REQUIRE(run_cli("eval --checkpoint tiny.ckpt --data tiny_train.ds --per-sample tiny_eps.csv "
                  "--dump tiny_fields.csv") == 0);
  const std::string eval_out = slurp_text("cli_stdout.txt");
  std::stringstream ss(eval_out.substr(eval_out.find("eps mean") + 9));
  double eps_mean = -1.0;
  ss >> eps_mean;
  CHECK(eps_mean == doctest::Approx(row[2]).epsilon(1e-12));

  const std::string fields = slurp_text("tiny_fields.csv");
  CHECK(fields.rfind("sample,x,u,u_nn", 0) == 0);
}

TEST_CASE("training runs are reproducible and resume exactly") {
  write_text("tiny.cfg", kTinyConfig);
  REQUIRE(run_cli("gen --config tiny.cfg --out tiny_train.ds --count 12 --seed 4") == 0);
  write_text("four.cfg", std::string(kTinyConfig) + "epochs = 4\n" +
                             "metrics = metrics_four.csv\n");
  REQUIRE(run_cli("train --config four.cfg --data tiny_train.ds --out full.ckpt") == 0);
  REQUIRE(run_cli("train --config four.cfg --data tiny_train.ds --out full2.ckpt") == 0);
  CHECK(slurp_bytes("full.ckpt") == slurp_bytes("full2.ckpt"));
  const auto full_row = last_csv_row("metrics_four.csv");

  write_text("two.cfg", std::string(kTinyConfig) + "epochs = 2\nmetrics = metrics_two.csv\n");
  REQUIRE(run_cli("train --config two.cfg --data tiny_train.ds --out half.ckpt") == 0);
  REQUIRE(run_cli("train --config four.cfg --data tiny_train.ds --out resumed.ckpt "
                  "--resume half.ckpt --metrics metrics_resumed.csv") == 0);
  const auto resumed_row = last_csv_row("metrics_resumed.csv");
  CHECK(resumed_row[0] == 4.0);
  CHECK(resumed_row[1] == full_row[1]);  // identical epoch-4 loss
  CHECK(slurp_bytes("resumed.ckpt") == slurp_bytes("full.ckpt"));
}

TEST_CASE("geometry mismatches and corrupted files exit with usage errors") {
  write_text("tiny.cfg", kTinyConfig);
  REQUIRE(run_cli("gen --config tiny.cfg --out tiny_train.ds --count 4 --seed 4") == 0);
  write_text("other.cfg", "N = 80\nL = 4\nm = 5\nr = 2\nK = 1\nepochs = 1\n");
  CHECK(run_cli("train --config other.cfg --data tiny_train.ds --out x.ckpt") == 2);

  auto bytes = slurp_bytes("tiny_train.ds");
  bytes[0] = 'X';
  std::ofstream out("corrupt.ds", std::ios::binary);
  out.write(reinterpret_cast<char*>(bytes.data()), bytes.size());
  out.close();
  CHECK(run_cli("eval --checkpoint missing.ckpt --data corrupt.ds") == 2);
  CHECK(run_cli("nosuchcommand") == 2);
  CHECK(run_cli("gen") == 2);  // missing required --out
}

TEST_CASE("eval of a dataset whose targets equal the model output reports zero") {
  write_text("tiny.cfg", kTinyConfig);
  const RunConfig cfg = parse_run_config(kTinyConfig);
  Network net = build_mnn_h2<double>(cfg.network, 77);
  write_checkpoint("selfmade.ckpt", net);
  Dataset ds;
  ds.d = 1;
  ds.N = 40;
  for (int i = 0; i < 3; ++i) {
    const Tensor v = testutil::random_tensor({1, 40}, 300 + i);
    ds.inputs.push_back(v);
    ds.targets.push_back(net.forward(v));
  }
  write_dataset("selfmade.ds", ds, 8);
  REQUIRE(run_cli("eval --checkpoint selfmade.ckpt --data selfmade.ds") == 0);
  const std::string out = slurp_text("cli_stdout.txt");
  std::stringstream ss(out.substr(out.find("eps mean") + 9));
  double eps_mean = -1.0;
  ss >> eps_mean;
  CHECK(eps_mean == 0.0);
}

TEST_CASE("verify subcommand passes and config prints defaults") {
  CHECK(run_cli("verify --suite tree") == 0);
  CHECK(run_cli("verify --suite params") == 0);
  CHECK(run_cli("config") == 0);
  CHECK(slurp_text("cli_stdout.txt").find("problem = nlse") != std::string::npos);
}
