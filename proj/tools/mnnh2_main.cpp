// Command-line front end: dataset generation, training, evaluation, and the
// built-in verification suites.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mnnh2/io.hpp"
#include "mnnh2/verify.hpp"

namespace {

using namespace mnnh2;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

RunConfig load_config_or_default(const std::string& path) {
  RunConfig cfg = path.empty() ? parse_run_config(default_run_config()) : load_run_config(path);
  cfg.validate();
  return cfg;
}

int cmd_gen(const std::string& config_path, const std::string& out_path, std::int64_t count,
            std::int64_t seed) {
  RunConfig cfg = load_config_or_default(config_path);
  if (cfg.network.d != 1)
    throw shape_error("gen: built-in data generation covers the 1D problems only");
  std::vector<double> residuals;
  const Dataset ds = generate_dataset(cfg.problem, count, static_cast<std::uint64_t>(seed),
                                      cfg.threads, &residuals);
  write_dataset(out_path, ds, cfg.network.dtype_bytes);
  double worst = 0.0, mean = 0.0;
  for (double r : residuals) {
    worst = std::max(worst, r);
    mean += r;
  }
  mean /= static_cast<double>(residuals.size());
  std::printf("wrote %lld samples (N=%lld) to %s\n", static_cast<long long>(ds.count()),
              static_cast<long long>(ds.N), out_path.c_str());
  std::printf("solver residuals: mean %.3e, max %.3e\n", mean, worst);
  return kExitOk;
}

template <class Real>
int run_training(RunConfig& cfg, const Dataset& train_data, const Dataset& test_data,
                 const std::string& out_path, const std::string& resume_path) {
  NetworkT<Real> net = build_mnn_h2<Real>(cfg.network, cfg.training.seed);
  NadamT<Real> opt;
  opt.cfg = cfg.optimizer;
  int start_epoch = 0;
  if (!resume_path.empty()) {
    CheckpointExtra extra;
    opt.init(net);
    net = read_checkpoint<Real>(resume_path, &opt, &extra);
    start_epoch = extra.epoch_done;
    opt.cfg = cfg.optimizer;
    std::printf("resumed %s at epoch %d\n", resume_path.c_str(), start_epoch);
  }

  const int every = cfg.training.checkpoint_every;
  const std::function<void(int, const NetworkT<Real>&)> on_epoch =
      [&](int epoch, const NetworkT<Real>& model) {
        if (every > 0 && epoch % every == 0 && epoch < cfg.training.epochs)
          write_checkpoint(out_path, model, &opt, epoch);
      };
  const auto history =
      train(net, opt, train_data, test_data, cfg.training, start_epoch, on_epoch);
  write_checkpoint(out_path, net, &opt, cfg.training.epochs);
  if (!history.empty()) {
    const auto& last = history.back();
    std::printf("epoch %d: loss %.6e, eps_train %.6e, eps_test %.6e\n", last.epoch, last.loss,
                last.eps_train, last.eps_test);
  }
  std::printf("checkpoint: %s\nmetrics: %s\n", out_path.c_str(),
              cfg.training.metrics_path.c_str());
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& test_path, const std::string& out_path,
              const std::string& resume_path, const std::string& metrics_override) {
  RunConfig cfg = load_config_or_default(config_path);
  if (!metrics_override.empty()) {
    cfg.metrics_path = metrics_override;
    cfg.training.metrics_path = metrics_override;
  }
  const Dataset train_data = read_dataset(data_path);
  const Dataset test_data = test_path.empty() ? train_data : read_dataset(test_path);
  if (train_data.d != cfg.network.d || train_data.N != cfg.network.N)
    throw shape_error("train: dataset geometry (d=" + std::to_string(train_data.d) +
                      ", N=" + std::to_string(train_data.N) + ") does not match the config");
  if (test_data.d != train_data.d || test_data.N != train_data.N)
    throw shape_error("train: test dataset geometry does not match the training set");
  if (!resume_path.empty() && checkpoint_dtype(resume_path) != cfg.network.dtype_bytes)
    throw shape_error("train: resume checkpoint dtype differs from the config dtype");
  if (cfg.network.dtype_bytes == 4)
    return run_training<float>(cfg, train_data, test_data, out_path, resume_path);
  return run_training<double>(cfg, train_data, test_data, out_path, resume_path);
}

template <class Real>
int run_eval(const std::string& ckpt_path, const Dataset& data, const std::string& per_sample,
             const std::string& dump_path) {
  const NetworkT<Real> net = read_checkpoint<Real>(ckpt_path);
  if (data.d != net.cfg.d || data.N != net.cfg.N)
    throw shape_error("eval: dataset geometry does not match the checkpoint");
  std::vector<double> eps(data.count());
  std::vector<Tensor> preds(data.count());
  for (std::int64_t i = 0; i < data.count(); ++i) {
    TensorT<Real> x(data.inputs[i].shape);
    for (std::int64_t k = 0; k < x.numel(); ++k)
      x.data[k] = static_cast<Real>(data.inputs[i].data[k]);
    const TensorT<Real> pred = net.forward(x);
    preds[i] = Tensor(pred.shape);
    for (std::int64_t k = 0; k < pred.numel(); ++k)
      preds[i].data[k] = static_cast<double>(pred.data[k]);
    eps[i] = rel_l2_error(preds[i], data.targets[i]);
  }
  const ErrorStats st = error_stats(eps);
  std::printf("samples %lld: eps mean %.17e, sigma %.17e\n", static_cast<long long>(st.count),
              st.mean, st.stddev);
  if (!per_sample.empty()) {
    std::ofstream out(per_sample);
    if (!out) throw error("eval: cannot open " + per_sample);
    out << "sample,eps\n";
    out.precision(17);
    for (std::size_t i = 0; i < eps.size(); ++i) out << i << ',' << eps[i] << '\n';
  }
  if (!dump_path.empty()) {
    if (data.d != 1) throw shape_error("eval: field dumps cover 1D data only");
    std::ofstream out(dump_path);
    if (!out) throw error("eval: cannot open " + dump_path);
    out << "sample,x,u,u_nn\n";
    out.precision(17);
    for (std::int64_t i = 0; i < data.count(); ++i)
      for (std::int64_t k = 0; k < data.N; ++k)
        out << i << ',' << static_cast<double>(k) / static_cast<double>(data.N) << ','
            << data.targets[i].data[k] << ',' << preds[i].data[k] << '\n';
  }
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& per_sample, const std::string& dump_path) {
  const Dataset data = read_dataset(data_path);
  if (checkpoint_dtype(ckpt_path) == 4) return run_eval<float>(ckpt_path, data, per_sample, dump_path);
  return run_eval<double>(ckpt_path, data, per_sample, dump_path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical nested-basis networks: data generation, training, evaluation"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_path, test_path, resume_path;
  std::string per_sample_path, dump_path, suite;
  std::int64_t count = 100, seed = 1;

  CLI::App* gen = app.add_subcommand("gen", "generate a dataset with the built-in solvers");
  gen->add_option("--config", config_path, "run configuration file");
  gen->add_option("--out", out_path, "output dataset path")->required();
  gen->add_option("--count", count, "number of samples");
  gen->add_option("--seed", seed, "master seed");

  CLI::App* train_cmd = app.add_subcommand("train", "train a network on a dataset");
  train_cmd->add_option("--config", config_path, "run configuration file");
  train_cmd->add_option("--data", data_path, "training dataset")->required();
  train_cmd->add_option("--test-data", test_path, "held-out dataset");
  train_cmd->add_option("--out", out_path, "checkpoint output path")->required();
  train_cmd->add_option("--resume", resume_path, "checkpoint to resume from");
  std::string metrics_override;
  train_cmd->add_option("--metrics", metrics_override, "metrics CSV path (overrides config)");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", resume_path, "checkpoint path")->required();
  eval_cmd->add_option("--data", data_path, "dataset path")->required();
  eval_cmd->add_option("--per-sample", per_sample_path, "write per-sample errors CSV");
  eval_cmd->add_option("--dump", dump_path, "write (sample, x, u, u_nn) CSV");

  CLI::App* verify_cmd = app.add_subcommand("verify", "run a built-in verification suite");
  verify_cmd->add_option("--suite", suite, "tree|linear|grad|params|all")->required();

  CLI::App* config_cmd = app.add_subcommand("config", "print the annotated default configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(config_path, out_path, count, seed);
    if (train_cmd->parsed())
      return cmd_train(config_path, data_path, test_path, out_path, resume_path,
                       metrics_override);
    if (eval_cmd->parsed()) return cmd_eval(resume_path, data_path, per_sample_path, dump_path);
    if (config_cmd->parsed()) {
      std::cout << mnnh2::default_run_config();
      return kExitOk;
    }
    if (verify_cmd->parsed())
      return mnnh2::run_verify_suite(suite, std::cout) ? kExitOk : kExitVerifyFailed;
  } catch (const mnnh2::numeric_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const mnnh2::shape_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mnnh2::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
