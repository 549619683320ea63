#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mnnh2/network.hpp"
#include "mnnh2/tensor.hpp"

namespace mnnh2 {

/// Paired samples (v_i, u_i) sharing one geometry.
struct Dataset {
  int d = 1;
  std::int64_t N = 0;  // points per axis
  std::vector<Tensor> inputs;
  std::vector<Tensor> targets;

  std::int64_t count() const { return static_cast<std::int64_t>(inputs.size()); }
  void validate() const;
};

/// Mean over all entries of the squared difference; gradient of the mean.
double mse_loss(const Tensor& pred, const Tensor& target, Tensor* grad = nullptr);

/// ||pred - target||_2 / ||target||_2. Errors out on a zero-norm target.
double rel_l2_error(const Tensor& pred, const Tensor& target);

struct ErrorStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::int64_t count = 0;
};

/// Mean and sample standard deviation of per-sample epsilon values.
ErrorStats error_stats(const std::vector<double>& eps);

// ---------------------------------------------------------------------------
// Nadam: Adam moments with a Nesterov momentum schedule
// mu_t = beta1 * (1 - 0.5 * 0.96^(t/250)).
// ---------------------------------------------------------------------------
struct NadamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class Real>
struct NadamT {
  NadamConfig cfg;
  std::int64_t step_count = 0;
  double mu_product = 1.0;
  std::vector<std::vector<Real>> m_w, v_w, m_b, v_b;

  template <class Model>
  void init(const Model& net) {
    const int n = net.num_layers();
    m_w.assign(n, {});
    v_w.assign(n, {});
    m_b.assign(n, {});
    v_b.assign(n, {});
    for (int i = 0; i < n; ++i) {
      m_w[i].assign(net.layer_at(i)->W.size(), Real(0));
      v_w[i].assign(net.layer_at(i)->W.size(), Real(0));
      m_b[i].assign(net.layer_at(i)->b.size(), Real(0));
      v_b[i].assign(net.layer_at(i)->b.size(), Real(0));
    }
  }

  double mu_at(std::int64_t t) const {
    return cfg.beta1 * (1.0 - 0.5 * std::pow(0.96, static_cast<double>(t) / 250.0));
  }

  template <class Model>
  void step(Model& net, const GradsT<Real>& grads) {
    ++step_count;
    const double mu_t = mu_at(step_count);
    const double mu_next = mu_at(step_count + 1);
    mu_product *= mu_t;
    const double mprod_next = mu_product * mu_next;
    const double v_corr = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_count));
    auto update = [&](std::vector<Real>& theta, const std::vector<Real>& g, std::vector<Real>& m,
                      std::vector<Real>& v) {
      for (std::size_t j = 0; j < theta.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        const double mj = cfg.beta1 * static_cast<double>(m[j]) + (1.0 - cfg.beta1) * gj;
        const double vj =
            cfg.beta2 * static_cast<double>(v[j]) + (1.0 - cfg.beta2) * gj * gj;
        m[j] = static_cast<Real>(mj);
        v[j] = static_cast<Real>(vj);
        const double g_hat = gj / (1.0 - mu_product);
        const double m_hat = mj / (1.0 - mprod_next);
        const double v_hat = vj / v_corr;
        const double m_bar = (1.0 - mu_t) * g_hat + mu_next * m_hat;
        theta[j] = static_cast<Real>(static_cast<double>(theta[j]) -
                                     cfg.lr * m_bar / (std::sqrt(v_hat) + cfg.epsilon));
      }
    };
    for (int i = 0; i < net.num_layers(); ++i) {
      update(net.layer_at(i)->W, grads.w[i], m_w[i], v_w[i]);
      update(net.layer_at(i)->b, grads.b[i], m_b[i], v_b[i]);
    }
  }
};

using Nadam = NadamT<double>;

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------
struct TrainConfig {
  int epochs = 500;
  std::int64_t batch = 0;  // 0: ceil(count / 100)
  std::uint64_t seed = 1;
  bool shuffle = true;
  int checkpoint_every = 0;  // 0: only via caller after return
  std::string metrics_path;  // empty: no CSV
  int threads = 1;
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double eps_train = 0.0, sigma_train = 0.0;
  double eps_test = 0.0, sigma_test = 0.0;
};

std::int64_t effective_batch(const TrainConfig& cfg, std::int64_t count);
void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history);

/// Per-sample relative errors of the model over a dataset.
template <class Model>
std::vector<double> model_errors(const Model& net, const Dataset& data, int threads);

/// Epochwise shuffled minibatch training with Nadam. Per-sample gradients are
/// computed into per-sample buffers and reduced in sample order, so results
/// do not depend on the thread count. Metrics are recorded per epoch; a NaN
/// loss aborts with a diagnostic.
template <class Model>
std::vector<EpochMetrics> train(Model& net, NadamT<typename Model::value_type>& opt,
                                const Dataset& train_data, const Dataset& test_data,
                                const TrainConfig& cfg, int start_epoch = 0,
                                const std::function<void(int, const Model&)>& on_epoch = nullptr);

/// Max deviation between analytic and central finite-difference parameter
/// gradients of the sample loss, measured relative to the largest analytic
/// gradient component. Checks >= min_params parameters spread over every
/// layer.
template <class Model>
double grad_check(Model& net, const Tensor& input, const Tensor& target, int min_params = 200,
                  double fd_step = 1e-6, std::uint64_t seed = 7);

}  // namespace mnnh2
