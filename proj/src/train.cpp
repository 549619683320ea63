#include "mnnh2/train.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace mnnh2 {

void Dataset::validate() const {
  check(count() >= 1, "dataset: needs at least one sample");
  check(inputs.size() == targets.size(), "dataset: input/target count mismatch");
  const std::vector<std::int64_t> want =
      d == 1 ? std::vector<std::int64_t>{1, N} : std::vector<std::int64_t>{1, N, N};
  for (std::int64_t i = 0; i < count(); ++i)
    if (inputs[i].shape != want || targets[i].shape != want)
      throw shape_error("dataset: sample " + std::to_string(i) + " has inconsistent geometry");
}

double mse_loss(const Tensor& pred, const Tensor& target, Tensor* grad) {
  check(pred.shape == target.shape, "mse_loss: shape mismatch");
  const std::int64_t n = pred.numel();
  double acc = 0.0;
  if (grad) *grad = Tensor(pred.shape);
  for (std::int64_t i = 0; i < n; ++i) {
    const double diff = pred.data[i] - target.data[i];
    acc += diff * diff;
    if (grad) grad->data[i] = 2.0 * diff / static_cast<double>(n);
  }
  return acc / static_cast<double>(n);
}

double rel_l2_error(const Tensor& pred, const Tensor& target) {
  check(pred.shape == target.shape, "rel_l2_error: shape mismatch");
  double num = 0.0, den = 0.0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const double diff = pred.data[i] - target.data[i];
    num += diff * diff;
    den += target.data[i] * target.data[i];
  }
  if (den == 0.0) throw numeric_error("rel_l2_error: target has zero norm");
  return std::sqrt(num / den);
}

ErrorStats error_stats(const std::vector<double>& eps) {
  ErrorStats st;
  st.count = static_cast<std::int64_t>(eps.size());
  if (st.count == 0) return st;
  st.mean = std::accumulate(eps.begin(), eps.end(), 0.0) / static_cast<double>(st.count);
  if (st.count > 1) {
    double acc = 0.0;
    for (double e : eps) acc += (e - st.mean) * (e - st.mean);
    st.stddev = std::sqrt(acc / static_cast<double>(st.count - 1));
  }
  return st;
}

std::int64_t effective_batch(const TrainConfig& cfg, std::int64_t count) {
  std::int64_t b = cfg.batch > 0 ? cfg.batch : (count + 99) / 100;
  b = std::max<std::int64_t>(1, std::min(b, count));
  return b;
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history) {
  std::ofstream out(path);
  if (!out) throw error("metrics: cannot open " + path);
  out << "epoch,loss,eps_train,sigma_train,eps_test,sigma_test\n";
  out.precision(17);
  for (const auto& row : history)
    out << row.epoch << ',' << row.loss << ',' << row.eps_train << ',' << row.sigma_train << ','
        << row.eps_test << ',' << row.sigma_test << '\n';
}

namespace {

template <class Real>
TensorT<Real> cast_tensor(const Tensor& t) {
  if constexpr (std::is_same_v<Real, double>) {
    return t;
  } else {
    TensorT<Real> out(t.shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) out.data[i] = static_cast<Real>(t.data[i]);
    return out;
  }
}

template <class Real>
Tensor cast_back(const TensorT<Real>& t) {
  if constexpr (std::is_same_v<Real, double>) {
    return t;
  } else {
    Tensor out(t.shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) out.data[i] = static_cast<double>(t.data[i]);
    return out;
  }
}

// Fisher-Yates with the library RNG so shuffles are platform-stable.
void shuffle_indices(std::vector<std::int64_t>& idx, RngStream& rng) {
  for (std::int64_t i = static_cast<std::int64_t>(idx.size()) - 1; i > 0; --i)
    std::swap(idx[i], idx[rng.uniform_index(static_cast<std::uint64_t>(i + 1))]);
}

}  // namespace

template <class Model>
std::vector<double> model_errors(const Model& net, const Dataset& data, int threads) {
  using Real = typename Model::value_type;
  std::vector<double> eps(data.count());
  parallel_for(data.count(), threads, [&](std::int64_t i) {
    const TensorT<Real> pred = net.forward(cast_tensor<Real>(data.inputs[i]));
    eps[i] = rel_l2_error(cast_back(pred), data.targets[i]);
  });
  return eps;
}

template <class Model>
std::vector<EpochMetrics> train(Model& net, NadamT<typename Model::value_type>& opt,
                                const Dataset& train_data, const Dataset& test_data,
                                const TrainConfig& cfg, int start_epoch,
                                const std::function<void(int, const Model&)>& on_epoch) {
  using Real = typename Model::value_type;
  train_data.validate();
  test_data.validate();
  const std::int64_t count = train_data.count();
  const std::int64_t batch = effective_batch(cfg, count);

  if (opt.m_w.empty()) opt.init(net);

  // Per-sample buffers reused across batches; reduction in sample order keeps
  // results independent of the thread count.
  std::vector<GradsT<Real>> sample_grads(batch);
  for (auto& g : sample_grads) net.init_grads(g);
  std::vector<typename Model::Workspace> ws(batch);
  std::vector<double> sample_loss(batch);
  GradsT<Real> grads;
  net.init_grads(grads);

  std::vector<std::int64_t> order(count);
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochMetrics> history;
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      std::iota(order.begin(), order.end(), 0);
      RngStream rng(cfg.seed ^ 0x5351ull, static_cast<std::uint64_t>(epoch) + 1);
      shuffle_indices(order, rng);
    }

    double epoch_loss = 0.0;
    std::int64_t batches = 0;
    for (std::int64_t start = 0; start < count; start += batch) {
      const std::int64_t b = std::min(batch, count - start);
      parallel_for(b, cfg.threads, [&](std::int64_t s) {
        const std::int64_t idx = order[start + s];
        sample_grads[s].setzero();
        const TensorT<Real> pred =
            net.forward(cast_tensor<Real>(train_data.inputs[idx]), ws[s]);
        TensorT<Real> gup(pred.shape);
        const TensorT<Real> target = cast_tensor<Real>(train_data.targets[idx]);
        double acc = 0.0;
        const double scale = 2.0 / (static_cast<double>(pred.numel()) * static_cast<double>(b));
        for (std::int64_t j = 0; j < pred.numel(); ++j) {
          const double diff = static_cast<double>(pred.data[j]) - static_cast<double>(target.data[j]);
          acc += diff * diff;
          gup.data[j] = static_cast<Real>(diff * scale);
        }
        sample_loss[s] = acc / static_cast<double>(pred.numel());
        net.backward(ws[s], gup, sample_grads[s]);
      });

      grads.setzero();
      double batch_loss = 0.0;
      for (std::int64_t s = 0; s < b; ++s) {
        batch_loss += sample_loss[s];
        for (std::size_t l = 0; l < grads.w.size(); ++l) {
          for (std::size_t j = 0; j < grads.w[l].size(); ++j)
            grads.w[l][j] += sample_grads[s].w[l][j];
          for (std::size_t j = 0; j < grads.b[l].size(); ++j)
            grads.b[l][j] += sample_grads[s].b[l][j];
        }
      }
      batch_loss /= static_cast<double>(b);
      if (!std::isfinite(batch_loss))
        throw numeric_error("train: loss became non-finite at epoch " + std::to_string(epoch + 1) +
                            ", batch " + std::to_string(batches + 1));
      epoch_loss += batch_loss;
      ++batches;
      opt.step(net, grads);
    }

    EpochMetrics row;
    row.epoch = epoch + 1;
    row.loss = epoch_loss / static_cast<double>(batches);
    const ErrorStats tr = error_stats(model_errors(net, train_data, cfg.threads));
    row.eps_train = tr.mean;
    row.sigma_train = tr.stddev;
    const ErrorStats te = error_stats(model_errors(net, test_data, cfg.threads));
    row.eps_test = te.mean;
    row.sigma_test = te.stddev;
    history.push_back(row);
    if (on_epoch) on_epoch(epoch + 1, net);
  }
  if (!cfg.metrics_path.empty()) write_metrics_csv(cfg.metrics_path, history);
  return history;
}

template <class Model>
double grad_check(Model& net, const Tensor& input, const Tensor& target, int min_params,
                  double fd_step, std::uint64_t seed) {
  using Real = typename Model::value_type;
  const TensorT<Real> x = cast_tensor<Real>(input);
  const TensorT<Real> t = cast_tensor<Real>(target);

  auto loss_at = [&]() {
    const TensorT<Real> pred = net.forward(x);
    double acc = 0.0;
    for (std::int64_t j = 0; j < pred.numel(); ++j) {
      const double diff = static_cast<double>(pred.data[j]) - static_cast<double>(t.data[j]);
      acc += diff * diff;
    }
    return acc / static_cast<double>(t.numel());
  };

  GradsT<Real> grads;
  net.init_grads(grads);
  typename Model::Workspace ws;
  const TensorT<Real> pred = net.forward(x, ws);
  TensorT<Real> gup(pred.shape);
  for (std::int64_t j = 0; j < pred.numel(); ++j)
    gup.data[j] = static_cast<Real>(
        2.0 * (static_cast<double>(pred.data[j]) - static_cast<double>(t.data[j])) /
        static_cast<double>(pred.numel()));
  net.backward(ws, gup, grads);

  double gmax = 0.0;
  for (const auto& g : grads.w)
    for (Real v : g) gmax = std::max(gmax, std::abs(static_cast<double>(v)));
  for (const auto& g : grads.b)
    for (Real v : g) gmax = std::max(gmax, std::abs(static_cast<double>(v)));
  if (gmax == 0.0) gmax = 1.0;

  const int n_layers = net.num_layers();
  std::int64_t total = 0;
  for (int l = 0; l < n_layers; ++l)
    total += static_cast<std::int64_t>(net.layer_at(l)->W.size() + net.layer_at(l)->b.size());
  const int per_layer =
      static_cast<int>((min_params + 2 * n_layers - 1) / std::max(1, n_layers)) + 1;

  RngStream rng(seed, 0xfd);
  double worst = 0.0;
  for (int l = 0; l < n_layers; ++l) {
    LayerT<Real>* lay = net.layer_at(l);
    const std::int64_t nw = static_cast<std::int64_t>(lay->W.size());
    const std::int64_t nb = static_cast<std::int64_t>(lay->b.size());
    for (int pick = 0; pick < per_layer; ++pick) {
      const std::int64_t j = static_cast<std::int64_t>(rng.uniform_index(nw + nb));
      Real* theta = j < nw ? &lay->W[j] : &lay->b[j - nw];
      const double analytic =
          j < nw ? static_cast<double>(grads.w[l][j]) : static_cast<double>(grads.b[l][j - nw]);
      const Real saved = *theta;
      *theta = static_cast<Real>(static_cast<double>(saved) + fd_step);
      const double lp = loss_at();
      *theta = static_cast<Real>(static_cast<double>(saved) - fd_step);
      const double lm = loss_at();
      *theta = saved;
      const double fd = (lp - lm) / (2.0 * fd_step);
      worst = std::max(worst, std::abs(analytic - fd) / gmax);
    }
  }
  (void)total;
  return worst;
}

template std::vector<double> model_errors(const NetworkT<double>&, const Dataset&, int);
template std::vector<double> model_errors(const NetworkT<float>&, const Dataset&, int);
template std::vector<double> model_errors(const PlainCnnT<double>&, const Dataset&, int);
template std::vector<double> model_errors(const PlainCnnT<float>&, const Dataset&, int);

template std::vector<EpochMetrics> train(NetworkT<double>&, NadamT<double>&, const Dataset&,
                                         const Dataset&, const TrainConfig&, int,
                                         const std::function<void(int, const NetworkT<double>&)>&);
template std::vector<EpochMetrics> train(NetworkT<float>&, NadamT<float>&, const Dataset&,
                                         const Dataset&, const TrainConfig&, int,
                                         const std::function<void(int, const NetworkT<float>&)>&);
template std::vector<EpochMetrics> train(PlainCnnT<double>&, NadamT<double>&, const Dataset&,
                                         const Dataset&, const TrainConfig&, int,
                                         const std::function<void(int, const PlainCnnT<double>&)>&);
template std::vector<EpochMetrics> train(PlainCnnT<float>&, NadamT<float>&, const Dataset&,
                                         const Dataset&, const TrainConfig&, int,
                                         const std::function<void(int, const PlainCnnT<float>&)>&);

template double grad_check(NetworkT<double>&, const Tensor&, const Tensor&, int, double,
                           std::uint64_t);
template double grad_check(PlainCnnT<double>&, const Tensor&, const Tensor&, int, double,
                           std::uint64_t);

}  // namespace mnnh2
