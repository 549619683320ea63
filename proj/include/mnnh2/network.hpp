#pragma once

#include <cstdint>
#include <vector>

#include "mnnh2/h2.hpp"
#include "mnnh2/layer.hpp"

namespace mnnh2 {

enum class SharingMode { lc, cnn, mixed };

/// Geometry and build options of the multiscale network. N = 2^L * m per
/// axis; K kernel layers per level and per adjacent stack; interaction band
/// 2 at level 2 and 3 above, adjacent band 1 by default.
struct NetworkConfig {
  int d = 1;
  std::int64_t N = 80;
  int L = 4;
  int m = 5;
  int r = 6;
  int K = 5;
  SharingMode sharing = SharingMode::cnn;
  PadMode padding = PadMode::periodic;
  Activation activation = Activation::relu;  // phi in the non-hard-wired layers
  int nb_ad = 1;
  int nb_level2 = 2;
  int nb_coarse = 3;
  double sigma_init = 0.02;
  int dtype_bytes = 8;

  int nb(int level) const { return level == 2 ? nb_level2 : nb_coarse; }
  void validate() const;
};

template <class Real>
struct GradsT {
  std::vector<std::vector<Real>> w;
  std::vector<std::vector<Real>> b;
  void setzero() {
    for (auto& g : w) std::fill(g.begin(), g.end(), Real(0));
    for (auto& g : b) std::fill(g.begin(), g.end(), Real(0));
  }
};

/// Two-branch multiscale network: an adjacent (near-field) stack of kernel
/// layers at leaf resolution, and a hierarchical branch of restrictions,
/// per-level kernel stacks, and interpolations with skip sums, added at the
/// output. Hard-wired linear activations: the first restriction, the final
/// interpolation, and the last adjacent layer.
template <class Real>
struct NetworkT {
  using value_type = Real;

  NetworkConfig cfg;
  std::vector<LayerT<Real>> adj;                   // K layers at leaf level
  LayerT<Real> restrict_first;                     // grid -> level-L coefficients
  std::vector<LayerT<Real>> restrict_level;        // level L-1 down to 2
  std::vector<std::vector<LayerT<Real>>> kernels;  // [level-2][k], level 2..L
  std::vector<LayerT<Real>> interp_level;          // level 2 .. L-1
  LayerT<Real> interp_final;                       // level-L coefficients -> grid

  // Construction order: adj, restrict_first, restrict_level, kernels
  // (level-major), interp_level, interp_final. Checkpoints and gradient
  // buffers index layers in this order.
  int num_layers() const;
  int idx_adj(int k) const { return k; }
  int idx_restrict_first() const { return cfg.K; }
  int idx_restrict_level(int j) const { return cfg.K + 1 + j; }  // level = L-1-j
  int idx_kernel(int level, int k) const {
    return cfg.K + 1 + (cfg.L - 2) + (level - 2) * cfg.K + k;
  }
  int idx_interp_level(int j) const {  // level = 2+j
    return cfg.K + 1 + (cfg.L - 2) + (cfg.L - 1) * cfg.K + j;
  }
  int idx_interp_final() const { return num_layers() - 1; }

  LayerT<Real>* layer_at(int idx);
  const LayerT<Real>* layer_at(int idx) const;

  struct Workspace {
    std::vector<typename LayerT<Real>::Cache> cache;
  };

  TensorT<Real> forward(const TensorT<Real>& v) const;
  TensorT<Real> forward(const TensorT<Real>& v, Workspace& ws) const;

  /// Accumulates parameter gradients into `grads` (sized via init_grads) and
  /// returns the gradient with respect to the input.
  TensorT<Real> backward(const Workspace& ws, const TensorT<Real>& grad_u,
                         GradsT<Real>& grads) const;

  void init_grads(GradsT<Real>& grads) const;
  std::int64_t count_params(bool include_bias) const;
};

using Network = NetworkT<double>;
using Grads = GradsT<double>;

/// Randomly initialized multiscale network per the construction above;
/// weights ~ Normal(0, sigma_init), biases zero. Mixed sharing places local
/// weights on all restriction/interpolation layers and the last adjacent
/// layer, convolutional weights elsewhere.
template <class Real>
NetworkT<Real> build_mnn_h2(const NetworkConfig& cfg, std::uint64_t seed);

/// K = 1, all-linear, locally connected network whose weights are loaded
/// from the factorization blocks so that forward == matvec exactly.
Network build_linear_h2_nn(const H2Matrix& h2);

/// Plain CNN stack as a bare layer list (forward = sequential application).
template <class Real>
struct PlainCnnT {
  using value_type = Real;

  std::vector<LayerT<Real>> layers;
  std::int64_t N = 0;

  struct Workspace {
    std::vector<typename LayerT<Real>::Cache> cache;
  };

  int num_layers() const { return static_cast<int>(layers.size()); }
  LayerT<Real>* layer_at(int idx) { return &layers[idx]; }
  const LayerT<Real>* layer_at(int idx) const { return &layers[idx]; }

  TensorT<Real> forward(const TensorT<Real>& v) const;
  TensorT<Real> forward(const TensorT<Real>& v, Workspace& ws) const;
  TensorT<Real> backward(const Workspace& ws, const TensorT<Real>& grad_u,
                         GradsT<Real>& grads) const;
  void init_grads(GradsT<Real>& grads) const;
  std::int64_t count_params(bool include_bias) const;
};

using PlainCnn = PlainCnnT<double>;

/// Plain convolutional baseline: 1 -> channels, `interior` channels->channels
/// stacks, channels -> 1, all with the same odd window, relu between and
/// linear last, periodic padding, biases on.
template <class Real>
PlainCnnT<Real> build_plain_cnn(int interior, int channels, std::int64_t window, std::int64_t N,
                                std::uint64_t seed, Activation act = Activation::relu);

}  // namespace mnnh2
