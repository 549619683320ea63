#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mnnh2/tensor.hpp"

namespace mnnh2 {

enum class LayerKind { restriction, kernel, interpolation };
enum class Sharing { local, conv };
enum class Activation { linear, relu };

/// Geometry and wiring of one locally connected or convolutional layer.
/// restriction: s = w = nx/nxp per axis; kernel: s = 1, nxp = nx, odd w,
/// padded (w-1)/2 each side; interpolation: s = w = 1, nxp = nx.
struct LayerSpec {
  LayerKind kind = LayerKind::kernel;
  Sharing sharing = Sharing::local;
  int dims = 1;
  std::array<std::int64_t, 2> nx{1, 1};   // input spatial extents
  std::array<std::int64_t, 2> nxp{1, 1};  // output spatial extents
  std::array<std::int64_t, 2> w{1, 1};
  std::array<std::int64_t, 2> s{1, 1};
  std::int64_t alpha = 1;
  std::int64_t alphap = 1;
  Activation act = Activation::linear;
  PadMode padding = PadMode::periodic;
  bool bias = true;

  std::int64_t out_positions() const { return dims == 1 ? nxp[0] : nxp[0] * nxp[1]; }
  std::int64_t taps() const { return dims == 1 ? w[0] : w[0] * w[1]; }
  std::int64_t pad_lo(int axis) const {
    return kind == LayerKind::kernel ? (w[axis] - 1) / 2 : 0;
  }

  void validate() const;
};

LayerSpec restriction_spec(int dims, std::array<std::int64_t, 2> nx,
                           std::array<std::int64_t, 2> nxp, std::int64_t alpha,
                           std::int64_t alphap, Activation act, Sharing sharing);
LayerSpec kernel_spec(int dims, std::array<std::int64_t, 2> nx, std::int64_t alpha,
                      std::int64_t alphap, std::int64_t w, Activation act, Sharing sharing,
                      PadMode padding);
LayerSpec interpolation_spec(int dims, std::array<std::int64_t, 2> nx, std::int64_t alpha,
                             std::int64_t alphap, Activation act, Sharing sharing);

/// Weight count per the closed forms (bias count reported separately):
/// local layers store nxp * alpha * alphap * w scalars, convolutional layers
/// alpha * alphap * w, with w the per-position tap count.
std::int64_t weight_count(const LayerSpec& spec);
std::int64_t bias_count(const LayerSpec& spec);
std::int64_t param_count(const LayerSpec& spec, bool include_bias);

/// One layer: spec plus owned parameters.
///
/// Weight storage, column-major over logical indices (c', c, t, i):
///   local:  W[c' + a'*(c + a*(t + taps*i))]   with t = t1 + w1*t2, i = i1 + nxp1*i2
///   conv:   W[c' + a'*(c + a*t)]
/// Bias: local b[c' + a'*i], conv b[c'].
template <class Real>
struct LayerT {
  LayerSpec spec;
  std::vector<Real> W;
  std::vector<Real> b;

  LayerT() = default;
  explicit LayerT(const LayerSpec& s);

  void init_normal(RngStream& rng, double sigma);

  /// Cache of everything backward needs from one forward call.
  struct Cache {
    TensorT<Real> padded;  // layer input after padding (kernel) or as-is
    TensorT<Real> pre;     // pre-activation z
  };

  TensorT<Real> forward(const TensorT<Real>& x) const;
  TensorT<Real> forward(const TensorT<Real>& x, Cache& cache) const;

  /// Exact gradients of the contraction. grad_w/grad_b are accumulated into
  /// (callers zero them per batch); the returned tensor is grad wrt x.
  TensorT<Real> backward(const Cache& cache, const TensorT<Real>& grad_out,
                         std::vector<Real>& grad_w, std::vector<Real>& grad_b) const;
};

using Layer = LayerT<double>;

}  // namespace mnnh2
