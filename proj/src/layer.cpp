#include "mnnh2/layer.hpp"

namespace mnnh2 {

void LayerSpec::validate() const {
  check(dims == 1 || dims == 2, "layer: dims must be 1 or 2");
  check(alpha >= 1 && alphap >= 1, "layer: channel counts must be positive");
  const int na = dims;
  for (int a = 0; a < na; ++a) {
    check(nx[a] >= 1 && nxp[a] >= 1, "layer: spatial extents must be positive");
    switch (kind) {
      case LayerKind::restriction:
        check(nx[a] % nxp[a] == 0, "restriction: nx must be divisible by nxp");
        check(s[a] == nx[a] / nxp[a] && w[a] == s[a], "restriction: requires s = w = nx/nxp");
        break;
      case LayerKind::kernel:
        check(nxp[a] == nx[a] && s[a] == 1, "kernel: requires s = 1, nxp = nx");
        if (w[a] % 2 == 0) throw shape_error("kernel: window must be odd");
        break;
      case LayerKind::interpolation:
        check(nxp[a] == nx[a] && s[a] == 1 && w[a] == 1, "interpolation: requires s = w = 1");
        break;
    }
  }
}

LayerSpec restriction_spec(int dims, std::array<std::int64_t, 2> nx,
                           std::array<std::int64_t, 2> nxp, std::int64_t alpha,
                           std::int64_t alphap, Activation act, Sharing sharing) {
  LayerSpec sp;
  sp.kind = LayerKind::restriction;
  sp.sharing = sharing;
  sp.dims = dims;
  sp.nx = nx;
  sp.nxp = nxp;
  for (int a = 0; a < dims; ++a) {
    sp.s[a] = nx[a] / nxp[a];
    sp.w[a] = sp.s[a];
  }
  sp.alpha = alpha;
  sp.alphap = alphap;
  sp.act = act;
  sp.validate();
  return sp;
}

LayerSpec kernel_spec(int dims, std::array<std::int64_t, 2> nx, std::int64_t alpha,
                      std::int64_t alphap, std::int64_t w, Activation act, Sharing sharing,
                      PadMode padding) {
  LayerSpec sp;
  sp.kind = LayerKind::kernel;
  sp.sharing = sharing;
  sp.dims = dims;
  sp.nx = nx;
  sp.nxp = nx;
  sp.w = {w, w};
  sp.alpha = alpha;
  sp.alphap = alphap;
  sp.act = act;
  sp.padding = padding;
  sp.validate();
  return sp;
}

LayerSpec interpolation_spec(int dims, std::array<std::int64_t, 2> nx, std::int64_t alpha,
                             std::int64_t alphap, Activation act, Sharing sharing) {
  LayerSpec sp;
  sp.kind = LayerKind::interpolation;
  sp.sharing = sharing;
  sp.dims = dims;
  sp.nx = nx;
  sp.nxp = nx;
  sp.alpha = alpha;
  sp.alphap = alphap;
  sp.act = act;
  sp.validate();
  return sp;
}

std::int64_t weight_count(const LayerSpec& spec) {
  const std::int64_t per_pos = spec.alpha * spec.alphap * spec.taps();
  return spec.sharing == Sharing::local ? spec.out_positions() * per_pos : per_pos;
}

std::int64_t bias_count(const LayerSpec& spec) {
  if (!spec.bias) return 0;
  return spec.sharing == Sharing::local ? spec.alphap * spec.out_positions() : spec.alphap;
}

std::int64_t param_count(const LayerSpec& spec, bool include_bias) {
  return weight_count(spec) + (include_bias ? bias_count(spec) : 0);
}

template <class Real>
LayerT<Real>::LayerT(const LayerSpec& s) : spec(s) {
  spec.validate();
  W.assign(weight_count(spec), Real(0));
  b.assign(spec.bias ? (spec.sharing == Sharing::local ? spec.alphap * spec.out_positions()
                                                       : spec.alphap)
                     : 0,
           Real(0));
}

template <class Real>
void LayerT<Real>::init_normal(RngStream& rng, double sigma) {
  for (auto& w : W) w = static_cast<Real>(rng.normal(0.0, sigma));
  for (auto& bb : b) bb = Real(0);
}

namespace {

template <class Real>
inline Real activate(Real z, Activation act) {
  return act == Activation::relu ? (z > Real(0) ? z : Real(0)) : z;
}

// relu'(0) := 0 by convention.
template <class Real>
inline Real activate_grad(Real z, Activation act) {
  return act == Activation::relu ? (z > Real(0) ? Real(1) : Real(0)) : Real(1);
}

// Adjoint of the forward padding: wrapped contributions fold back additively
// for periodic padding, out-of-range ones drop for zero padding.
template <class Real>
TensorT<Real> unpad_fold(const LayerSpec& sp, const TensorT<Real>& gxp) {
  const std::int64_t lo = sp.pad_lo(0);
  if (lo == 0) return gxp;
  const std::int64_t a = sp.alpha;
  if (sp.dims == 1) {
    const std::int64_t nx = sp.nx[0];
    TensorT<Real> gx({a, nx});
    for (std::int64_t j = 0; j < gxp.shape[1]; ++j) {
      const std::int64_t src = j - lo;
      std::int64_t dst;
      if (sp.padding == PadMode::periodic) {
        dst = ((src % nx) + nx) % nx;
      } else {
        if (src < 0 || src >= nx) continue;
        dst = src;
      }
      for (std::int64_t c = 0; c < a; ++c) gx.at(c, dst) += gxp.at(c, j);
    }
    return gx;
  }
  const std::int64_t n1 = sp.nx[0], n2 = sp.nx[1];
  TensorT<Real> gx({a, n1, n2});
  for (std::int64_t j2 = 0; j2 < gxp.shape[2]; ++j2)
    for (std::int64_t j1 = 0; j1 < gxp.shape[1]; ++j1) {
      const std::int64_t s1 = j1 - lo, s2 = j2 - lo;
      std::int64_t d1, d2;
      if (sp.padding == PadMode::periodic) {
        d1 = ((s1 % n1) + n1) % n1;
        d2 = ((s2 % n2) + n2) % n2;
      } else {
        if (s1 < 0 || s1 >= n1 || s2 < 0 || s2 >= n2) continue;
        d1 = s1;
        d2 = s2;
      }
      for (std::int64_t c = 0; c < a; ++c) gx.at(c, d1, d2) += gxp.at(c, j1, j2);
    }
  return gx;
}

}  // namespace

template <class Real>
TensorT<Real> LayerT<Real>::forward(const TensorT<Real>& x) const {
  Cache scratch;
  return forward(x, scratch);
}

template <class Real>
TensorT<Real> LayerT<Real>::forward(const TensorT<Real>& x, Cache& cache) const {
  const LayerSpec& sp = spec;
  const std::int64_t a = sp.alpha, ap = sp.alphap;

  if (sp.dims == 1) {
    if (x.rank() != 2 || x.shape[0] != a || x.shape[1] != sp.nx[0])
      throw shape_error("layer forward: expected (" + std::to_string(a) + "x" +
                        std::to_string(sp.nx[0]) + "), got " + x.shape_str());
    cache.padded = sp.pad_lo(0) > 0 ? pad(x, sp.padding, sp.pad_lo(0), sp.pad_lo(0)) : x;
    const TensorT<Real>& xp = cache.padded;
    const std::int64_t nxp = sp.nxp[0], w = sp.w[0], stride = sp.s[0];
    cache.pre = TensorT<Real>({ap, nxp});
    TensorT<Real> out({ap, nxp});
    const bool local = sp.sharing == Sharing::local;
    const std::int64_t wsz = a * ap * w;
    for (std::int64_t i = 0; i < nxp; ++i) {
      const Real* wi = W.data() + (local ? wsz * i : 0);
      Real* zi = cache.pre.data.data() + ap * i;
      if (!b.empty()) {
        const Real* bi = b.data() + (local ? ap * i : 0);
        for (std::int64_t cp = 0; cp < ap; ++cp) zi[cp] = bi[cp];
      } else {
        for (std::int64_t cp = 0; cp < ap; ++cp) zi[cp] = Real(0);
      }
      for (std::int64_t t = 0; t < w; ++t) {
        const Real* xt = xp.data.data() + a * (i * stride + t);
        const Real* wt = wi + ap * a * t;
        for (std::int64_t c = 0; c < a; ++c) {
          const Real xv = xt[c];
          const Real* wc = wt + ap * c;
          for (std::int64_t cp = 0; cp < ap; ++cp) zi[cp] += wc[cp] * xv;
        }
      }
      Real* oi = out.data.data() + ap * i;
      for (std::int64_t cp = 0; cp < ap; ++cp) oi[cp] = activate(zi[cp], sp.act);
    }
    return out;
  }

  if (x.rank() != 3 || x.shape[0] != a || x.shape[1] != sp.nx[0] || x.shape[2] != sp.nx[1])
    throw shape_error("layer forward: expected (" + std::to_string(a) + "x" +
                      std::to_string(sp.nx[0]) + "x" + std::to_string(sp.nx[1]) + "), got " +
                      x.shape_str());
  cache.padded = sp.pad_lo(0) > 0 ? pad(x, sp.padding, sp.pad_lo(0), sp.pad_lo(0)) : x;
  const TensorT<Real>& xp = cache.padded;
  const std::int64_t n1 = sp.nxp[0], n2 = sp.nxp[1], w1 = sp.w[0], w2 = sp.w[1];
  const std::int64_t s1 = sp.s[0], s2 = sp.s[1];
  const std::int64_t p1 = xp.shape[1];
  cache.pre = TensorT<Real>({ap, n1, n2});
  TensorT<Real> out({ap, n1, n2});
  const bool local = sp.sharing == Sharing::local;
  const std::int64_t wsz = a * ap * w1 * w2;
  for (std::int64_t i2 = 0; i2 < n2; ++i2)
    for (std::int64_t i1 = 0; i1 < n1; ++i1) {
      const std::int64_t ipos = i1 + n1 * i2;
      const Real* wi = W.data() + (local ? wsz * ipos : 0);
      Real* zi = cache.pre.data.data() + ap * ipos;
      if (!b.empty()) {
        const Real* bi = b.data() + (local ? ap * ipos : 0);
        for (std::int64_t cp = 0; cp < ap; ++cp) zi[cp] = bi[cp];
      } else {
        for (std::int64_t cp = 0; cp < ap; ++cp) zi[cp] = Real(0);
      }
      for (std::int64_t t2 = 0; t2 < w2; ++t2)
        for (std::int64_t t1 = 0; t1 < w1; ++t1) {
          const Real* xt = xp.data.data() + a * ((i1 * s1 + t1) + p1 * (i2 * s2 + t2));
          const Real* wt = wi + ap * a * (t1 + w1 * t2);
          for (std::int64_t c = 0; c < a; ++c) {
            const Real xv = xt[c];
            const Real* wc = wt + ap * c;
            for (std::int64_t cp = 0; cp < ap; ++cp) zi[cp] += wc[cp] * xv;
          }
        }
      Real* oi = out.data.data() + ap * ipos;
      for (std::int64_t cp = 0; cp < ap; ++cp) oi[cp] = activate(zi[cp], sp.act);
    }
  return out;
}

template <class Real>
TensorT<Real> LayerT<Real>::backward(const Cache& cache, const TensorT<Real>& grad_out,
                                     std::vector<Real>& grad_w, std::vector<Real>& grad_b) const {
  const LayerSpec& sp = spec;
  const std::int64_t a = sp.alpha, ap = sp.alphap;
  grad_w.resize(W.size(), Real(0));
  grad_b.resize(b.size(), Real(0));
  const TensorT<Real>& xp = cache.padded;
  const bool local = sp.sharing == Sharing::local;

  if (sp.dims == 1) {
    const std::int64_t nxp = sp.nxp[0], w = sp.w[0], stride = sp.s[0];
    check(grad_out.rank() == 2 && grad_out.shape[0] == ap && grad_out.shape[1] == nxp,
          "layer backward: upstream gradient shape mismatch");
    TensorT<Real> gxp(xp.shape);
    const std::int64_t wsz = a * ap * w;
    std::vector<Real> dz(ap);
    for (std::int64_t i = 0; i < nxp; ++i) {
      const Real* gi = grad_out.data.data() + ap * i;
      const Real* zi = cache.pre.data.data() + ap * i;
      for (std::int64_t cp = 0; cp < ap; ++cp) dz[cp] = gi[cp] * activate_grad(zi[cp], sp.act);
      if (!b.empty()) {
        Real* gb = grad_b.data() + (local ? ap * i : 0);
        for (std::int64_t cp = 0; cp < ap; ++cp) gb[cp] += dz[cp];
      }
      const Real* wi = W.data() + (local ? wsz * i : 0);
      Real* gwi = grad_w.data() + (local ? wsz * i : 0);
      for (std::int64_t t = 0; t < w; ++t) {
        const std::int64_t j = i * stride + t;
        const Real* xt = xp.data.data() + a * j;
        Real* gxt = gxp.data.data() + a * j;
        const Real* wt = wi + ap * a * t;
        Real* gwt = gwi + ap * a * t;
        for (std::int64_t c = 0; c < a; ++c) {
          const Real xv = xt[c];
          const Real* wc = wt + ap * c;
          Real* gwc = gwt + ap * c;
          Real acc = Real(0);
          for (std::int64_t cp = 0; cp < ap; ++cp) {
            gwc[cp] += dz[cp] * xv;
            acc += wc[cp] * dz[cp];
          }
          gxt[c] += acc;
        }
      }
    }
    return unpad_fold(sp, gxp);
  }

  const std::int64_t n1 = sp.nxp[0], n2 = sp.nxp[1], w1 = sp.w[0], w2 = sp.w[1];
  const std::int64_t s1 = sp.s[0], s2 = sp.s[1];
  check(grad_out.rank() == 3 && grad_out.shape[0] == ap && grad_out.shape[1] == n1 &&
            grad_out.shape[2] == n2,
        "layer backward: upstream gradient shape mismatch");
  const std::int64_t p1 = xp.shape[1];
  TensorT<Real> gxp(xp.shape);
  const std::int64_t wsz = a * ap * w1 * w2;
  std::vector<Real> dz(ap);
  for (std::int64_t i2 = 0; i2 < n2; ++i2)
    for (std::int64_t i1 = 0; i1 < n1; ++i1) {
      const std::int64_t ipos = i1 + n1 * i2;
      const Real* gi = grad_out.data.data() + ap * ipos;
      const Real* zi = cache.pre.data.data() + ap * ipos;
      for (std::int64_t cp = 0; cp < ap; ++cp) dz[cp] = gi[cp] * activate_grad(zi[cp], sp.act);
      if (!b.empty()) {
        Real* gb = grad_b.data() + (local ? ap * ipos : 0);
        for (std::int64_t cp = 0; cp < ap; ++cp) gb[cp] += dz[cp];
      }
      const Real* wi = W.data() + (local ? wsz * ipos : 0);
      Real* gwi = grad_w.data() + (local ? wsz * ipos : 0);
      for (std::int64_t t2 = 0; t2 < w2; ++t2)
        for (std::int64_t t1 = 0; t1 < w1; ++t1) {
          const std::int64_t j = (i1 * s1 + t1) + p1 * (i2 * s2 + t2);
          const Real* xt = xp.data.data() + a * j;
          Real* gxt = gxp.data.data() + a * j;
          const Real* wt = wi + ap * a * (t1 + w1 * t2);
          Real* gwt = gwi + ap * a * (t1 + w1 * t2);
          for (std::int64_t c = 0; c < a; ++c) {
            const Real xv = xt[c];
            const Real* wc = wt + ap * c;
            Real* gwc = gwt + ap * c;
            Real acc = Real(0);
            for (std::int64_t cp = 0; cp < ap; ++cp) {
              gwc[cp] += dz[cp] * xv;
              acc += wc[cp] * dz[cp];
            }
            gxt[c] += acc;
          }
        }
    }
  return unpad_fold(sp, gxp);
}

template struct LayerT<float>;
template struct LayerT<double>;

}  // namespace mnnh2
