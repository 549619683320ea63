#include "mnnh2/network.hpp"

#include <algorithm>

namespace mnnh2 {

void NetworkConfig::validate() const {
  check(d == 1 || d == 2, "network: d must be 1 or 2");
  check(L >= 3, "network: L must be >= 3");
  check(m >= 1 && r >= 1 && K >= 1, "network: m, r, K must be positive");
  check(nb_ad >= 1 && nb_level2 >= 1 && nb_coarse >= 1, "network: band sizes must be positive");
  if (N != (std::int64_t(1) << L) * m)
    throw shape_error("network: N must equal 2^L * m, got N=" + std::to_string(N) +
                      ", L=" + std::to_string(L) + ", m=" + std::to_string(m));
}

namespace {

template <class Real>
TensorT<Real> add(const TensorT<Real>& a, const TensorT<Real>& b) {
  check(a.shape == b.shape, "network: summed tensors must share shape");
  TensorT<Real> out = a;
  for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] += b.data[i];
  return out;
}

}  // namespace

template <class Real>
int NetworkT<Real>::num_layers() const {
  return cfg.K + 1 + (cfg.L - 2) + (cfg.L - 1) * cfg.K + (cfg.L - 2) + 1;
}

template <class Real>
LayerT<Real>* NetworkT<Real>::layer_at(int idx) {
  return const_cast<LayerT<Real>*>(static_cast<const NetworkT<Real>*>(this)->layer_at(idx));
}

template <class Real>
const LayerT<Real>* NetworkT<Real>::layer_at(int idx) const {
  check(idx >= 0 && idx < num_layers(), "network: layer index out of range");
  if (idx < cfg.K) return &adj[idx];
  if (idx == idx_restrict_first()) return &restrict_first;
  if (idx < idx_restrict_level(cfg.L - 2)) return &restrict_level[idx - idx_restrict_level(0)];
  if (idx < idx_interp_level(0)) {
    const int off = idx - idx_kernel(2, 0);
    return &kernels[off / cfg.K][off % cfg.K];
  }
  if (idx < idx_interp_final()) return &interp_level[idx - idx_interp_level(0)];
  return &interp_final;
}

template <class Real>
void NetworkT<Real>::init_grads(GradsT<Real>& grads) const {
  const int n = num_layers();
  grads.w.resize(n);
  grads.b.resize(n);
  for (int i = 0; i < n; ++i) {
    grads.w[i].assign(layer_at(i)->W.size(), Real(0));
    grads.b[i].assign(layer_at(i)->b.size(), Real(0));
  }
}

template <class Real>
std::int64_t NetworkT<Real>::count_params(bool include_bias) const {
  std::int64_t n = 0;
  for (int i = 0; i < num_layers(); ++i) n += param_count(layer_at(i)->spec, include_bias);
  return n;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> NetworkT<Real>::forward(const TensorT<Real>& v) const {
  Workspace ws;
  return forward(v, ws);
}

template <class Real>
TensorT<Real> NetworkT<Real>::forward(const TensorT<Real>& v, Workspace& ws) const {
  const int L = cfg.L, K = cfg.K, d = cfg.d;
  const std::int64_t nlev = std::int64_t(1) << L;
  ws.cache.resize(num_layers());

  if (d == 1)
    check(v.rank() == 2 && v.shape[0] == 1 && v.shape[1] == cfg.N, "network: input must be 1xN");
  else
    check(v.rank() == 3 && v.shape[0] == 1 && v.shape[1] == cfg.N && v.shape[2] == cfg.N,
          "network: input must be 1xNxN");

  // Adjacent branch at leaf resolution.
  TensorT<Real> t = d == 1 ? reshape(v, cfg.m, nlev) : reshape_t_2d(v, cfg.m, 1, nlev, nlev);
  for (int k = 0; k < K; ++k) t = adj[k].forward(t, ws.cache[idx_adj(k)]);
  TensorT<Real> u_ad =
      d == 1 ? reshape(t, std::int64_t(1), cfg.N) : reshape_m_2d(t, cfg.m, 1, nlev, nlev);

  // Downward restriction chain; dl[level-2] holds the level-l coefficients.
  std::vector<TensorT<Real>> dl(L - 1);
  dl[L - 2] = restrict_first.forward(v, ws.cache[idx_restrict_first()]);
  for (int level = L - 1; level >= 2; --level)
    dl[level - 2] =
        restrict_level[L - 1 - level].forward(dl[level - 1], ws.cache[idx_restrict_level(L - 1 - level)]);

  // Per-level kernel stacks.
  std::vector<TensorT<Real>> zeta(L - 1);
  for (int level = 2; level <= L; ++level) {
    TensorT<Real> z = dl[level - 2];
    for (int k = 0; k < K; ++k)
      z = kernels[level - 2][k].forward(z, ws.cache[idx_kernel(level, k)]);
    zeta[level - 2] = std::move(z);
  }

  // Upward interpolation chain with skip sums.
  TensorT<Real> chi = zeta[0];
  for (int level = 2; level <= L - 1; ++level) {
    TensorT<Real> y = interp_level[level - 2].forward(chi, ws.cache[idx_interp_level(level - 2)]);
    const std::int64_t nl = std::int64_t(1) << level;
    TensorT<Real> up =
        d == 1 ? reshape(y, std::int64_t(cfg.r), 2 * nl) : reshape_m_2d(y, 2, cfg.r, nl, nl);
    chi = add(up, zeta[level - 1]);
  }
  TensorT<Real> w = interp_final.forward(chi, ws.cache[idx_interp_final()]);
  TensorT<Real> chi_out =
      d == 1 ? reshape(w, std::int64_t(1), cfg.N) : reshape_m_2d(w, cfg.m, 1, nlev, nlev);
  return add(chi_out, u_ad);
}

template <class Real>
TensorT<Real> NetworkT<Real>::backward(const Workspace& ws, const TensorT<Real>& grad_u,
                                       GradsT<Real>& grads) const {
  const int L = cfg.L, K = cfg.K, d = cfg.d;
  const std::int64_t nlev = std::int64_t(1) << L;

  // Output sum: gradient flows to both branches unchanged.
  // Hierarchical branch, final interpolation.
  TensorT<Real> gw = d == 1 ? reshape(grad_u, std::int64_t(cfg.m), nlev)
                            : reshape_t_2d(grad_u, cfg.m, 1, nlev, nlev);
  TensorT<Real> gchi = interp_final.backward(ws.cache[idx_interp_final()], gw,
                                             grads.w[idx_interp_final()], grads.b[idx_interp_final()]);

  // Upward chain in reverse; gzeta[level-2] accumulates kernel-output grads.
  std::vector<TensorT<Real>> gzeta(L - 1);
  for (int level = L - 1; level >= 2; --level) {
    gzeta[level - 1] = gchi;  // skip sum at level+1
    const std::int64_t nl = std::int64_t(1) << level;
    TensorT<Real> gy = d == 1 ? reshape(gchi, std::int64_t(2 * cfg.r), nl)
                              : reshape_t_2d(gchi, 2, cfg.r, nl, nl);
    const int idx = idx_interp_level(level - 2);
    gchi = interp_level[level - 2].backward(ws.cache[idx], gy, grads.w[idx], grads.b[idx]);
  }
  gzeta[0] = gchi;

  // Kernel stacks in reverse; gdl[level-2] = grad wrt the level's input coefs.
  std::vector<TensorT<Real>> gdl(L - 1);
  for (int level = 2; level <= L; ++level) {
    TensorT<Real> g = gzeta[level - 2];
    for (int k = K - 1; k >= 0; --k) {
      const int idx = idx_kernel(level, k);
      g = kernels[level - 2][k].backward(ws.cache[idx], g, grads.w[idx], grads.b[idx]);
    }
    gdl[level - 2] = std::move(g);
  }

  // Restriction chain in reverse: level-l coefs feed both the level kernels
  // and the next restriction, so gradients add.
  TensorT<Real> gacc = gdl[0];
  for (int level = 2; level <= L - 1; ++level) {
    const int idx = idx_restrict_level(L - 1 - level);
    TensorT<Real> gprev =
        restrict_level[L - 1 - level].backward(ws.cache[idx], gacc, grads.w[idx], grads.b[idx]);
    gacc = add(gprev, gdl[level - 1]);
  }
  TensorT<Real> gv_hier =
      restrict_first.backward(ws.cache[idx_restrict_first()], gacc,
                              grads.w[idx_restrict_first()], grads.b[idx_restrict_first()]);

  // Adjacent branch in reverse.
  TensorT<Real> gt = d == 1 ? reshape(grad_u, std::int64_t(cfg.m), nlev)
                            : reshape_t_2d(grad_u, cfg.m, 1, nlev, nlev);
  for (int k = K - 1; k >= 0; --k)
    gt = adj[k].backward(ws.cache[idx_adj(k)], gt, grads.w[idx_adj(k)], grads.b[idx_adj(k)]);
  TensorT<Real> gv_ad =
      d == 1 ? reshape(gt, std::int64_t(1), cfg.N) : reshape_m_2d(gt, cfg.m, 1, nlev, nlev);

  return add(gv_hier, gv_ad);
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

namespace {

struct SharingPlan {
  Sharing restrictions;
  Sharing interpolations;
  Sharing kernels;
  Sharing adj_last;
  Sharing adj_rest;
};

SharingPlan plan_for(SharingMode mode) {
  switch (mode) {
    case SharingMode::lc:
      return {Sharing::local, Sharing::local, Sharing::local, Sharing::local, Sharing::local};
    case SharingMode::cnn:
      return {Sharing::conv, Sharing::conv, Sharing::conv, Sharing::conv, Sharing::conv};
    case SharingMode::mixed:
    default:
      // Local weights on restriction/interpolation layers and the last
      // adjacent layer; shared weights elsewhere.
      return {Sharing::local, Sharing::local, Sharing::conv, Sharing::local, Sharing::conv};
  }
}

template <class Real>
NetworkT<Real> build_skeleton(const NetworkConfig& cfg) {
  cfg.validate();
  NetworkT<Real> net;
  net.cfg = cfg;
  const int L = cfg.L, K = cfg.K, d = cfg.d;
  const std::int64_t nlev = std::int64_t(1) << L;
  const std::int64_t leaf_ch = d == 1 ? cfg.m : std::int64_t(cfg.m) * cfg.m;
  const std::int64_t up_ch = std::int64_t(cfg.r) << d;  // 2^d children per box
  const SharingPlan plan = plan_for(cfg.sharing);
  const Activation phi = cfg.activation;

  for (int k = 0; k < K; ++k) {
    const bool last = k == K - 1;
    net.adj.emplace_back(kernel_spec(d, {nlev, nlev}, leaf_ch, leaf_ch, 2 * cfg.nb_ad + 1,
                                     last ? Activation::linear : phi,
                                     last ? plan.adj_last : plan.adj_rest, cfg.padding));
  }

  net.restrict_first = LayerT<Real>(restriction_spec(
      d, {cfg.N, cfg.N}, {nlev, nlev}, 1, cfg.r, Activation::linear, plan.restrictions));
  for (int level = L - 1; level >= 2; --level) {
    const std::int64_t nl = std::int64_t(1) << level;
    net.restrict_level.emplace_back(restriction_spec(d, {2 * nl, 2 * nl}, {nl, nl}, cfg.r, cfg.r,
                                                     phi, plan.restrictions));
  }

  net.kernels.resize(L - 1);
  for (int level = 2; level <= L; ++level) {
    const std::int64_t nl = std::int64_t(1) << level;
    for (int k = 0; k < K; ++k)
      net.kernels[level - 2].emplace_back(kernel_spec(d, {nl, nl}, cfg.r, cfg.r,
                                                      2 * cfg.nb(level) + 1, phi, plan.kernels,
                                                      cfg.padding));
  }

  for (int level = 2; level <= L - 1; ++level) {
    const std::int64_t nl = std::int64_t(1) << level;
    net.interp_level.emplace_back(
        interpolation_spec(d, {nl, nl}, cfg.r, up_ch, phi, plan.interpolations));
  }
  net.interp_final = LayerT<Real>(
      interpolation_spec(d, {nlev, nlev}, cfg.r, leaf_ch, Activation::linear, plan.interpolations));
  return net;
}

}  // namespace

template <class Real>
NetworkT<Real> build_mnn_h2(const NetworkConfig& cfg, std::uint64_t seed) {
  NetworkT<Real> net = build_skeleton<Real>(cfg);
  RngStream rng(seed, 0x6d6e6e);
  for (int i = 0; i < net.num_layers(); ++i) net.layer_at(i)->init_normal(rng, cfg.sigma_init);
  return net;
}

Network build_linear_h2_nn(const H2Matrix& h2) {
  const IndexTree& t = h2.tree;
  NetworkConfig cfg;
  cfg.d = t.d;
  cfg.N = t.points_per_axis();
  cfg.L = t.L;
  cfg.m = t.m;
  cfg.r = h2.r;
  cfg.K = 1;
  cfg.sharing = SharingMode::lc;
  cfg.padding = PadMode::periodic;
  cfg.activation = Activation::linear;
  Network net = build_skeleton<double>(cfg);

  const int L = t.L, d = t.d, r = h2.r;
  const std::int64_t nlev = std::int64_t(1) << L;
  const std::int64_t leaf_ch = t.leaf_size();

  // Adjacent layer <- A^ad blocks: tap (t1, t2) of output box i addresses the
  // cyclic neighbor at per-axis offset t - nb_ad.
  {
    Layer& lay = net.adj[0];
    const std::int64_t wtap = 2 * cfg.nb_ad + 1;
    const std::int64_t per_pos = leaf_ch * leaf_ch * (d == 1 ? wtap : wtap * wtap);
    for (std::int64_t b = 0; b < t.num_boxes(L); ++b) {
      const auto bc = t.box_coords(L, b);
      for (std::size_t k = 0; k < t.nl[L][b].size(); ++k) {
        const std::int64_t j = t.nl[L][b][k];
        const auto jc = t.box_coords(L, j);
        // Locate the unique tap addressing box j (nlev >= 8 > wtap, no wrap).
        std::int64_t tap = -1;
        const std::int64_t wlim = d == 1 ? wtap : wtap * wtap;
        for (std::int64_t tt = 0; tt < wlim && tap < 0; ++tt) {
          const std::int64_t t1 = d == 1 ? tt : tt % wtap;
          const std::int64_t t2 = d == 1 ? 0 : tt / wtap;
          const std::int64_t j1 = (((bc[0] + t1 - cfg.nb_ad) % nlev) + nlev) % nlev;
          const std::int64_t j2 = d == 1 ? 0 : (((bc[1] + t2 - cfg.nb_ad) % nlev) + nlev) % nlev;
          if (j1 == jc[0] && j2 == jc[1]) tap = tt;
        }
        check(tap >= 0, "linear load: adjacent tap not found");
        for (std::int64_t c = 0; c < leaf_ch; ++c)
          for (std::int64_t cp = 0; cp < leaf_ch; ++cp)
            lay.W[cp + leaf_ch * (c + leaf_ch * tap) + per_pos * b] = h2.Aad[b][k](cp, c);
      }
    }
  }

  // First restriction <- V^T: weight (c', local point) of leaf box b.
  {
    Layer& lay = net.restrict_first;
    const std::int64_t per_pos = 1 * r * leaf_ch;
    for (std::int64_t b = 0; b < t.num_boxes(L); ++b)
      for (std::int64_t local = 0; local < leaf_ch; ++local)
        for (std::int64_t cp = 0; cp < r; ++cp)
          lay.W[cp + r * local + per_pos * b] = h2.V[b](local, cp);
  }

  // Level restrictions <- C blocks, children in column-major local order.
  for (int level = L - 1; level >= 2; --level) {
    Layer& lay = net.restrict_level[L - 1 - level];
    const std::int64_t taps = std::int64_t(1) << d;
    const std::int64_t per_pos = r * r * taps;
    for (std::int64_t b = 0; b < t.num_boxes(level); ++b) {
      const auto kids = t.children(level, b);
      for (std::int64_t tt = 0; tt < taps; ++tt) {
        const Eigen::MatrixXd& blk = h2.C[level - 2][kids[tt]];
        for (std::int64_t c = 0; c < r; ++c)
          for (std::int64_t cp = 0; cp < r; ++cp)
            lay.W[cp + r * (c + r * tt) + per_pos * b] = blk(c, cp);
      }
    }
  }

  // Kernel layers <- M blocks: one canonical tap per interacting box, the
  // remaining (wrap-duplicated) taps stay zero.
  for (int level = 2; level <= L; ++level) {
    Layer& lay = net.kernels[level - 2][0];
    const std::int64_t nl = std::int64_t(1) << level;
    const std::int64_t wtap = 2 * cfg.nb(level) + 1;
    const std::int64_t wlim = d == 1 ? wtap : wtap * wtap;
    const std::int64_t per_pos = r * r * wlim;
    for (std::int64_t b = 0; b < t.num_boxes(level); ++b) {
      const auto bc = t.box_coords(level, b);
      for (std::size_t k = 0; k < t.il[level][b].size(); ++k) {
        const std::int64_t j = t.il[level][b][k];
        const auto jc = t.box_coords(level, j);
        std::int64_t tap = -1;
        for (std::int64_t tt = 0; tt < wlim && tap < 0; ++tt) {
          const std::int64_t t1 = d == 1 ? tt : tt % wtap;
          const std::int64_t t2 = d == 1 ? 0 : tt / wtap;
          const std::int64_t j1 = (((bc[0] + t1 - cfg.nb(level)) % nl) + nl) % nl;
          const std::int64_t j2 = d == 1 ? 0 : (((bc[1] + t2 - cfg.nb(level)) % nl) + nl) % nl;
          if (j1 == jc[0] && j2 == jc[1]) tap = tt;
        }
        check(tap >= 0, "linear load: interaction tap not found");
        for (std::int64_t c = 0; c < r; ++c)
          for (std::int64_t cp = 0; cp < r; ++cp)
            lay.W[cp + r * (c + r * tap) + per_pos * b] = h2.M[level - 2][b][k](cp, c);
      }
    }
  }

  // Level interpolations <- B blocks: output rows [t*r, (t+1)*r) feed child t.
  for (int level = 2; level <= L - 1; ++level) {
    Layer& lay = net.interp_level[level - 2];
    const std::int64_t nch = std::int64_t(1) << d;
    const std::int64_t per_pos = r * (nch * r);
    for (std::int64_t b = 0; b < t.num_boxes(level); ++b) {
      const auto kids = t.children(level, b);
      for (std::int64_t tt = 0; tt < nch; ++tt) {
        const Eigen::MatrixXd& blk = h2.B[level - 2][kids[tt]];
        for (std::int64_t c = 0; c < r; ++c)
          for (std::int64_t row = 0; row < r; ++row)
            lay.W[(tt * r + row) + nch * r * c + per_pos * b] = blk(row, c);
      }
    }
  }

  // Final interpolation <- U: output channel = leaf-local point index.
  {
    Layer& lay = net.interp_final;
    const std::int64_t per_pos = r * leaf_ch;
    for (std::int64_t b = 0; b < t.num_boxes(L); ++b)
      for (std::int64_t c = 0; c < r; ++c)
        for (std::int64_t local = 0; local < leaf_ch; ++local)
          lay.W[local + leaf_ch * c + per_pos * b] = h2.U[b](local, c);
  }

  return net;
}

// ---------------------------------------------------------------------------
// Plain CNN baseline
// ---------------------------------------------------------------------------

template <class Real>
PlainCnnT<Real> build_plain_cnn(int interior, int channels, std::int64_t window, std::int64_t N,
                                std::uint64_t seed, Activation act) {
  check(interior >= 0 && channels >= 1 && N >= 1, "plain cnn: bad geometry");
  if (window % 2 == 0) throw shape_error("plain cnn: window must be odd");
  PlainCnnT<Real> net;
  net.N = N;
  RngStream rng(seed, 0x636e6e);
  auto push = [&](std::int64_t a, std::int64_t ap, Activation phi) {
    net.layers.emplace_back(
        kernel_spec(1, {N, N}, a, ap, window, phi, Sharing::conv, PadMode::periodic));
    net.layers.back().init_normal(rng, 0.02);
  };
  push(1, channels, act);
  for (int i = 0; i < interior; ++i) push(channels, channels, act);
  push(channels, 1, Activation::linear);
  return net;
}

template <class Real>
TensorT<Real> PlainCnnT<Real>::forward(const TensorT<Real>& v) const {
  Workspace ws;
  return forward(v, ws);
}

template <class Real>
TensorT<Real> PlainCnnT<Real>::forward(const TensorT<Real>& v, Workspace& ws) const {
  ws.cache.resize(layers.size());
  TensorT<Real> x = v;
  for (std::size_t i = 0; i < layers.size(); ++i) x = layers[i].forward(x, ws.cache[i]);
  return x;
}

template <class Real>
TensorT<Real> PlainCnnT<Real>::backward(const Workspace& ws, const TensorT<Real>& grad_u,
                                        GradsT<Real>& grads) const {
  TensorT<Real> g = grad_u;
  for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i)
    g = layers[i].backward(ws.cache[i], g, grads.w[i], grads.b[i]);
  return g;
}

template <class Real>
void PlainCnnT<Real>::init_grads(GradsT<Real>& grads) const {
  grads.w.resize(layers.size());
  grads.b.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    grads.w[i].assign(layers[i].W.size(), Real(0));
    grads.b[i].assign(layers[i].b.size(), Real(0));
  }
}

template <class Real>
std::int64_t PlainCnnT<Real>::count_params(bool include_bias) const {
  std::int64_t n = 0;
  for (const auto& l : layers) n += param_count(l.spec, include_bias);
  return n;
}

template struct NetworkT<float>;
template struct NetworkT<double>;
template struct PlainCnnT<float>;
template struct PlainCnnT<double>;
template NetworkT<float> build_mnn_h2<float>(const NetworkConfig&, std::uint64_t);
template NetworkT<double> build_mnn_h2<double>(const NetworkConfig&, std::uint64_t);
template PlainCnnT<float> build_plain_cnn<float>(int, int, std::int64_t, std::int64_t,
                                                 std::uint64_t, Activation);
template PlainCnnT<double> build_plain_cnn<double>(int, int, std::int64_t, std::int64_t,
                                                   std::uint64_t, Activation);

}  // namespace mnnh2
