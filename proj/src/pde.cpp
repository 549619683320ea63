#include "mnnh2/pde.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>

namespace mnnh2 {

void ProblemSpec::validate() const {
  check(N >= 4 && N % 2 == 0, "problem: N must be even and >= 4");
  check(n_g >= 1 && n_e >= 1, "problem: n_g and n_e must be positive");
  check(ks_sigma > 0.0, "problem: sigma must be positive");
  check(mu_a >= 0.0, "problem: absorption must be non-negative");
}

double GaussianMixture::eval(double x) const {
  double acc = 0.0;
  const int jmax = periodized ? 3 : 0;
  for (std::size_t i = 0; i < rho.size(); ++i)
    for (int j = -jmax; j <= jmax; ++j) {
      const double dx = x - center[i] - static_cast<double>(j) * period;
      acc += rho[i] * std::exp(-dx * dx / (2.0 * variance));
    }
  return sign * amplitude * acc;
}

// ---------------------------------------------------------------------------
// Exponential integral
// ---------------------------------------------------------------------------
double exp_integral_ei(double x) {
  if (!(x < 0.0)) throw numeric_error("exp_integral_ei: requires x < 0");
  const double ax = -x;
  if (ax <= 6.0) {
    // Ei(x) = gamma + ln|x| + sum x^k / (k k!)
    const double euler_gamma = 0.57721566490153286060651209;
    double sum = 0.0, term = 1.0;
    for (int k = 1; k <= 120; ++k) {
      term *= x / static_cast<double>(k);
      const double contrib = term / static_cast<double>(k);
      sum += contrib;
      if (std::abs(contrib) < 1e-18 * (std::abs(sum) + 1e-300)) break;
    }
    return euler_gamma + std::log(ax) + sum;
  }
  // Ei(x) = -E1(-x); modified Lentz continued fraction for E1.
  const double tiny = 1e-300;
  double b = ax + 1.0;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double f = d;
  for (int k = 1; k <= 200; ++k) {
    const double a = -static_cast<double>(k) * static_cast<double>(k);
    b += 2.0;
    d = a * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + a / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return -std::exp(-ax) * f;
}

// ---------------------------------------------------------------------------
// Spectral differentiation
// ---------------------------------------------------------------------------
Eigen::MatrixXd fourier_second_derivative(std::int64_t n, double len) {
  check(n >= 2 && n % 2 == 0, "fourier_second_derivative: n must be even");
  const double pi = 3.14159265358979323846264338327950288;
  const double h = 2.0 * pi / static_cast<double>(n);
  const double scale = (2.0 * pi / len) * (2.0 * pi / len);
  Eigen::MatrixXd D2(n, n);
  std::vector<double> col(n);
  col[0] = -pi * pi / (3.0 * h * h) - 1.0 / 6.0;
  for (std::int64_t k = 1; k < n; ++k) {
    const double s = std::sin(static_cast<double>(k) * h / 2.0);
    col[k] = -std::pow(-1.0, static_cast<double>(k)) / (2.0 * s * s);
  }
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) D2(i, j) = scale * col[(i - j + n) % n];
  return D2;
}

// ---------------------------------------------------------------------------
// Input field sampling
// ---------------------------------------------------------------------------
GaussianMixture sample_mixture(const ProblemSpec& spec, RngStream& rng) {
  GaussianMixture mix;
  switch (spec.problem) {
    case Problem::nlse: {
      mix.rho.resize(spec.n_g);
      mix.center.resize(spec.n_g);
      for (auto& r : mix.rho) r = rng.uniform(1.0, 4.0);
      for (auto& c : mix.center) c = rng.uniform(0.0, 1.0);
      mix.variance = rng.uniform(2e-3, 4e-3);
      mix.amplitude = 1.0 / std::sqrt(2.0 * 3.14159265358979323846 * mix.variance);
      mix.sign = -1.0;
      mix.periodized = true;
      mix.period = 1.0;
      break;
    }
    case Problem::rte: {
      mix.rho.resize(spec.n_g);
      mix.center.resize(spec.n_g);
      for (auto& r : mix.rho) r = rng.uniform(0.1, 0.3);
      for (auto& c : mix.center) c = rng.uniform(0.2, 0.8);
      mix.variance = rng.uniform(2e-3, 4e-3);
      mix.amplitude = 1.0 / std::sqrt(2.0 * 3.14159265358979323846 * mix.variance);
      mix.sign = 1.0;
      mix.periodized = false;
      break;
    }
    case Problem::ks: {
      mix.rho.resize(spec.n_e);
      mix.center.resize(spec.n_e);
      for (auto& r : mix.rho) r = rng.uniform(0.8, 1.2);
      // Wells pairwise separated by > 2 sigma in the periodic metric.
      const double sep = 2.0 * spec.ks_sigma;
      for (int i = 0; i < spec.n_e; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
          const double c = rng.uniform(-1.0, 1.0);
          placed = true;
          for (int j = 0; j < i; ++j) {
            double dx = std::abs(c - mix.center[j]);
            dx = std::min(dx, 2.0 - dx);
            if (dx <= sep) {
              placed = false;
              break;
            }
          }
          if (placed) mix.center[i] = c;
        }
        if (!placed)
          throw numeric_error("sample_mixture: well placement failed after 10000 attempts");
      }
      mix.variance = spec.ks_sigma * spec.ks_sigma;
      mix.amplitude = 1.0;
      mix.sign = -1.0;
      mix.periodized = true;
      mix.period = 2.0;
      break;
    }
  }
  return mix;
}

namespace {

Tensor grid_samples(const GaussianMixture& mix, const ProblemSpec& spec) {
  Tensor out({1, spec.N});
  for (std::int64_t k = 0; k < spec.N; ++k) out.data[k] = mix.eval(spec.grid_point(k));
  return out;
}

}  // namespace

Tensor sample_potential(const ProblemSpec& spec, std::uint64_t seed) {
  spec.validate();
  RngStream rng(seed, 0x706f74);
  const GaussianMixture mix = sample_mixture(spec, rng);
  return grid_samples(mix, spec);
}

// ---------------------------------------------------------------------------
// NLSE ground state
// ---------------------------------------------------------------------------
NlseResult solve_nlse(const Tensor& V, const ProblemSpec& spec) {
  const std::int64_t n = spec.N;
  check(V.numel() == n, "solve_nlse: potential size mismatch");
  const double h = 1.0 / static_cast<double>(n);
  const double tau = spec.nlse_tau;
  const double beta = spec.beta;

  const Eigen::MatrixXd K = -fourier_second_derivative(n, 1.0);

  Eigen::Map<const Eigen::VectorXd> v(V.data.data(), n);
  Eigen::VectorXd u = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd unew(n);
  Eigen::MatrixXd A(n, n);

  // Backward-Euler flow with the potential and the lagged nonlinear
  // coefficient inside the implicit solve; its fixed points solve the
  // discrete eigenproblem exactly, so the residual is set by the stopping
  // tolerance rather than by tau.
  std::int64_t step = 0;
  double diff = 1.0;
  for (; step < spec.nlse_max_steps; ++step) {
    A = tau * K;
    for (std::int64_t i = 0; i < n; ++i)
      A(i, i) += 1.0 + tau * (v[i] + beta * u[i] * u[i]);
    unew = A.llt().solve(u);
    const double norm = std::sqrt(h * unew.squaredNorm());
    unew /= norm;
    diff = (unew - u).cwiseAbs().maxCoeff();
    u = unew;
    if (diff < spec.nlse_tol) break;
  }
  if (diff >= spec.nlse_tol)
    throw numeric_error("solve_nlse: gradient flow failed to converge, last step change " +
                        std::to_string(diff));
  if (h * u.sum() < 0.0) u = -u;

  const Eigen::VectorXd Ku = K * u;
  const double energy =
      h * (u.dot(Ku) + v.dot(u.array().square().matrix()) + beta * u.array().pow(4).sum());
  const Eigen::VectorXd res =
      Ku + v.cwiseProduct(u) + beta * u.array().cube().matrix() - energy * u;
  NlseResult out;
  out.u = Tensor({1, n}, std::vector<double>(u.data(), u.data() + n));
  out.energy = energy;
  out.residual = std::sqrt(h * res.squaredNorm());
  out.steps = step + 1;
  return out;
}

// ---------------------------------------------------------------------------
// RTE slab geometry
// ---------------------------------------------------------------------------
namespace {

// Piecewise-linear interpolation of midpoint-grid samples.
double interp_midpoint(const Tensor& f, std::int64_t n, double x) {
  const double h = 1.0 / static_cast<double>(n);
  const double s = x / h - 0.5;
  if (s <= 0.0) return f.data[0];
  if (s >= static_cast<double>(n - 1)) return f.data[n - 1];
  const std::int64_t k = static_cast<std::int64_t>(s);
  const double t = s - static_cast<double>(k);
  return (1.0 - t) * f.data[k] + t * f.data[k + 1];
}

}  // namespace

Eigen::MatrixXd rte_kernel_matrix(const Tensor& mu_s, const ProblemSpec& spec) {
  const std::int64_t n = spec.N;
  check(mu_s.numel() == n, "rte_kernel_matrix: coefficient size mismatch");
  const double h = 1.0 / static_cast<double>(n);
  const int nq = spec.rte_path_nodes;

  auto mu_t = [&](double x) { return interp_midpoint(mu_s, n, x) + spec.mu_a; };

  // Antiderivative of E1(a s): int_0^z E1(a s) ds = z E1(a z) + (1 - e^(-a z))/a.
  auto e1_cell = [](double a, double z) {
    return -z * exp_integral_ei(-a * z) + (1.0 - std::exp(-a * z)) / a;
  };

  Eigen::MatrixXd K(n, n);
  for (std::int64_t i = 0; i < n; ++i) {
    const double xi = spec.grid_point(i);
    for (std::int64_t j = 0; j < n; ++j) {
      if (i == j) {
        // The kernel's log singularity is integrable; collocation at y = x
        // is not. Integrate (1/2) E1(a |t|) analytically over the cell.
        K(i, j) = e1_cell(mu_t(xi), h / 2.0);
        continue;
      }
      const double yj = spec.grid_point(j);
      double path = 0.0;
      for (int q = 0; q <= nq; ++q) {
        const double s = static_cast<double>(q) / static_cast<double>(nq);
        const double wq = (q == 0 || q == nq) ? 0.5 : 1.0;
        path += wq * mu_t(xi - s * (xi - yj));
      }
      path /= static_cast<double>(nq);  // mean total absorption along the segment
      const double dist = std::abs(xi - yj);
      // Integrate the kernel over cell j with the segment-mean absorption
      // rate; near the diagonal this removes the midpoint-rule error against
      // the steep E1.
      K(i, j) = 0.5 * (e1_cell(path, dist + h / 2.0) - e1_cell(path, dist - h / 2.0));
    }
  }
  return K;
}

RteResult solve_rte_1d(const Tensor& mu_s, const ProblemSpec& spec) {
  const std::int64_t n = spec.N;
  check(mu_s.numel() == n, "solve_rte_1d: coefficient size mismatch");
  for (double v : mu_s.data)
    if (v < 0.0) throw numeric_error("solve_rte_1d: scattering coefficient must be >= 0");

  const Eigen::MatrixXd K = rte_kernel_matrix(mu_s, spec);
  const Eigen::VectorXd kf = K * Eigen::VectorXd::Constant(n, spec.source_f);
  Eigen::Map<const Eigen::VectorXd> ms(mu_s.data.data(), n);
  const Eigen::MatrixXd sys = Eigen::MatrixXd::Identity(n, n) - K * ms.asDiagonal();
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys);
  const Eigen::VectorXd u = lu.solve(kf);
  const double rel_res = (sys * u - kf).norm() / kf.norm();
  if (!std::isfinite(rel_res) || rel_res > 1e-8)
    throw numeric_error("solve_rte_1d: linear system near-singular, residual " +
                        std::to_string(rel_res));

  RteResult out;
  out.u = Tensor({1, n}, std::vector<double>(u.data(), u.data() + n));
  out.solve_residual = rel_res;
  return out;
}

// ---------------------------------------------------------------------------
// Kohn-Sham map
// ---------------------------------------------------------------------------
KsResult solve_ks(const Tensor& V, const ProblemSpec& spec) {
  const std::int64_t n = spec.N;
  const int ne = spec.n_e;
  check(V.numel() == n, "solve_ks: potential size mismatch");
  check(ne + 1 <= n, "solve_ks: n_e too large for the grid");
  const double h = 2.0 / static_cast<double>(n);

  Eigen::MatrixXd H = -0.5 * fourier_second_derivative(n, 2.0);
  for (std::int64_t i = 0; i < n; ++i) H(i, i) += V.data[i];

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
  if (eig.info() != Eigen::Success) throw numeric_error("solve_ks: eigensolver failed");

  KsResult out;
  out.gap = eig.eigenvalues()[ne] - eig.eigenvalues()[ne - 1];
  if (out.gap < 1e-10)
    throw degenerate_gap_error("solve_ks: degenerate gap " + std::to_string(out.gap) +
                               " between states " + std::to_string(ne) + " and " +
                               std::to_string(ne + 1));

  out.rho = Tensor({1, n});
  out.eigenvalues.assign(eig.eigenvalues().data(), eig.eigenvalues().data() + ne + 1);
  for (int i = 0; i < ne; ++i) {
    const Eigen::VectorXd psi = eig.eigenvectors().col(i);
    const double res = (H * psi - eig.eigenvalues()[i] * psi).norm();
    out.max_residual = std::max(out.max_residual, res);
    // Orthonormal wrt the trapezoid inner product: scale by 1/sqrt(h).
    for (std::int64_t k = 0; k < n; ++k) out.rho.data[k] += psi[k] * psi[k] / h;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------
Dataset generate_dataset(const ProblemSpec& spec, std::int64_t count, std::uint64_t seed,
                         int threads, std::vector<double>* residuals) {
  spec.validate();
  check(count >= 1, "generate_dataset: count must be >= 1");
  Dataset ds;
  ds.d = 1;
  ds.N = spec.N;
  ds.inputs.resize(count);
  ds.targets.resize(count);
  std::vector<double> res(count, 0.0);

  parallel_for(count, threads, [&](std::int64_t i) {
    RngStream rng(seed, static_cast<std::uint64_t>(i) + 1);
    try {
      switch (spec.problem) {
        case Problem::nlse: {
          const Tensor V = grid_samples(sample_mixture(spec, rng), spec);
          NlseResult r = solve_nlse(V, spec);
          if (r.residual > 1e-6)
            throw numeric_error("nlse residual " + std::to_string(r.residual) + " above 1e-6");
          ds.inputs[i] = V;
          ds.targets[i] = std::move(r.u);
          res[i] = r.residual;
          break;
        }
        case Problem::rte: {
          const Tensor ms = grid_samples(sample_mixture(spec, rng), spec);
          RteResult r = solve_rte_1d(ms, spec);
          ds.inputs[i] = ms;
          ds.targets[i] = std::move(r.u);
          res[i] = r.solve_residual;
          break;
        }
        case Problem::ks: {
          for (int attempt = 0;; ++attempt) {
            const Tensor V = grid_samples(sample_mixture(spec, rng), spec);
            try {
              KsResult r = solve_ks(V, spec);
              if (r.max_residual > 1e-10)
                throw numeric_error("ks eigenresidual " + std::to_string(r.max_residual) +
                                    " above 1e-10");
              ds.inputs[i] = V;
              ds.targets[i] = std::move(r.rho);
              res[i] = r.max_residual;
              break;
            } catch (const degenerate_gap_error&) {
              if (attempt >= 100)
                throw numeric_error("generate_dataset: persistent degenerate gap");
            }
          }
          break;
        }
      }
    } catch (const degenerate_gap_error&) {
      throw;
    } catch (const std::exception& e) {
      throw numeric_error("generate_dataset: sample " + std::to_string(i) + ": " + e.what());
    }
  });

  if (residuals) *residuals = std::move(res);
  ds.validate();
  return ds;
}

}  // namespace mnnh2
