#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mnnh2/tensor.hpp"
#include "mnnh2/train.hpp"

namespace mnnh2 {

enum class Problem { nlse, rte, ks };

/// Sum of Gaussian bumps, optionally periodized over images |j| <= 3 (the
/// widths in play put further images below 1e-30).
struct GaussianMixture {
  std::vector<double> rho;
  std::vector<double> center;
  double variance = 1e-3;   // T, or sigma^2 for well potentials
  double amplitude = 1.0;   // common prefactor, e.g. 1/sqrt(2 pi T)
  double sign = 1.0;
  bool periodized = false;
  double period = 1.0;

  double eval(double x) const;
};

struct ProblemSpec {
  Problem problem = Problem::nlse;
  std::int64_t N = 80;
  int n_g = 2;            // bumps in the NLSE/RTE input fields
  int n_e = 2;            // electrons = wells for the Kohn-Sham map
  double beta = 10.0;     // NLSE nonlinearity
  double mu_a = 0.2;      // RTE constant absorption, mu_t = mu_s + mu_a
  double source_f = 1.0;  // RTE source
  double ks_sigma = 0.05;

  // Solver knobs.
  double nlse_tau = 0.01;
  double nlse_tol = 1e-10;
  std::int64_t nlse_max_steps = 500000;
  int rte_path_nodes = 16;  // trapezoid intervals along the optical path

  double domain_lo() const { return problem == Problem::ks ? -1.0 : 0.0; }
  double domain_len() const { return problem == Problem::ks ? 2.0 : 1.0; }
  /// NLSE/KS sample at nodes, RTE at cell midpoints.
  double grid_point(std::int64_t k) const {
    const double h = domain_len() / static_cast<double>(N);
    return domain_lo() + (problem == Problem::rte ? (k + 0.5) * h : k * h);
  }
  void validate() const;
};

/// Exponential integral Ei(x) for x < 0: power series near zero, continued
/// fraction for large |x|; 10+ significant digits over the range in use.
double exp_integral_ei(double x);

/// Periodic pseudo-spectral second-derivative matrix on n points over a
/// domain of length `len` (n even). Dense, symmetric, circulant.
Eigen::MatrixXd fourier_second_derivative(std::int64_t n, double len);

/// Draws the per-problem random input field parameters.
GaussianMixture sample_mixture(const ProblemSpec& spec, RngStream& rng);

/// Grid samples of a freshly drawn input field.
Tensor sample_potential(const ProblemSpec& spec, std::uint64_t seed);

struct NlseResult {
  Tensor u;
  double energy = 0.0;    // discrete Rayleigh quotient E
  double residual = 0.0;  // ||-Lap u + V u + beta u^3 - E u||_L2
  std::int64_t steps = 0;
};

/// Ground state by semi-implicit normalized gradient flow: diffusion handled
/// spectrally/implicitly, potential and nonlinearity explicit, L2
/// renormalization each step, sign fixed by a positive mean.
NlseResult solve_nlse(const Tensor& V, const ProblemSpec& spec);

struct RteResult {
  Tensor u;
  double solve_residual = 0.0;
};

/// Nystrom matrix of the slab kernel on the midpoint grid (quadrature weight
/// included): entry (i, j) integrates (1/2) E1(optical depth) over cell j.
Eigen::MatrixXd rte_kernel_matrix(const Tensor& mu_s, const ProblemSpec& spec);

/// Nystrom discretization of the slab-geometry integral form on the midpoint
/// grid. The optical path is a trapezoid sum along the segment; the
/// log-singular diagonal is integrated analytically over one cell.
RteResult solve_rte_1d(const Tensor& mu_s, const ProblemSpec& spec);

struct KsResult {
  Tensor rho;
  std::vector<double> eigenvalues;  // lowest n_e + 1
  double max_residual = 0.0;        // max_i ||H psi_i - eps_i psi_i||
  double gap = 0.0;                 // eps_{n_e+1} - eps_{n_e}
};

struct degenerate_gap_error : numeric_error {
  using numeric_error::numeric_error;
};

/// Electron density of the lowest n_e states of -1/2 Lap + V on the periodic
/// grid, normalized so the trapezoid quadrature of rho equals n_e. Throws
/// degenerate_gap_error when eps_{n_e} and eps_{n_e+1} coincide within 1e-10.
KsResult solve_ks(const Tensor& V, const ProblemSpec& spec);

/// count independent (v, u) pairs; per-sample seed streams make generation
/// order- and thread-independent. Degenerate Kohn-Sham draws are redrawn.
Dataset generate_dataset(const ProblemSpec& spec, std::int64_t count, std::uint64_t seed,
                         int threads = 1, std::vector<double>* residuals = nullptr);

}  // namespace mnnh2
