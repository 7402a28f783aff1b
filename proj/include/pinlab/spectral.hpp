#pragma once

// FFT checks on the periodic grid of [0,1)^d: Littlewood-Paley partition, surface
// measure decay, the energy identity, Schur sums, generalized Radon transforms and
// the oscillatory integral G.

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "pinlab/fractal.hpp"
#include "pinlab/phase.hpp"

namespace pinlab {

using Complex = std::complex<double>;

struct SpectralGrid {
  int dim = 2;
  int side_n = 0;
  std::vector<Complex> values;  // row-major, node i / side_n along each axis

  static SpectralGrid zeros(int dim, int side_n);
  std::size_t size() const { return values.size(); }
  double spacing() const { return 1.0 / side_n; }
};

/// Signed integer frequency of FFT index i on a side_n grid.
int frequency(int side_n, int i);
/// |q| for flat index i.
double frequency_norm(const SpectralGrid& g, std::size_t flat);

/// Unnormalized forward DFT (sign -1) in place.
void fft_forward(SpectralGrid& g);
/// Inverse DFT in place, scaled by side_n^-d so it undoes fft_forward.
void fft_inverse(SpectralGrid& g);

double l2_norm_squared(const SpectralGrid& g);

/// chi = 1 on [0, 1], 0 on [2, inf), C-infinity in between.
double lp_cutoff(double r);

struct LPPartition {
  int j_max = 0;
  double alpha0(double r) const { return lp_cutoff(r); }
  double alpha(double r) const { return lp_cutoff(r) - lp_cutoff(2.0 * r); }
  /// Multiplier of band j at frequency radius r.
  double band(int j, double r) const;
  /// alpha0(r) + sum_{j=1..j_max} alpha(2^-j r).
  double partition_sum(double r) const;
};

LPPartition make_lp_partition(int j_max);

SpectralGrid lp_project(const SpectralGrid& g, const LPPartition& p, int j);

struct DecayReport {
  double slope = 0.0;
  double sigma_hat_zero = 0.0;
  std::vector<double> shell_lo;   // shell [k, 2k)
  std::vector<double> shell_max;  // max |sigma_hat| on the shell
  bool flagged = false;           // resolution below the documented minimum
};

/// Unit-mass sphere of radius `radius` centered in the cube, rasterized with a hat
/// profile two cells wide. Shells [k, 2k) for k = shell_lo, 2 shell_lo, ... below side_n / 4.
DecayReport surface_measure_decay(int dim, int side_n, double radius = 0.25, int shell_lo = 8);

enum class ShellVerdict { converging, growing, undecided };

struct EnergyReport {
  double fourier_value = 0.0;
  double kernel_value = 0.0;
  std::vector<double> shell_radius;   // partial sums over 0 < |q| < radius
  std::vector<double> shell_partial;
  ShellVerdict verdict = ShellVerdict::undecided;
  double last_two_ratio = 0.0;
  double last_first_ratio = 0.0;
};

/// pi^(gamma - d/2) Gamma((d - gamma)/2) / Gamma(gamma/2).
double energy_constant(double gamma, int dim);

/// Converging if the last two partial sums differ by at most 5%, growing if the
/// last is at least twice the first (and not converging).
ShellVerdict classify_shells(std::span<const double> partial);

/// Both sides of the energy identity for g == 1 on lambda. Atoms are deposited on
/// the side_n grid by cloud-in-cell (exact for atoms on nodes); cell_uniform atoms
/// carry the transform of their cell. The kernel side skips i == j, adding the
/// exact self-energy of each cell for cell_uniform measures (d <= 2).
EnergyReport energy_integral(const FrostmanMeasure& lambda, double gamma, int side_n);

struct SchurReport {
  double sup_direct = 0.0;
  double sup_majorant = 0.0;
  std::vector<double> direct;    // per atom
  std::vector<double> majorant;  // per atom
  double scale = 1.0;            // positions were divided by this diameter
};

/// Direct sums sum_{y != x} w(y) |x - y|^(gamma - d) and their dyadic majorants
/// sum_j 2^((j+1)(d - gamma)) lambda(B(x, 2^-j) \ {x}).
SchurReport schur_kernel_sup(const FrostmanMeasure& lambda, double gamma);

/// T f(x) = h^d sum_y rho_eps(t - phi(x, y)) f(y) psi(x, y) over grid nodes y.
/// Euclidean and flat_torus phases use the minimal-image displacement and an offset
/// stencil; other kinds evaluate every pair. cutoffs == nullptr means psi == 1.
/// Requires eps >= 2 / side_n.
SpectralGrid radon_apply(const PhaseFunction& phi, const CutoffPair* cutoffs, double eps, double t,
                         const SpectralGrid& f);

/// ||g||_{H^gamma} = sqrt(sum_q |g_hat(q)|^2 (1 + |q|^2)^gamma), g_hat(q) = h^d sum_x g(x) e(-q.x).
double sobolev_norm(const SpectralGrid& g, double gamma);

struct RadonRatioRow {
  double eps = 0.0;
  std::size_t field = 0;
  double ratio = 0.0;
};

struct RadonRatioReport {
  std::vector<RadonRatioRow> rows;
  std::vector<double> max_over_min;  // per field, across eps
  double worst = 0.0;
};

RadonRatioReport radon_sobolev_ratio(const PhaseFunction& phi, const CutoffPair* cutoffs, double t,
                                     std::span<const double> eps_list, std::span<const SpectralGrid> fields,
                                     double gamma);

/// Real fields with Gaussian Fourier coefficients on 0 < |q| <= max_freq.
std::vector<SpectralGrid> band_limited_fields(int dim, int side_n, std::size_t count, double max_freq,
                                              std::uint64_t seed);

struct GDomain {
  std::vector<double> x_lo{0.25, 0.25}, x_hi{0.5, 0.5};
  std::vector<double> y_lo{0.5, 0.5}, y_hi{0.75, 0.75};
};

struct GResult {
  Complex value;
  bool unresolved = false;  // |xi| or |zeta| times the box side exceeds quad_n / 4
};

/// Smooth bump on the x box times bump on the y box, as used inside G.
double g_bump(const GDomain& dom, std::span<const double> x, std::span<const double> y);

/// Midpoint rule for iint exp(2 pi i ((phi - t) s + y.zeta - x.xi)) bump(x, y) psi(x, y).
/// d = 2 only. psi == nullptr means 1.
GResult oscillatory_G(const PhaseFunction& phi, const PairWeight& psi, double s, std::span<const double> xi,
                      std::span<const double> zeta, double t, int quad_n, const GDomain& dom = {});

}  // namespace pinlab
