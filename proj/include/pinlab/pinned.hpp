#pragma once

// Mollified pinned measures nu_x * rho_eps, chain measures nu_x^(k) * rho_eps and
// the quantities built from them: masses, L^2 energies, Cauchy-Schwarz bounds.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pinlab/fractal.hpp"
#include "pinlab/phase.hpp"

namespace pinlab {

/// rho_eps(u) = eps^-1 profile(u / eps), profile(u) = c exp(-1 / (1 - (u/2)^2)) on (-2, 2).
struct Mollifier {
  static constexpr double kProfileConstant = 1.1261418105217924;

  double epsilon = 0.0;

  explicit Mollifier(double eps);
  static double profile(double u);
  /// Integral of profile^2, by quadrature.
  static double profile_l2_squared();
  double operator()(double u) const { return profile(u / epsilon) / epsilon; }
  double support_radius() const { return 2.0 * epsilon; }
};

struct TGrid {
  double t_min = 0.0;
  double dt = 0.0;
  std::size_t count = 0;

  double node(std::size_t i) const { return t_min + static_cast<double>(i) * dt; }
  double t_max() const { return node(count - 1); }
  /// Trapezoid weight of node i.
  double weight(std::size_t i) const { return (i == 0 || i + 1 == count) ? 0.5 * dt : dt; }
  bool operator==(const TGrid& o) const { return t_min == o.t_min && dt == o.dt && count == o.count; }
};

TGrid make_t_grid(double t_min, double t_max, double dt);

/// Covers phi(pin, supp mu) for every pin, padded by 4 eps, with step eps / 16.
TGrid default_t_grid(const FrostmanMeasure& mu, const PhaseFunction& phi, std::span<const double> pins,
                     double eps);

struct PinnedDensity {
  std::vector<double> pin;
  double epsilon = 0.0;
  TGrid grid;
  std::vector<double> values;
  std::vector<double> stderr_values;  // zero in exact mode
  std::size_t mc_samples = 0;
};

/// mc_samples == 0 sums over the atoms of mu; otherwise mu is sampled.
PinnedDensity pinned_density(const FrostmanMeasure& mu, const PhaseFunction& phi, std::span<const double> pin,
                             const Mollifier& rho, const TGrid& grid, std::size_t mc_samples = 0,
                             std::uint64_t seed = 0);

struct ChainDensity {
  std::vector<double> pin;
  int k = 1;
  double epsilon = 0.0;
  TGrid grid;  // same grid along every axis
  std::vector<double> values;  // row-major, t_1 slowest
  std::vector<double> stderr_values;
  std::size_t mc_samples = 0;

  std::size_t node_count() const { return values.size(); }
  /// Cell volume weight for flat index i (product of trapezoid weights).
  double weight(std::size_t flat) const;
};

inline constexpr std::size_t kChainGridBudget = std::size_t{1} << 24;

ChainDensity chain_density(const FrostmanMeasure& mu, const PhaseFunction& phi, std::span<const double> pin,
                           int k, const Mollifier& rho, const TGrid& grid, std::size_t mc_samples = 0,
                           std::uint64_t seed = 0, const PairWeight& psi = nullptr);

struct Estimate {
  double value = 0.0;
  double stderr_value = 0.0;
};

/// Nested operator evaluation at one t in R^k. Exact mode runs the recursion on the
/// atoms of mu; Monte Carlo mode runs it on eight independent empirical measures of
/// mc_samples / 8 draws each and reports their mean and standard error.
Estimate composed_operator_density(const FrostmanMeasure& mu, const PhaseFunction& phi,
                                   std::span<const double> pin, int k, const Mollifier& rho,
                                   std::span<const double> t, std::size_t mc_samples = 0,
                                   std::uint64_t seed = 0, const PairWeight& psi = nullptr);

/// Trapezoid mass. Throws CoverageError if a boundary node exceeds 1e-9.
double density_mass(const PinnedDensity& nu);
double density_mass(const ChainDensity& nu);

using TWeight = std::function<double(double)>;

/// sum_x w(x) sum_t beta(t) nu_x(t)^2 dt. A null beta means beta == 1.
double l2_energy(std::span<const double> pin_weights, std::span<const PinnedDensity> densities,
                 const TWeight& beta = nullptr);

struct CsBound {
  double value = 0.0;
  bool infinite = false;
};

/// (int beta nu)^2 / int beta nu^2. Requires the plain mass within 5% of 1.
CsBound cs_lower_bound(const PinnedDensity& nu, const TWeight& beta = nullptr);

/// Total trapezoid weight of nodes whose value exceeds threshold.
double support_measure(const PinnedDensity& nu, double threshold = 0.0);

struct GriddedDensity {
  int dim = 0;
  int side_n = 0;
  std::vector<double> values;  // density at nodes i / side_n, row-major
  double cell_volume() const;
  double mass() const;
  double node(std::size_t i) const { return static_cast<double>(i) / side_n; }
};

/// Tensor-mollified mu on the periodic grid of [0,1)^d. Each atom's per-axis
/// weights are normalized on the grid so the mass is exact.
GriddedDensity measure_mollify(const FrostmanMeasure& mu, double theta, int side_n);

}  // namespace pinlab
