#pragma once

// Distance-type phase functions phi(x, y) with analytic derivatives, the bordered
// Monge-Ampere determinant and smooth cutoffs away from the forbidden set.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pinlab/fractal.hpp"

namespace pinlab {

enum class PhaseKind { euclidean, scaled_euclidean, dot_product, flat_torus, sphere_geodesic_chart };

struct PhaseFunction {
  PhaseKind kind = PhaseKind::euclidean;
  int dim = 2;
  double factor = 1.0;      // scaled_euclidean: phi = |x - factor * y|
  double chart_scale = 1.0; // sphere chart: v = chart_scale * (u - 1/2)
  double cap_radius = 1.0;  // sphere chart: |v| must not exceed this

  static PhaseFunction euclidean(int dim);
  static PhaseFunction scaled_euclidean(int dim, double factor);
  static PhaseFunction dot_product(int dim);
  static PhaseFunction flat_torus(int dim);
  static PhaseFunction sphere_geodesic_chart(int dim, double chart_scale = 1.0, double cap_radius = 1.0);

  /// Parses "euclidean", "scaled_euclidean:3", "dot_product", "flat_torus",
  /// "sphere_geodesic_chart:scale:cap".
  static PhaseFunction parse(const std::string& spec, int dim);
  std::string name() const;

  double value(std::span<const double> x, std::span<const double> y) const;
};

struct PhaseEval {
  double value = 0.0;
  std::vector<double> grad_x;
  std::vector<double> grad_y;
  std::vector<double> mixed_hessian;  // row-major, entry (i, j) = d^2 phi / dx_i dy_j
  bool forbidden = false;
};

inline constexpr double kForbiddenTolerance = 1e-12;

PhaseEval evaluate(const PhaseFunction& phi, std::span<const double> x, std::span<const double> y);

/// Distance-like gap to the forbidden set: 0 exactly on it, comparable to the
/// Euclidean distance from (x, y) to it nearby.
double forbidden_gap(const PhaseFunction& phi, std::span<const double> x, std::span<const double> y);

bool forbidden_indicator(const PhaseFunction& phi, std::span<const double> x, std::span<const double> y,
                         double tolerance = kForbiddenTolerance);

/// det [[0, grad_x], [-grad_y^T, H]] with H(i, j) = d^2 phi / dy_i dx_j.
double monge_ampere_det(const PhaseFunction& phi, std::span<const double> x, std::span<const double> y);

/// The same determinant assembled from centered finite differences of value().
/// With richardson set, the h and h/2 estimates are extrapolated.
double monge_ampere_det_fd(const PhaseFunction& phi, std::span<const double> x, std::span<const double> y,
                           double h = 1e-4, bool richardson = false);

struct FiniteDifferences {
  std::vector<double> grad_x;
  std::vector<double> grad_y;
  std::vector<double> mixed_hessian;
};

FiniteDifferences finite_differences(const PhaseFunction& phi, std::span<const double> x,
                                     std::span<const double> y, double h = 1e-4, bool richardson = false);

struct NondegeneracyReport {
  double forbidden_mass_estimate = 0.0;
  double min_grad_norm = 0.0;
  double min_ma_det_abs = 0.0;
  std::size_t pairs = 0;
};

/// Monte Carlo over mu x mu pairs. Pairs are drawn by sample_point, so cell_uniform
/// measures never produce coincident points while explicit atoms can.
NondegeneracyReport nondegeneracy_scan(const PhaseFunction& phi, const FrostmanMeasure& mu,
                                       std::size_t pair_count, double tolerance, std::uint64_t seed);

/// 0 for u <= 0, 1 for u >= 1, 6u^5 - 15u^4 + 10u^3 between.
double smoothstep(double u);

struct CutoffPair {
  PhaseFunction phase;
  double neighborhood_radius = 0.05;
  double t_lo = 0.0;
  double t_hi = 1.0;
  double ramp = 0.1;

  double psi(std::span<const double> x, std::span<const double> y) const;
  double beta(double t) const;
  double beta_support_lo() const { return t_lo - ramp; }
  double beta_support_hi() const { return t_hi + ramp; }
};

/// psi ramps from 0 at gap = radius to 1 at gap = 2 radius; beta is 1 on
/// [t_lo, t_hi] and vanishes outside [t_lo - ramp, t_hi + ramp]. A nonpositive
/// ramp defaults to a tenth of the plateau width.
CutoffPair build_cutoffs(const PhaseFunction& phi, double neighborhood_radius, double t_lo, double t_hi,
                         double ramp = -1.0);

using PairWeight = std::function<double(std::span<const double>, std::span<const double>)>;

/// psi == 1 everywhere.
PairWeight unit_cutoff();
PairWeight psi_of(const CutoffPair& cutoffs);

}  // namespace pinlab
