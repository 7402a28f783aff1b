#pragma once

// Experiment configuration and the threshold-sweep / exceptional-pin probes.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pinlab/fractal.hpp"
#include "pinlab/phase.hpp"
#include "pinlab/pinned.hpp"

namespace pinlab {

/// Flat key = value file, one key per line, '#' starts a comment. Numbers accept
/// the dyadic shorthand "2^-4"; lists are comma separated.
struct ExperimentConfig {
  std::string phase = "euclidean";
  int dim = 2;

  std::string family = "product_cantor";  // product_cantor | subdivision | lebesgue | circle | segment
  std::vector<double> target_dims{1.6};
  double ratio = 0.0;                     // product_cantor; 0 derives it from the target dimension
  int base = 2;
  int keep = 3;
  int level = 6;
  Representation representation = Representation::cell_atoms;
  int per_axis = 64;                      // lebesgue
  double box_lo = 0.0, box_hi = 1.0;      // lebesgue
  double circle_radius = 0.25;
  std::size_t circle_count = 1024;        // circle, segment (segment runs box_lo..box_hi at height 1/2)

  std::size_t pins = 100;
  std::string pin_source = "mu";          // mu | point
  std::vector<double> pin_point;

  std::vector<double> eps{0.125, 0.0625, 0.03125, 0.015625, 0.0078125};
  double dt_divisor = 16.0;               // t grid step = eps / dt_divisor
  std::size_t mc_samples = 0;

  double neighborhood_radius = 0.05;
  std::vector<double> beta_range;         // plateau [lo, hi] of beta; empty means beta == 1

  int k = 2;
  std::vector<double> t{0.5};
  int vertices = 3;
  std::string edges = "1-2,2-3";
  int pin_vertex = 0;                     // 0: count the unpinned configuration

  std::string check = "all";              // fourier: lp | surface | energy | schur | radon | oscillatory | all
  int side_n = 256;
  double gamma = 1.2;
  int quad_n = 48;                        // oscillatory integral

  double flag_floor = 0.05;
  double stable_tol = 0.2;
  double shrink_tol = 0.3;
  double regression_rtol = 1e-9;

  std::optional<std::uint64_t> seed;
  std::string out = "out";

  /// Every key with its resolved value, in a fixed order.
  std::map<std::string, std::string> resolved() const;
};

/// Throws ConfigError on unknown keys, malformed values or a missing file.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);

/// "2^-4", "0.25", "1e-3", "3/4".
double parse_number(const std::string& text);
std::vector<double> parse_number_list(const std::string& text);
std::vector<std::pair<int, int>> parse_edges(const std::string& text);

struct BuiltMeasure {
  FrostmanMeasure measure;
  std::optional<CellFractal> fractal;
};

BuiltMeasure build_measure(const ExperimentConfig& cfg, double target_dim);

/// Flat pin coordinates: `pins` atoms drawn from mu, or pin_point repeated.
std::vector<double> draw_pins(const ExperimentConfig& cfg, const FrostmanMeasure& mu, std::uint64_t seed);

/// default_t_grid over all pins, re-stepped to eps / cfg.dt_divisor.
TGrid experiment_t_grid(const ExperimentConfig& cfg, const FrostmanMeasure& mu, const PhaseFunction& phi,
                        std::span<const double> pins, double eps);

enum class Verdict { stable, shrinking, inconclusive };
const char* verdict_name(Verdict v);

/// Trajectory ordered from coarse to fine eps. STABLE if each of the final two
/// steps (the single step when there are two values) changes by at most stable_tol
/// relative; SHRINKING if every step decreases by at least shrink_tol.
Verdict verdict_from_trajectory(std::span<const double> trajectory, double stable_tol = 0.2,
                                double shrink_tol = 0.3);

struct SweepRow {
  double target_dim = 0.0;
  std::size_t pin = 0;
  double eps = 0.0;
  double density_mass = 0.0;
  double cs_lower_bound = 0.0;
  double support_measure = 0.0;
  double l2_energy = 0.0;
  std::string error;  // nonempty if the cell failed
};

struct SweepSummary {
  double target_dim = 0.0;
  std::vector<double> eps;
  std::vector<double> median_cs;       // per eps, median over pins
  std::vector<double> median_support;  // per eps
  std::vector<double> hinge;           // integrated hinge count per eps, lambda = pins
  Verdict verdict = Verdict::inconclusive;
  double exceptional_bound = 0.0;      // d + 1 - target_dim
  bool above_threshold = false;        // target_dim > (d + 1) / 2
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<SweepSummary> summaries;
  double threshold = 0.0;
};

SweepReport sweep_threshold(const ExperimentConfig& cfg, std::uint64_t seed);

/// Re-derives per-dimension median trajectories and verdicts from rows alone.
std::vector<SweepSummary> summarize_rows(std::span<const SweepRow> rows, int dim, double stable_tol,
                                         double shrink_tol);

struct ProbeLevel {
  double eps = 0.0;
  double flagged_fraction = 0.0;  // among pins whose cell evaluated
  std::size_t failed = 0;
  std::vector<double> sorted_cs;       // empirical CDF of the lower bounds
  std::vector<double> sorted_support;  // empirical CDF of support_measure
};

struct ProbeReport {
  double target_dim = 0.0;
  double floor = 0.0;
  std::size_t pins = 0;
  std::vector<ProbeLevel> levels;
  std::size_t persistent = 0;  // pins flagged at every eps
};

/// A pin is flagged when its Cauchy-Schwarz lower bound is below cfg.flag_floor.
ProbeReport exceptional_probe(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace pinlab
