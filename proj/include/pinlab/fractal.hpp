#pragma once

// Self-similar cell constructions of compact sets E in [0,1]^d together with their
// natural Frostman measures, plus empirical dimension estimators.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace pinlab {

inline constexpr std::size_t kDefaultCellBudget = std::size_t{1} << 22;
/// natural_measure probes every atom for its Frostman constant up to this size.
inline constexpr std::size_t kExhaustiveProbeAtoms = std::size_t{1} << 12;

/// Level-n approximation of a self-similar set. Every cell of level l is split into
/// base^d children of side ratio^(l+1); `keep` of them are retained. Child digit k
/// along an axis sits at offset k * (1 - ratio) / (base - 1) inside its parent, so
/// ratio = 1/base is the ordinary b-adic grid and base = 2 gives product Cantor sets.
struct CellFractal {
  struct Level {
    std::vector<std::int64_t> coords;   // dim entries per cell, each in [0, base^l)
    std::vector<std::uint32_t> parent;  // index into the previous level
  };

  int dim = 0;
  int base = 2;
  int level = 0;
  int keep = 1;
  double ratio = 0.5;
  double target_dim = 0.0;
  std::vector<Level> levels;  // levels[0] is the unit cube

  std::size_t cell_count(int l) const { return levels.at(l).parent.size(); }
  std::size_t size() const { return cell_count(level); }
  double cell_side(int l) const;
  void cell_corner(int l, std::size_t index, std::span<double> out) const;
  std::vector<double> cell_center(int l, std::size_t index) const;

  /// Checks nesting, the m^l cell counts and containment in [0,1]^d.
  /// Throws DomainError describing the first violation.
  void validate() const;
};

CellFractal build_product_cantor(int dim, double ratio, int level,
                                 std::size_t max_cells = kDefaultCellBudget);

CellFractal build_subdivision_fractal(int dim, int base, int keep, int level, std::uint64_t seed,
                                      std::size_t max_cells = kDefaultCellBudget);

/// Product Cantor set whose similarity dimension equals `target_dim` (0 < target <= d).
/// target_dim == d degenerates to the b = 2 keep-all partition.
CellFractal build_for_dimension(int dim, double target_dim, int level,
                                std::size_t max_cells = kDefaultCellBudget);

enum class Representation {
  cell_atoms,    // unit mass split over atoms at cell centers
  cell_uniform,  // same masses spread uniformly over each cell (cell_side wide)
};

struct FrostmanMeasure {
  int dim = 0;
  std::vector<double> points;   // dim coordinates per atom
  std::vector<double> weights;  // sums to 1
  double exponent = 0.0;        // the s of mu(B(x,r)) <= C r^s
  double frostman_constant = 1.0;
  Representation representation = Representation::cell_atoms;
  double cell_side = 0.0;

  std::size_t size() const { return weights.size(); }
  std::span<const double> point(std::size_t i) const {
    return {points.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  double total_mass() const;
};

FrostmanMeasure natural_measure(const CellFractal& fractal,
                                Representation rep = Representation::cell_atoms);

/// Explicit weighted point cloud. Weights are normalized to unit mass.
FrostmanMeasure point_cloud_measure(int dim, std::vector<double> points, std::vector<double> weights,
                                    double exponent);

/// Atoms at the centers of a per_axis^d grid over [lo, hi]^d.
FrostmanMeasure lebesgue_atoms(int dim, int per_axis, double lo = 0.0, double hi = 1.0,
                               Representation rep = Representation::cell_atoms);

FrostmanMeasure circle_measure(double cx, double cy, double radius, std::size_t count);

/// Uniform atoms along the segment from a to b (count atoms, endpoints included).
FrostmanMeasure segment_measure(std::span<const double> a, std::span<const double> b,
                                std::size_t count);

double ball_mass(const FrostmanMeasure& mu, std::span<const double> x, double r);

/// Empirical max of mu(B(x, r)) / r^s over atoms probed at the given radii. Probes
/// are evenly strided atoms; probes >= size() visits every atom.
double empirical_frostman_constant(const FrostmanMeasure& mu, std::span<const double> radii,
                                   std::size_t probes);

struct FrostmanFit {
  double exponent = 0.0;
  double constant = 0.0;
  std::vector<double> scales;
  std::vector<double> sup_mass;
};

FrostmanFit frostman_exponent_fit(const FrostmanMeasure& mu, std::span<const double> scales,
                                  std::size_t probes, std::uint64_t seed);

double box_dimension_estimate(const CellFractal& fractal);

struct PointSample {
  int dim = 0;
  std::vector<double> points;
  std::vector<double> weights;
  std::uint64_t seed = 0;

  std::size_t size() const { return weights.size(); }
  std::span<const double> point(std::size_t i) const {
    return {points.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
};

/// Draws `count` independent points from mu. Draw i depends only on (seed, i).
PointSample sample_points(const FrostmanMeasure& mu, std::size_t count, std::uint64_t seed);

/// Inverse-CDF sampler over the atoms of mu; cell_uniform measures are jittered
/// uniformly inside each cell. Draw (stream, index) depends on nothing else.
class MeasureSampler {
 public:
  explicit MeasureSampler(const FrostmanMeasure& mu);
  void draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index, std::span<double> out) const;
  std::size_t draw_atom(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) const;

 private:
  const FrostmanMeasure* mu_;
  std::vector<double> cumulative_;
};

/// Writes draw `index` of the given stream into out (dim doubles).
void sample_point(const FrostmanMeasure& mu, std::uint64_t seed, std::uint64_t stream,
                  std::uint64_t index, std::span<double> out);

FrostmanMeasure as_measure(const PointSample& sample, double exponent);

// Line format: header "d b n m target_dim", then one level-n cell per line as d
// base-b digit strings of length n (most significant digit first).
void write_cells(std::ostream& out, const CellFractal& fractal);
CellFractal read_cells(std::istream& in);

// CSV with header x_1,...,x_d,weight.
void write_measure_csv(std::ostream& out, const FrostmanMeasure& mu);
FrostmanMeasure read_measure_csv(std::istream& in, double exponent);

}  // namespace pinlab
