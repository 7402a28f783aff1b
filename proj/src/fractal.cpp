#include "pinlab/fractal.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "pinlab/errors.hpp"
#include "pinlab/parallel.hpp"
#include "pinlab/rng.hpp"

namespace pinlab {

namespace {

std::int64_t ipow(std::int64_t b, int e) {
  std::int64_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

void check_budget(double cells, std::size_t budget) {
  if (!(cells <= static_cast<double>(budget))) {
    std::ostringstream msg;
    msg << "construction needs " << cells << " cells, budget is " << budget;
    throw ResourceError(msg.str());
  }
}

bool is_badic(const CellFractal& f) {
  return std::abs(f.ratio * f.base - 1.0) < 1e-14;
}

double least_squares_slope(std::span<const double> xs, std::span<const double> ys) {
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace

double CellFractal::cell_side(int l) const {
  if (is_badic(*this)) return std::pow(static_cast<double>(base), -l);
  return std::pow(ratio, l);
}

void CellFractal::cell_corner(int l, std::size_t index, std::span<double> out) const {
  const auto& lv = levels.at(l);
  if (is_badic(*this)) {
    const double scale = std::pow(static_cast<double>(base), -l);
    for (int k = 0; k < dim; ++k) out[k] = static_cast<double>(lv.coords[index * dim + k]) * scale;
    return;
  }
  const double gap = (1.0 - ratio) / (base - 1);
  for (int k = 0; k < dim; ++k) {
    std::int64_t c = lv.coords[index * dim + k];
    // digits from least significant (level l) upwards
    double corner = 0.0;
    for (int j = l; j >= 1; --j) {
      const auto digit = static_cast<double>(c % base);
      c /= base;
      corner += digit * gap * std::pow(ratio, j - 1);
    }
    out[k] = corner;
  }
}

std::vector<double> CellFractal::cell_center(int l, std::size_t index) const {
  std::vector<double> c(dim);
  cell_corner(l, index, c);
  const double half = 0.5 * cell_side(l);
  for (auto& v : c) v += half;
  return c;
}

void CellFractal::validate() const {
  if (static_cast<int>(levels.size()) != level + 1) throw DomainError("level table size mismatch");
  std::vector<double> corner(dim);
  for (int l = 0; l <= level; ++l) {
    const auto& lv = levels[l];
    if (lv.coords.size() != lv.parent.size() * dim) throw DomainError("coordinate table size mismatch");
    const auto expected = static_cast<double>(ipow(keep, l));
    if (static_cast<double>(lv.parent.size()) != expected) {
      std::ostringstream msg;
      msg << "level " << l << " holds " << lv.parent.size() << " cells, expected " << expected;
      throw DomainError(msg.str());
    }
    const double side = cell_side(l);
    const std::int64_t extent = ipow(base, l);
    for (std::size_t i = 0; i < lv.parent.size(); ++i) {
      for (int k = 0; k < dim; ++k) {
        const auto c = lv.coords[i * dim + k];
        if (c < 0 || c >= extent) throw DomainError("cell coordinate out of range");
        if (l > 0) {
          const auto& up = levels[l - 1];
          if (lv.parent[i] >= up.parent.size() || up.coords[lv.parent[i] * dim + k] != c / base) {
            throw DomainError("cell is not nested in its parent");
          }
        }
      }
      cell_corner(l, i, corner);
      for (int k = 0; k < dim; ++k) {
        if (corner[k] < -1e-12 || corner[k] + side > 1.0 + 1e-12) {
          throw DomainError("cell leaves the unit cube");
        }
      }
    }
  }
}

namespace {

CellFractal make_root(int dim, int base, int keep, int level, double ratio, double target) {
  CellFractal f;
  f.dim = dim;
  f.base = base;
  f.keep = keep;
  f.level = level;
  f.ratio = ratio;
  f.target_dim = target;
  f.levels.resize(1);
  f.levels[0].coords.assign(dim, 0);
  f.levels[0].parent.assign(1, 0);
  return f;
}

}  // namespace

CellFractal build_product_cantor(int dim, double ratio, int level, std::size_t max_cells) {
  if (dim < 1) throw DomainError("dimension must be >= 1");
  if (level < 1) throw DomainError("level must be >= 1");
  if (!(ratio > 0.0 && ratio < 0.5)) throw DomainError("product Cantor ratio must lie in (0, 1/2)");
  check_budget(std::pow(2.0, dim * level), max_cells);

  const int children = 1 << dim;
  const double target = dim * std::numbers::ln2 / std::log(1.0 / ratio);
  CellFractal f = make_root(dim, 2, children, level, ratio, target);
  for (int l = 1; l <= level; ++l) {
    const auto& up = f.levels[l - 1];
    CellFractal::Level lv;
    const std::size_t n_up = up.parent.size();
    lv.coords.reserve(n_up * children * dim);
    lv.parent.reserve(n_up * children);
    for (std::size_t p = 0; p < n_up; ++p) {
      for (int c = 0; c < children; ++c) {
        for (int k = 0; k < dim; ++k) lv.coords.push_back(up.coords[p * dim + k] * 2 + ((c >> (dim - 1 - k)) & 1));
        lv.parent.push_back(static_cast<std::uint32_t>(p));
      }
    }
    f.levels.push_back(std::move(lv));
  }
  return f;
}

CellFractal build_subdivision_fractal(int dim, int base, int keep, int level, std::uint64_t seed,
                                      std::size_t max_cells) {
  if (dim < 1) throw DomainError("dimension must be >= 1");
  if (base < 2) throw DomainError("base must be >= 2");
  if (level < 1) throw DomainError("level must be >= 1");
  const double slots = std::pow(static_cast<double>(base), dim);
  if (keep < 1 || keep > slots) throw DomainError("keep count must lie in [1, base^d]");
  check_budget(std::pow(static_cast<double>(keep), level), max_cells);

  const auto children = static_cast<std::int64_t>(slots);
  const double target = keep == 1 ? 0.0 : std::log(static_cast<double>(keep)) / std::log(static_cast<double>(base));
  CellFractal f = make_root(dim, base, keep, level, 1.0 / base, target);
  std::vector<std::int64_t> pool(children);
  for (int l = 1; l <= level; ++l) {
    const auto& up = f.levels[l - 1];
    CellFractal::Level lv;
    const std::size_t n_up = up.parent.size();
    lv.coords.reserve(n_up * keep * dim);
    lv.parent.reserve(n_up * keep);
    for (std::size_t p = 0; p < n_up; ++p) {
      std::iota(pool.begin(), pool.end(), 0);
      CounterRng rng(seed, streams::kSubdivision + static_cast<std::uint64_t>(l),
                     static_cast<std::uint64_t>(p) * static_cast<std::uint64_t>(children));
      // partial Fisher-Yates: the first `keep` slots are the retained children
      for (int i = 0; i < keep; ++i) {
        const auto j = i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(children - i)));
        std::swap(pool[i], pool[j]);
      }
      std::sort(pool.begin(), pool.begin() + keep);
      for (int i = 0; i < keep; ++i) {
        std::int64_t child = pool[i];
        std::vector<std::int64_t> digit(dim);
        for (int k = dim - 1; k >= 0; --k) {
          digit[k] = child % base;
          child /= base;
        }
        for (int k = 0; k < dim; ++k) lv.coords.push_back(up.coords[p * dim + k] * base + digit[k]);
        lv.parent.push_back(static_cast<std::uint32_t>(p));
      }
    }
    f.levels.push_back(std::move(lv));
  }
  return f;
}

CellFractal build_for_dimension(int dim, double target_dim, int level, std::size_t max_cells) {
  if (!(target_dim > 0.0 && target_dim <= dim)) throw DomainError("target dimension must lie in (0, d]");
  if (std::abs(target_dim - dim) < 1e-12) {
    return build_subdivision_fractal(dim, 2, 1 << dim, level, 0, max_cells);
  }
  const double ratio = std::exp(-dim * std::numbers::ln2 / target_dim);
  return build_product_cantor(dim, ratio, level, max_cells);
}

double FrostmanMeasure::total_mass() const {
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

double ball_mass(const FrostmanMeasure& mu, std::span<const double> x, double r) {
  const double r2 = r * r;
  double mass = 0.0;
  const std::size_t d = mu.dim;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double* p = mu.points.data() + i * d;
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = p[k] - x[k];
      s += diff * diff;
    }
    if (s <= r2) mass += mu.weights[i];
  }
  return mass;
}

double empirical_frostman_constant(const FrostmanMeasure& mu, std::span<const double> radii,
                                   std::size_t probes) {
  if (mu.size() == 0 || radii.empty()) return 0.0;
  const std::size_t n = mu.size();
  const std::size_t d = mu.dim;
  // atoms sorted by first coordinate; each ball only scans its slab
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return mu.points[a * d] < mu.points[b * d];
  });
  std::vector<double> key(n);
  for (std::size_t i = 0; i < n; ++i) key[i] = mu.points[order[i] * d];
  const std::size_t stride = std::max<std::size_t>(1, n / std::max<std::size_t>(1, probes));
  const std::size_t count = (n + stride - 1) / stride;
  std::vector<double> best(count, 0.0);
  parallel_batches((count + kBatchSize - 1) / kBatchSize, [&](std::size_t batch) {
    const std::size_t hi = std::min(count, (batch + 1) * kBatchSize);
    for (std::size_t q = batch * kBatchSize; q < hi; ++q) {
      const auto x = mu.point(q * stride);
      for (double r : radii) {
        const double r2 = r * r;
        const auto lo_it = std::lower_bound(key.begin(), key.end(), x[0] - r);
        const auto hi_it = std::upper_bound(key.begin(), key.end(), x[0] + r);
        double mass = 0.0;
        for (auto it = lo_it; it != hi_it; ++it) {
          const std::size_t i = order[it - key.begin()];
          const double* p = mu.points.data() + i * d;
          double s2 = 0.0;
          for (std::size_t k = 0; k < d; ++k) s2 += (p[k] - x[k]) * (p[k] - x[k]);
          if (s2 <= r2) mass += mu.weights[i];
        }
        best[q] = std::max(best[q], mass / std::pow(r, mu.exponent));
      }
    }
  });
  return *std::max_element(best.begin(), best.end());
}

FrostmanMeasure natural_measure(const CellFractal& fractal, Representation rep) {
  FrostmanMeasure mu;
  mu.dim = fractal.dim;
  mu.exponent = fractal.target_dim;
  mu.representation = rep;
  mu.cell_side = fractal.cell_side(fractal.level);
  const std::size_t n = fractal.size();
  mu.points.resize(n * fractal.dim);
  mu.weights.assign(n, 1.0 / static_cast<double>(n));
  const double half = 0.5 * mu.cell_side;
  for (std::size_t i = 0; i < n; ++i) {
    std::span<double> p(mu.points.data() + i * fractal.dim, fractal.dim);
    fractal.cell_corner(fractal.level, i, p);
    for (auto& v : p) v += half;
  }
  std::vector<double> radii;
  for (int l = 1; l <= fractal.level; ++l) radii.push_back(fractal.cell_side(l));
  mu.frostman_constant = empirical_frostman_constant(mu, radii, n <= kExhaustiveProbeAtoms ? n : 1024);
  return mu;
}

FrostmanMeasure point_cloud_measure(int dim, std::vector<double> points, std::vector<double> weights,
                                    double exponent) {
  if (dim < 1) throw DomainError("dimension must be >= 1");
  if (points.size() != weights.size() * dim) throw DomainError("points/weights size mismatch");
  if (weights.empty()) throw DomainError("empty point cloud");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw DomainError("negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw DomainError("zero total mass");
  for (auto& w : weights) w /= total;
  FrostmanMeasure mu;
  mu.dim = dim;
  mu.points = std::move(points);
  mu.weights = std::move(weights);
  mu.exponent = exponent;
  mu.frostman_constant = 1.0;
  return mu;
}

FrostmanMeasure lebesgue_atoms(int dim, int per_axis, double lo, double hi, Representation rep) {
  if (per_axis < 1) throw DomainError("per_axis must be >= 1");
  const double side = (hi - lo) / per_axis;
  std::size_t n = 1;
  for (int k = 0; k < dim; ++k) n *= per_axis;
  std::vector<double> pts(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rem = i;
    for (int k = dim - 1; k >= 0; --k) {
      pts[i * dim + k] = lo + (static_cast<double>(rem % per_axis) + 0.5) * side;
      rem /= per_axis;
    }
  }
  auto mu = point_cloud_measure(dim, std::move(pts), std::vector<double>(n, 1.0), dim);
  mu.representation = rep;
  mu.cell_side = side;
  mu.frostman_constant = std::pow(hi - lo, -dim) * std::pow(2.0, dim);
  return mu;
}

FrostmanMeasure circle_measure(double cx, double cy, double radius, std::size_t count) {
  std::vector<double> pts(2 * count);
  for (std::size_t i = 0; i < count; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count);
    pts[2 * i] = cx + radius * std::cos(a);
    pts[2 * i + 1] = cy + radius * std::sin(a);
  }
  return point_cloud_measure(2, std::move(pts), std::vector<double>(count, 1.0), 1.0);
}

FrostmanMeasure segment_measure(std::span<const double> a, std::span<const double> b, std::size_t count) {
  if (a.size() != b.size() || count < 2) throw DomainError("segment needs matching endpoints and >= 2 atoms");
  const int dim = static_cast<int>(a.size());
  std::vector<double> pts(count * dim);
  for (std::size_t i = 0; i < count; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(count - 1);
    for (int k = 0; k < dim; ++k) pts[i * dim + k] = a[k] + s * (b[k] - a[k]);
  }
  return point_cloud_measure(dim, std::move(pts), std::vector<double>(count, 1.0), 1.0);
}

FrostmanFit frostman_exponent_fit(const FrostmanMeasure& mu, std::span<const double> scales,
                                  std::size_t probes, std::uint64_t seed) {
  if (scales.size() < 2) throw DomainError("need at least two scales");
  const auto [lo, hi] = std::minmax_element(scales.begin(), scales.end());
  if (!(*lo > 0.0) || *hi / *lo < 1.0 + 1e-12) throw DomainError("degenerate scales");
  if (probes == 0 || mu.size() == 0) throw DomainError("need probes and a nonempty measure");

  // Probe points are atoms drawn by weight; ball masses are exact.
  std::vector<double> cumulative(mu.size());
  std::partial_sum(mu.weights.begin(), mu.weights.end(), cumulative.begin());
  std::vector<std::size_t> probe_atoms(probes);
  for (std::size_t i = 0; i < probes; ++i) {
    const double u = counter_uniform(seed, streams::kProbes, i) * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    probe_atoms[i] = std::min<std::size_t>(it - cumulative.begin(), mu.size() - 1);
  }

  FrostmanFit fit;
  fit.scales.assign(scales.begin(), scales.end());
  std::vector<double> xs, ys;
  for (double r : scales) {
    double sup = 0.0;
    for (auto a : probe_atoms) sup = std::max(sup, ball_mass(mu, mu.point(a), r));
    fit.sup_mass.push_back(sup);
    xs.push_back(std::log(r));
    ys.push_back(std::log(sup));
  }
  fit.exponent = least_squares_slope(xs, ys);
  for (std::size_t i = 0; i < scales.size(); ++i) {
    fit.constant = std::max(fit.constant, fit.sup_mass[i] / std::pow(scales[i], fit.exponent));
  }
  return fit;
}

double box_dimension_estimate(const CellFractal& fractal) {
  if (fractal.level < 3) throw DomainError("box dimension estimate needs level >= 3");
  std::vector<double> xs, ys;
  for (int l = 1; l <= fractal.level; ++l) {
    xs.push_back(-std::log(fractal.cell_side(l)));
    ys.push_back(std::log(static_cast<double>(fractal.cell_count(l))));
  }
  return least_squares_slope(xs, ys);
}

MeasureSampler::MeasureSampler(const FrostmanMeasure& mu) : mu_(&mu), cumulative_(mu.size()) {
  if (mu.size() == 0) throw DomainError("cannot sample an empty measure");
  std::partial_sum(mu.weights.begin(), mu.weights.end(), cumulative_.begin());
}

std::size_t MeasureSampler::draw_atom(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) const {
  const double u = counter_uniform(seed, stream, index) * cumulative_.back();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
}

void MeasureSampler::draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index,
                          std::span<double> out) const {
  const auto& mu = *mu_;
  const auto p = mu.point(draw_atom(seed, stream, index));
  std::copy(p.begin(), p.end(), out.begin());
  if (mu.representation == Representation::cell_uniform && mu.cell_side > 0.0) {
    CounterRng jitter(seed, stream ^ 0x6a09e667f3bcc909ULL, index * static_cast<std::uint64_t>(mu.dim));
    for (int k = 0; k < mu.dim; ++k) out[k] += (jitter.uniform() - 0.5) * mu.cell_side;
  }
}

void sample_point(const FrostmanMeasure& mu, std::uint64_t seed, std::uint64_t stream,
                  std::uint64_t index, std::span<double> out) {
  MeasureSampler(mu).draw(seed, stream, index, out);
}

PointSample sample_points(const FrostmanMeasure& mu, std::size_t count, std::uint64_t seed) {
  const MeasureSampler sampler(mu);
  PointSample s;
  s.dim = mu.dim;
  s.seed = seed;
  s.points.resize(count * mu.dim);
  s.weights.assign(count, 1.0 / static_cast<double>(count));
  for (std::size_t i = 0; i < count; ++i) {
    sampler.draw(seed, streams::kSampling, i, std::span<double>(s.points.data() + i * mu.dim, mu.dim));
  }
  return s;
}

FrostmanMeasure as_measure(const PointSample& sample, double exponent) {
  return point_cloud_measure(sample.dim, sample.points, sample.weights, exponent);
}

void write_cells(std::ostream& out, const CellFractal& f) {
  out << f.dim << ' ' << f.base << ' ' << f.level << ' ' << f.keep << ' '
      << std::setprecision(std::numeric_limits<double>::max_digits10) << f.target_dim << '\n';
  const auto& lv = f.levels.at(f.level);
  std::string digits(f.level, '0');
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (int k = 0; k < f.dim; ++k) {
      std::int64_t c = lv.coords[i * f.dim + k];
      for (int j = f.level - 1; j >= 0; --j) {
        const auto dgt = static_cast<int>(c % f.base);
        digits[j] = static_cast<char>(dgt < 10 ? '0' + dgt : 'a' + dgt - 10);
        c /= f.base;
      }
      out << (k ? " " : "") << digits;
    }
    out << '\n';
  }
}

CellFractal read_cells(std::istream& in) {
  CellFractal f;
  std::string header;
  if (!std::getline(in, header)) throw DomainError("missing cell header");
  std::istringstream hs(header);
  if (!(hs >> f.dim >> f.base >> f.level >> f.keep >> f.target_dim)) throw DomainError("malformed cell header");
  if (f.dim < 1 || f.base < 2 || f.level < 1 || f.keep < 1) throw DomainError("invalid cell header");
  if (f.keep == 1 || f.target_dim <= 0.0) {
    f.ratio = 1.0 / f.base;
  } else {
    f.ratio = std::exp(-std::log(static_cast<double>(f.keep)) / f.target_dim);
    if (std::abs(f.ratio * f.base - 1.0) < 1e-12) f.ratio = 1.0 / f.base;
  }

  std::vector<std::int64_t> leaf;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    int k = 0;
    while (ls >> tok) {
      if (static_cast<int>(tok.size()) != f.level) throw DomainError("cell digit string has wrong length");
      std::int64_t c = 0;
      for (char ch : tok) {
        const int dgt = std::isdigit(static_cast<unsigned char>(ch)) ? ch - '0' : ch - 'a' + 10;
        if (dgt < 0 || dgt >= f.base) throw DomainError("digit out of range");
        c = c * f.base + dgt;
      }
      leaf.push_back(c);
      ++k;
    }
    if (k != f.dim) throw DomainError("cell line has wrong arity");
  }

  // Rebuild the ancestry from the level-n cells; ancestors are deduplicated prefixes.
  f.levels.assign(f.level + 1, {});
  f.levels[f.level].coords = std::move(leaf);
  f.levels[f.level].parent.assign(f.levels[f.level].coords.size() / f.dim, 0);
  for (int l = f.level; l >= 1; --l) {
    auto& lv = f.levels[l];
    auto& up = f.levels[l - 1];
    const std::size_t n = lv.parent.size();
    std::vector<std::vector<std::int64_t>> keys(n, std::vector<std::int64_t>(f.dim));
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < f.dim; ++k) keys[i][k] = lv.coords[i * f.dim + k] / f.base;
    std::vector<std::vector<std::int64_t>> uniq = keys;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    up.coords.clear();
    for (const auto& u : uniq) up.coords.insert(up.coords.end(), u.begin(), u.end());
    up.parent.assign(uniq.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      lv.parent[i] = static_cast<std::uint32_t>(std::lower_bound(uniq.begin(), uniq.end(), keys[i]) - uniq.begin());
    }
  }
  f.validate();
  return f;
}

void write_measure_csv(std::ostream& out, const FrostmanMeasure& mu) {
  for (int k = 0; k < mu.dim; ++k) out << "x_" << (k + 1) << ',';
  out << "weight\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (int k = 0; k < mu.dim; ++k) out << mu.points[i * mu.dim + k] << ',';
    out << mu.weights[i] << '\n';
  }
}

FrostmanMeasure read_measure_csv(std::istream& in, double exponent) {
  std::string line;
  if (!std::getline(in, line)) throw DomainError("missing measure header");
  const int dim = static_cast<int>(std::count(line.begin(), line.end(), ','));
  if (dim < 1) throw DomainError("malformed measure header");
  std::vector<double> pts, w;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    int col = 0;
    while (std::getline(ls, cell, ',')) {
      const double v = std::stod(cell);
      (col < dim ? pts : w).push_back(v);
      ++col;
    }
    if (col != dim + 1) throw DomainError("measure row has wrong arity");
  }
  return point_cloud_measure(dim, std::move(pts), std::move(w), exponent);
}

}  // namespace pinlab
