#include "pinlab/spectral.hpp"

#include <fftw3.h>

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>

#include "pinlab/errors.hpp"
#include "pinlab/parallel.hpp"
#include "pinlab/pinned.hpp"
#include "pinlab/rng.hpp"

namespace pinlab {

namespace {

using Vec = std::vector<double>;
using Gauss = boost::math::quadrature::gauss<double, 20>;

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

void transform(SpectralGrid& g, int sign) {
  std::vector<int> dims(g.dim, g.side_n);
  auto* data = reinterpret_cast<fftw_complex*>(g.values.data());
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft(g.dim, dims.data(), data, data, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plan);
}

// Index decomposition of a flat row-major offset into per-axis indices.
void unflatten(std::size_t flat, int dim, int side, std::span<int> out) {
  for (int k = dim - 1; k >= 0; --k) {
    out[k] = static_cast<int>(flat % side);
    flat /= side;
  }
}

std::size_t grid_size(int dim, int side) {
  std::size_t n = 1;
  for (int k = 0; k < dim; ++k) n *= static_cast<std::size_t>(side);
  return n;
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

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

// Integral of |xi|^-gamma over the unit cell centered at integer point q.
double cell_weight(std::span<const int> q, double gamma) {
  const int d = static_cast<int>(q.size());
  const bool origin = std::all_of(q.begin(), q.end(), [](int v) { return v == 0; });
  if (origin) {
    // Pyramids over the 2d faces: each contributes (1/2)/(d - gamma) times the face
    // integral of |xi|^-gamma on {xi_1 = 1/2}.
    double face = 0.0;
    if (d == 1) {
      face = std::pow(0.5, -gamma);
    } else if (d == 2) {
      face = Gauss::integrate([&](double a) { return std::pow(0.25 + a * a, -gamma / 2); }, -0.5, 0.5);
    } else {
      face = Gauss::integrate(
          [&](double a) {
            return Gauss::integrate([&](double b) { return std::pow(0.25 + a * a + b * b, -gamma / 2); }, -0.5, 0.5);
          },
          -0.5, 0.5);
    }
    return 2.0 * d * 0.5 / (d - gamma) * face;
  }
  auto radial = [&](double s2) { return std::pow(s2, -gamma / 2); };
  if (d == 1) {
    return Gauss::integrate([&](double a) { return radial((q[0] + a) * (q[0] + a)); }, -0.5, 0.5);
  }
  if (d == 2) {
    return Gauss::integrate(
        [&](double a) {
          return Gauss::integrate(
              [&](double b) { return radial((q[0] + a) * (q[0] + a) + (q[1] + b) * (q[1] + b)); }, -0.5, 0.5);
        },
        -0.5, 0.5);
  }
  return Gauss::integrate(
      [&](double a) {
        return Gauss::integrate(
            [&](double b) {
              return Gauss::integrate(
                  [&](double c) {
                    return radial((q[0] + a) * (q[0] + a) + (q[1] + b) * (q[1] + b) + (q[2] + c) * (q[2] + c));
                  },
                  -0.5, 0.5);
            },
            -0.5, 0.5);
      },
      -0.5, 0.5);
}

// iint_{[0,1]^d x [0,1]^d} |x - y|^(gamma - d).
double unit_cell_self_energy(double gamma, int d) {
  if (d == 1) return 2.0 * (1.0 / gamma - 1.0 / (gamma + 1.0));
  if (d == 2) {
    return 8.0 * Gauss::integrate(
                     [&](double th) {
                       const double c = std::cos(th), s = std::sin(th);
                       const double r = 1.0 / c;
                       return std::pow(r, gamma) / gamma - (c + s) * std::pow(r, gamma + 1) / (gamma + 1) +
                              c * s * std::pow(r, gamma + 2) / (gamma + 2);
                     },
                     0.0, std::numbers::pi / 4);
  }
  throw UnsupportedError("cell self-energy is implemented for d <= 2");
}

bool translation_invariant(PhaseKind k) { return k == PhaseKind::euclidean || k == PhaseKind::flat_torus; }

}  // namespace

SpectralGrid SpectralGrid::zeros(int dim, int side_n) {
  if (dim < 1 || side_n < 2) throw DomainError("invalid spectral grid shape");
  SpectralGrid g;
  g.dim = dim;
  g.side_n = side_n;
  g.values.assign(grid_size(dim, side_n), Complex(0.0, 0.0));
  return g;
}

int frequency(int side_n, int i) { return i < (side_n + 1) / 2 ? i : i - side_n; }

double frequency_norm(const SpectralGrid& g, std::size_t flat) {
  double s = 0.0;
  for (int k = 0; k < g.dim; ++k) {
    const int q = frequency(g.side_n, static_cast<int>(flat % g.side_n));
    flat /= g.side_n;
    s += static_cast<double>(q) * q;
  }
  return std::sqrt(s);
}

void fft_forward(SpectralGrid& g) { transform(g, FFTW_FORWARD); }

void fft_inverse(SpectralGrid& g) {
  transform(g, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(g.size());
  for (auto& v : g.values) v *= scale;
}

double l2_norm_squared(const SpectralGrid& g) {
  double s = 0.0;
  for (const auto& v : g.values) s += std::norm(v);
  return s;
}

double lp_cutoff(double r) {
  if (r <= 1.0) return 1.0;
  if (r >= 2.0) return 0.0;
  const double a = std::exp(-1.0 / (2.0 - r));
  const double b = std::exp(-1.0 / (r - 1.0));
  return a / (a + b);
}

double LPPartition::band(int j, double r) const {
  if (j < 0 || j > j_max) throw DomainError("band index out of range");
  return j == 0 ? alpha0(r) : alpha(std::ldexp(r, -j));
}

double LPPartition::partition_sum(double r) const {
  double s = alpha0(r);
  for (int j = 1; j <= j_max; ++j) s += alpha(std::ldexp(r, -j));
  return s;
}

LPPartition make_lp_partition(int j_max) {
  if (j_max < 0) throw DomainError("j_max must be >= 0");
  LPPartition p;
  p.j_max = j_max;
  return p;
}

SpectralGrid lp_project(const SpectralGrid& g, const LPPartition& p, int j) {
  if (j < 0 || j > p.j_max) throw DomainError("band index out of range");
  SpectralGrid out = g;
  fft_forward(out);
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= p.band(j, frequency_norm(out, i));
  fft_inverse(out);
  return out;
}

DecayReport surface_measure_decay(int dim, int side_n, double radius, int shell_lo) {
  if (dim != 2 && dim != 3) throw DomainError("surface measure decay supports d = 2 or 3");
  if (side_n < 16 || (side_n & (side_n - 1)) != 0) throw DomainError("side_n must be a power of two >= 16");
  DecayReport rep;
  rep.flagged = dim == 2 && side_n < 256;
  auto g = SpectralGrid::zeros(dim, side_n);
  const double h = g.spacing();
  std::vector<int> idx(dim);
  double total = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    unflatten(i, dim, side_n, idx);
    double r2 = 0.0;
    for (int k = 0; k < dim; ++k) r2 += (idx[k] * h - 0.5) * (idx[k] * h - 0.5);
    const double w = std::max(0.0, 1.0 - std::abs(std::sqrt(r2) - radius) / h);
    g.values[i] = w;
    total += w;
  }
  for (auto& v : g.values) v /= total;
  fft_forward(g);
  rep.sigma_hat_zero = std::abs(g.values[0]);
  Vec xs, ys;
  for (int k = shell_lo; k < side_n / 4; k *= 2) {
    double mx = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double q = frequency_norm(g, i);
      if (q >= k && q < 2 * k) mx = std::max(mx, std::abs(g.values[i]));
    }
    rep.shell_lo.push_back(k);
    rep.shell_max.push_back(mx);
    xs.push_back(std::log(static_cast<double>(k)));
    ys.push_back(std::log(mx));
  }
  if (xs.size() < 2) throw DomainError("side_n too small for two decay shells");
  rep.slope = least_squares_slope(xs, ys);
  return rep;
}

double energy_constant(double gamma, int dim) {
  return std::pow(std::numbers::pi, gamma - dim / 2.0) * std::tgamma((dim - gamma) / 2.0) / std::tgamma(gamma / 2.0);
}

ShellVerdict classify_shells(std::span<const double> partial) {
  if (partial.size() < 2) return ShellVerdict::undecided;
  const double last_two = partial.back() / partial[partial.size() - 2];
  const double last_first = partial.back() / partial.front();
  if (last_two <= 1.05) return ShellVerdict::converging;
  if (last_first >= 2.0) return ShellVerdict::growing;
  return ShellVerdict::undecided;
}

EnergyReport energy_integral(const FrostmanMeasure& lambda, double gamma, int side_n) {
  const int d = lambda.dim;
  if (!(gamma > 0.0 && gamma < d)) throw DomainError("gamma must lie in (0, d)");
  if (side_n < 8 || (side_n & (side_n - 1)) != 0) throw DomainError("side_n must be a power of two >= 8");
  if (lambda.size() == 0) throw DomainError("empty measure");
  const bool uniform = lambda.representation == Representation::cell_uniform && lambda.cell_side > 0.0;

  auto g = SpectralGrid::zeros(d, side_n);
  const double h = g.spacing();
  std::vector<int> base(d);
  Vec frac(d);
  for (std::size_t a = 0; a < lambda.size(); ++a) {
    const auto p = lambda.point(a);
    for (int k = 0; k < d; ++k) {
      const double u = p[k] / h;
      base[k] = static_cast<int>(std::floor(u));
      frac[k] = u - base[k];
    }
    for (int corner = 0; corner < (1 << d); ++corner) {
      double w = lambda.weights[a];
      std::size_t flat = 0;
      for (int k = 0; k < d; ++k) {
        const int bit = (corner >> k) & 1;
        w *= bit ? frac[k] : 1.0 - frac[k];
        const int node = ((base[k] + bit) % side_n + side_n) % side_n;
        flat = flat * side_n + node;
      }
      if (w != 0.0) g.values[flat] += w;
    }
  }
  fft_forward(g);

  const int levels = static_cast<int>(std::log2(side_n / 2));
  EnergyReport rep;
  Vec bucket(levels + 1, 0.0);
  double zero_term = 0.0;
  std::vector<int> q(d);
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::size_t rem = i;
    double r2 = 0.0;
    bool near = true;
    double filt = 1.0;
    for (int k = d - 1; k >= 0; --k) {
      q[k] = frequency(side_n, static_cast<int>(rem % side_n));
      rem /= side_n;
      r2 += static_cast<double>(q[k]) * q[k];
      near = near && std::abs(q[k]) <= 2;
      if (uniform) filt *= std::pow(sinc(std::numbers::pi * q[k] * lambda.cell_side), 2);
    }
    const double r = std::sqrt(r2);
    const double amp = std::norm(g.values[i]) * filt;
    if (r == 0.0) {
      zero_term = amp * cell_weight(q, gamma);
      continue;
    }
    if (r >= side_n / 2) continue;
    const double w = near ? cell_weight(q, gamma) : std::pow(r, -gamma);
    const int level = std::max(1, static_cast<int>(std::floor(std::log2(r))) + 1);
    bucket[std::min(level, levels)] += amp * w;
  }
  double acc = 0.0;
  for (int k = 1; k <= levels; ++k) {
    acc += bucket[k];
    rep.shell_radius.push_back(std::ldexp(1.0, k));
    rep.shell_partial.push_back(acc);
  }
  rep.fourier_value = zero_term + acc;
  rep.verdict = classify_shells(rep.shell_partial);
  if (rep.shell_partial.size() >= 2) {
    rep.last_two_ratio = rep.shell_partial.back() / rep.shell_partial[rep.shell_partial.size() - 2];
    rep.last_first_ratio = rep.shell_partial.back() / rep.shell_partial.front();
  }

  const std::size_t n = lambda.size();
  Vec rows(n);
  parallel_batches(n, [&](std::size_t i) {
    double s = 0.0;
    const auto x = lambda.point(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto y = lambda.point(j);
      double r2 = 0.0;
      for (int k = 0; k < d; ++k) r2 += (x[k] - y[k]) * (x[k] - y[k]);
      if (r2 == 0.0) continue;
      s += lambda.weights[j] * std::pow(r2, (gamma - d) / 2.0);
    }
    rows[i] = lambda.weights[i] * s;
  });
  double kernel = std::accumulate(rows.begin(), rows.end(), 0.0);
  if (uniform) {
    const double self = unit_cell_self_energy(gamma, d) * std::pow(lambda.cell_side, gamma - d);
    for (double w : lambda.weights) kernel += w * w * self;
  }
  rep.kernel_value = energy_constant(gamma, d) * kernel;
  return rep;
}

SchurReport schur_kernel_sup(const FrostmanMeasure& lambda, double gamma) {
  const int d = lambda.dim;
  if (!(gamma > 0.0 && gamma < d)) throw DomainError("gamma must lie in (0, d)");
  const std::size_t n = lambda.size();
  if (n == 0) throw DomainError("empty measure");
  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += (lambda.points[i * d + k] - lambda.points[j * d + k]) * (lambda.points[i * d + k] - lambda.points[j * d + k]);
    return std::sqrt(s);
  };
  double diam = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) diam = std::max(diam, dist(i, j));
  SchurReport rep;
  rep.scale = diam > 1.0 ? diam : 1.0;
  rep.direct.assign(n, 0.0);
  rep.majorant.assign(n, 0.0);
  parallel_batches(n, [&](std::size_t i) {
    std::vector<std::pair<double, double>> others;
    others.reserve(n);
    double direct = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double r = dist(i, j) / rep.scale;
      if (r == 0.0) continue;
      direct += lambda.weights[j] * std::pow(r, gamma - d);
      others.emplace_back(r, lambda.weights[j]);
    }
    std::sort(others.begin(), others.end());
    double maj = 0.0;
    std::size_t hi = others.size();
    double mass = 0.0;
    for (const auto& o : others) mass += o.second;
    for (int j = 0; hi > 0; ++j) {
      const double radius = std::ldexp(1.0, -j);
      while (hi > 0 && others[hi - 1].first > radius) {
        mass -= others[hi - 1].second;
        --hi;
      }
      if (hi == 0) break;
      maj += std::pow(2.0, (j + 1) * (d - gamma)) * mass;
    }
    rep.direct[i] = direct;
    rep.majorant[i] = maj;
  });
  rep.sup_direct = *std::max_element(rep.direct.begin(), rep.direct.end());
  rep.sup_majorant = *std::max_element(rep.majorant.begin(), rep.majorant.end());
  return rep;
}

SpectralGrid radon_apply(const PhaseFunction& phi, const CutoffPair* cutoffs, double eps, double t,
                         const SpectralGrid& f) {
  const int d = f.dim;
  const int n = f.side_n;
  if (phi.dim != d) throw DomainError("phase dimension does not match the field");
  if (eps < 2.0 / n - 1e-15) throw ResolutionError("eps below 2 / side_n is not resolved by the grid");
  const Mollifier rho(eps);
  const double h = f.spacing();
  const double vol = std::pow(h, d);
  SpectralGrid out = SpectralGrid::zeros(d, n);

  if (translation_invariant(phi.kind) && (cutoffs == nullptr || translation_invariant(cutoffs->phase.kind))) {
    // T f(x) = sum_o K(o) f(x + o): a circular correlation, applied through the FFT
    SpectralGrid kernel = SpectralGrid::zeros(d, n);
    std::vector<int> idx(d);
    Vec zero(d, 0.0), delta(d);
    for (std::size_t i = 0; i < f.size(); ++i) {
      unflatten(i, d, n, idx);
      double r2 = 0.0;
      for (int k = 0; k < d; ++k) {
        delta[k] = frequency(n, idx[k]) * h;
        r2 += delta[k] * delta[k];
      }
      double w = rho(t - std::sqrt(r2));
      if (w != 0.0 && cutoffs != nullptr) w *= cutoffs->psi(zero, delta);
      kernel.values[i] = w * vol;
    }
    fft_forward(kernel);
    out = f;
    fft_forward(out);
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= std::conj(kernel.values[i]);
    fft_inverse(out);
    return out;
  }

  parallel_batches(f.size(), [&](std::size_t i) {
    std::vector<int> xi(d), yi(d);
    Vec x(d), y(d);
    unflatten(i, d, n, xi);
    for (int k = 0; k < d; ++k) x[k] = xi[k] * h;
    Complex acc(0.0, 0.0);
    for (std::size_t j = 0; j < f.size(); ++j) {
      unflatten(j, d, n, yi);
      for (int k = 0; k < d; ++k) y[k] = yi[k] * h;
      double w = rho(t - phi.value(x, y));
      if (w == 0.0) continue;
      if (cutoffs != nullptr) w *= cutoffs->psi(x, y);
      acc += w * vol * f.values[j];
    }
    out.values[i] = acc;
  });
  return out;
}

double sobolev_norm(const SpectralGrid& g, double gamma) {
  SpectralGrid hat = g;
  fft_forward(hat);
  const double vol = std::pow(hat.spacing(), hat.dim);
  double s = 0.0;
  for (std::size_t i = 0; i < hat.size(); ++i) {
    const double q = frequency_norm(hat, i);
    s += std::norm(hat.values[i] * vol) * std::pow(1.0 + q * q, gamma);
  }
  return std::sqrt(s);
}

RadonRatioReport radon_sobolev_ratio(const PhaseFunction& phi, const CutoffPair* cutoffs, double t,
                                     std::span<const double> eps_list, std::span<const SpectralGrid> fields,
                                     double gamma) {
  if (eps_list.empty() || fields.empty()) throw DomainError("need eps values and test fields");
  RadonRatioReport rep;
  for (std::size_t fi = 0; fi < fields.size(); ++fi) {
    const auto& f = fields[fi];
    const double fnorm = std::sqrt(l2_norm_squared(f) * std::pow(f.spacing(), f.dim));
    if (!(fnorm > 0.0)) throw DomainError("test field has zero norm");
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (double eps : eps_list) {
      const auto g = radon_apply(phi, cutoffs, eps, t, f);
      const double ratio = sobolev_norm(g, gamma) / fnorm;
      rep.rows.push_back({eps, fi, ratio});
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    rep.max_over_min.push_back(hi / lo);
    rep.worst = std::max(rep.worst, hi / lo);
  }
  return rep;
}

std::vector<SpectralGrid> band_limited_fields(int dim, int side_n, std::size_t count, double max_freq,
                                              std::uint64_t seed) {
  std::vector<SpectralGrid> out;
  for (std::size_t c = 0; c < count; ++c) {
    auto g = SpectralGrid::zeros(dim, side_n);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double q = frequency_norm(g, i);
      if (q == 0.0 || q > max_freq) continue;
      CounterRng rng(seed, streams::kFields, 4 * (c * g.size() + i));
      const double re = rng.normal();
      const double im = rng.normal();
      g.values[i] = Complex(re, im);
    }
    fft_inverse(g);
    double s = 0.0;
    for (auto& v : g.values) {
      v = Complex(v.real(), 0.0);
      s += std::norm(v);
    }
    const double norm = std::sqrt(s * std::pow(g.spacing(), dim));
    for (auto& v : g.values) v /= norm;
    out.push_back(std::move(g));
  }
  return out;
}

double g_bump(const GDomain& dom, std::span<const double> x, std::span<const double> y) {
  double b = 1.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double lx = dom.x_hi[k] - dom.x_lo[k];
    const double ly = dom.y_hi[k] - dom.y_lo[k];
    b *= Mollifier::profile(4.0 * (x[k] - 0.5 * (dom.x_lo[k] + dom.x_hi[k])) / lx);
    b *= Mollifier::profile(4.0 * (y[k] - 0.5 * (dom.y_lo[k] + dom.y_hi[k])) / ly);
  }
  return b;
}

GResult oscillatory_G(const PhaseFunction& phi, const PairWeight& psi, double s, std::span<const double> xi,
                      std::span<const double> zeta, double t, int quad_n, const GDomain& dom) {
  if (phi.dim != 2) throw UnsupportedError("oscillatory_G is implemented for d = 2 only");
  if (xi.size() != 2 || zeta.size() != 2) throw DomainError("frequencies must be 2-vectors");
  if (quad_n < 2 || quad_n > 64) throw DomainError("quad_n must lie in [2, 64]");
  GResult res;
  double side = 0.0;
  for (int k = 0; k < 2; ++k) {
    side = std::max({side, dom.x_hi[k] - dom.x_lo[k], dom.y_hi[k] - dom.y_lo[k]});
  }
  res.unresolved = std::max(std::hypot(xi[0], xi[1]), std::hypot(zeta[0], zeta[1])) * side > quad_n / 4.0;

  const double hx0 = (dom.x_hi[0] - dom.x_lo[0]) / quad_n, hx1 = (dom.x_hi[1] - dom.x_lo[1]) / quad_n;
  const double hy0 = (dom.y_hi[0] - dom.y_lo[0]) / quad_n, hy1 = (dom.y_hi[1] - dom.y_lo[1]) / quad_n;
  const double cell = hx0 * hx1 * hy0 * hy1;
  std::vector<Complex> rows(quad_n);
  parallel_batches(quad_n, [&](std::size_t a) {
    double x[2], y[2];
    Complex acc(0.0, 0.0);
    x[0] = dom.x_lo[0] + (a + 0.5) * hx0;
    for (int b = 0; b < quad_n; ++b) {
      x[1] = dom.x_lo[1] + (b + 0.5) * hx1;
      for (int c = 0; c < quad_n; ++c) {
        y[0] = dom.y_lo[0] + (c + 0.5) * hy0;
        for (int e = 0; e < quad_n; ++e) {
          y[1] = dom.y_lo[1] + (e + 0.5) * hy1;
          double w = g_bump(dom, x, y);
          if (w == 0.0) continue;
          if (psi) w *= psi(x, y);
          if (w == 0.0) continue;
          const double phase = (phi.value(x, y) - t) * s + y[0] * zeta[0] + y[1] * zeta[1] - x[0] * xi[0] - x[1] * xi[1];
          acc += w * std::polar(1.0, 2.0 * std::numbers::pi * phase);
        }
      }
    }
    rows[a] = acc;
  });
  Complex total(0.0, 0.0);
  for (const auto& r : rows) total += r;
  res.value = total * cell;
  return res;
}

}  // namespace pinlab
