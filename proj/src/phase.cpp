#include "pinlab/phase.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "pinlab/errors.hpp"
#include "pinlab/parallel.hpp"
#include "pinlab/rng.hpp"

namespace pinlab {

namespace {

using Vec = std::vector<double>;

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double a : v) s += a * a;
  return std::sqrt(s);
}

void check_dims(const PhaseFunction& phi, std::span<const double> x, std::span<const double> y) {
  if (static_cast<int>(x.size()) != phi.dim || static_cast<int>(y.size()) != phi.dim) {
    throw DomainError("point dimension does not match the phase function");
  }
}

double wrap(double a) { return a - std::nearbyint(a); }

// Inverse stereographic chart v -> S^d in R^{d+1}, projecting from the north pole.
struct ChartPoint {
  Vec p;    // d + 1 coordinates
  Vec jac;  // (d + 1) x d, row-major, derivative with respect to u
};

ChartPoint sphere_chart(const PhaseFunction& phi, std::span<const double> u) {
  const int d = phi.dim;
  Vec v(d);
  double r2 = 0.0;
  for (int k = 0; k < d; ++k) {
    v[k] = phi.chart_scale * (u[k] - 0.5);
    r2 += v[k] * v[k];
  }
  if (std::sqrt(r2) > phi.cap_radius + 1e-15) throw DomainError("point outside the sphere chart cap");
  const double q = r2 + 1.0;
  ChartPoint c;
  c.p.resize(d + 1);
  c.jac.assign((d + 1) * d, 0.0);
  for (int k = 0; k < d; ++k) c.p[k] = 2.0 * v[k] / q;
  c.p[d] = (r2 - 1.0) / q;
  for (int i = 0; i < d; ++i) {
    for (int k = 0; k < d; ++k) {
      c.jac[k * d + i] = phi.chart_scale * ((k == i ? 2.0 / q : 0.0) - 4.0 * v[k] * v[i] / (q * q));
    }
    c.jac[d * d + i] = phi.chart_scale * 4.0 * v[i] / (q * q);
  }
  return c;
}

double sphere_angle(const ChartPoint& a, const ChartPoint& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.p.size(); ++k) s += (a.p[k] - b.p[k]) * (a.p[k] - b.p[k]);
  return 2.0 * std::asin(std::min(1.0, std::sqrt(s) / 2.0));
}

// Shared formulas for phi = |w| with w = x - a y.
void fill_distance(PhaseEval& e, const Vec& w, double a) {
  const auto d = w.size();
  const double r = norm(w);
  e.value = r;
  e.grad_x.assign(d, 0.0);
  e.grad_y.assign(d, 0.0);
  e.mixed_hessian.assign(d * d, 0.0);
  if (r == 0.0) return;
  for (std::size_t i = 0; i < d; ++i) {
    e.grad_x[i] = w[i] / r;
    e.grad_y[i] = -a * w[i] / r;
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double proj = (i == j ? 1.0 : 0.0) - (w[i] / r) * (w[j] / r);
      e.mixed_hessian[i * d + j] = -a * proj / r;
    }
  }
}

}  // namespace

PhaseFunction PhaseFunction::euclidean(int dim) {
  PhaseFunction p;
  p.kind = PhaseKind::euclidean;
  p.dim = dim;
  return p;
}

PhaseFunction PhaseFunction::scaled_euclidean(int dim, double factor) {
  if (factor == 0.0) throw DomainError("scaled_euclidean factor must be nonzero");
  PhaseFunction p;
  p.kind = PhaseKind::scaled_euclidean;
  p.dim = dim;
  p.factor = factor;
  return p;
}

PhaseFunction PhaseFunction::dot_product(int dim) {
  PhaseFunction p;
  p.kind = PhaseKind::dot_product;
  p.dim = dim;
  return p;
}

PhaseFunction PhaseFunction::flat_torus(int dim) {
  PhaseFunction p;
  p.kind = PhaseKind::flat_torus;
  p.dim = dim;
  return p;
}

PhaseFunction PhaseFunction::sphere_geodesic_chart(int dim, double chart_scale, double cap_radius) {
  if (!(chart_scale > 0.0) || !(cap_radius > 0.0)) throw DomainError("sphere chart needs positive scale and cap");
  PhaseFunction p;
  p.kind = PhaseKind::sphere_geodesic_chart;
  p.dim = dim;
  p.chart_scale = chart_scale;
  p.cap_radius = cap_radius;
  return p;
}

PhaseFunction PhaseFunction::parse(const std::string& spec, int dim) {
  if (dim < 1) throw DomainError("dimension must be >= 1");
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.empty()) throw DomainError("empty phase function spec");
  auto number = [&](std::size_t i, double fallback) {
    if (parts.size() <= i) return fallback;
    try {
      return std::stod(parts[i]);
    } catch (const std::exception&) {
      throw DomainError("bad phase parameter '" + parts[i] + "'");
    }
  };
  const auto& kind = parts[0];
  if (kind == "euclidean") return euclidean(dim);
  if (kind == "scaled_euclidean") return scaled_euclidean(dim, number(1, 1.0));
  if (kind == "dot_product") return dot_product(dim);
  if (kind == "flat_torus") return flat_torus(dim);
  if (kind == "sphere_geodesic_chart") return sphere_geodesic_chart(dim, number(1, 1.0), number(2, 1.0));
  throw DomainError("unknown phase function kind '" + kind + "'");
}

std::string PhaseFunction::name() const {
  std::ostringstream out;
  switch (kind) {
    case PhaseKind::euclidean: return "euclidean";
    case PhaseKind::scaled_euclidean: out << "scaled_euclidean:" << factor; return out.str();
    case PhaseKind::dot_product: return "dot_product";
    case PhaseKind::flat_torus: return "flat_torus";
    case PhaseKind::sphere_geodesic_chart:
      out << "sphere_geodesic_chart:" << chart_scale << ':' << cap_radius;
      return out.str();
  }
  return "unknown";
}

double PhaseFunction::value(std::span<const double> x, std::span<const double> y) const {
  check_dims(*this, x, y);
  switch (kind) {
    case PhaseKind::euclidean: {
      double s = 0.0;
      for (int k = 0; k < dim; ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
      return std::sqrt(s);
    }
    case PhaseKind::scaled_euclidean: {
      double s = 0.0;
      for (int k = 0; k < dim; ++k) s += (x[k] - factor * y[k]) * (x[k] - factor * y[k]);
      return std::sqrt(s);
    }
    case PhaseKind::dot_product: {
      double s = 0.0;
      for (int k = 0; k < dim; ++k) s += x[k] * y[k];
      return s;
    }
    case PhaseKind::flat_torus: {
      double s = 0.0;
      for (int k = 0; k < dim; ++k) {
        const double w = wrap(x[k] - y[k]);
        s += w * w;
      }
      return std::sqrt(s);
    }
    case PhaseKind::sphere_geodesic_chart:
      return sphere_angle(sphere_chart(*this, x), sphere_chart(*this, y));
  }
  return 0.0;
}

double forbidden_gap(const PhaseFunction& phi, std::span<const double> x, std::span<const double> y) {
  check_dims(phi, x, y);
  const int d = phi.dim;
  switch (phi.kind) {
    case PhaseKind::euclidean:
    case PhaseKind::scaled_euclidean:
      return phi.value(x, y);
    case PhaseKind::dot_product:
      return std::min(norm(x), norm(y));
    case PhaseKind::flat_torus: {
      double gap = phi.value(x, y);
      for (int k = 0; k < d; ++k) gap = std::min(gap, 0.5 - std::abs(wrap(x[k] - y[k])));
      return std::max(gap, 0.0);
    }
    case PhaseKind::sphere_geodesic_chart: {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
      return std::min(std::sqrt(s), std::numbers::pi - phi.value(x, y));
    }
  }
  return 0.0;
}

bool forbidden_indicator(const PhaseFunction& phi, std::span<const double> x, std::span<const double> y,
                         double tolerance) {
  return forbidden_gap(phi, x, y) <= tolerance;
}

PhaseEval evaluate(const PhaseFunction& phi, std::span<const double> x, std::span<const double> y) {
  check_dims(phi, x, y);
  const int d = phi.dim;
  PhaseEval e;
  switch (phi.kind) {
    case PhaseKind::euclidean:
    case PhaseKind::scaled_euclidean: {
      const double a = phi.kind == PhaseKind::euclidean ? 1.0 : phi.factor;
      Vec w(d);
      for (int k = 0; k < d; ++k) w[k] = x[k] - a * y[k];
      fill_distance(e, w, a);
      break;
    }
    case PhaseKind::flat_torus: {
      Vec w(d);
      for (int k = 0; k < d; ++k) w[k] = wrap(x[k] - y[k]);
      fill_distance(e, w, 1.0);
      break;
    }
    case PhaseKind::dot_product: {
      e.value = phi.value(x, y);
      e.grad_x.assign(y.begin(), y.end());
      e.grad_y.assign(x.begin(), x.end());
      e.mixed_hessian.assign(d * d, 0.0);
      for (int i = 0; i < d; ++i) e.mixed_hessian[i * d + i] = 1.0;
      break;
    }
    case PhaseKind::sphere_geodesic_chart: {
      const auto cx = sphere_chart(phi, x);
      const auto cy = sphere_chart(phi, y);
      const double theta = sphere_angle(cx, cy);
      e.value = theta;
      e.grad_x.assign(d, 0.0);
      e.grad_y.assign(d, 0.0);
      e.mixed_hessian.assign(d * d, 0.0);
      const double sn = std::sin(theta);
      if (sn == 0.0) break;
      const double c = std::cos(theta);
      // theta = arccos(c), c = P(x).P(y)
      Vec dcx(d, 0.0), dcy(d, 0.0);
      for (int i = 0; i < d; ++i) {
        for (int k = 0; k <= d; ++k) {
          dcx[i] += cx.jac[k * d + i] * cy.p[k];
          dcy[i] += cy.jac[k * d + i] * cx.p[k];
        }
        e.grad_x[i] = -dcx[i] / sn;
        e.grad_y[i] = -dcy[i] / sn;
      }
      const double s3 = sn * sn * sn;
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
          double dd = 0.0;
          for (int k = 0; k <= d; ++k) dd += cx.jac[k * d + i] * cy.jac[k * d + j];
          e.mixed_hessian[i * d + j] = -(c / s3) * dcx[i] * dcy[j] - dd / sn;
        }
      }
      break;
    }
  }
  e.forbidden = forbidden_indicator(phi, x, y);
  return e;
}

namespace {

double bordered_det(const Vec& gx, const Vec& gy, const Vec& hess, int d) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d + 1, d + 1);
  for (int j = 0; j < d; ++j) m(0, 1 + j) = gx[j];
  for (int i = 0; i < d; ++i) {
    m(1 + i, 0) = -gy[i];
    for (int j = 0; j < d; ++j) m(1 + i, 1 + j) = hess[j * d + i];
  }
  return m.determinant();
}

FiniteDifferences raw_differences(const PhaseFunction& phi, std::span<const double> x,
                                  std::span<const double> y, double h) {
  const int d = phi.dim;
  FiniteDifferences fd;
  fd.grad_x.assign(d, 0.0);
  fd.grad_y.assign(d, 0.0);
  fd.mixed_hessian.assign(d * d, 0.0);
  Vec xp(x.begin(), x.end()), yp(y.begin(), y.end());
  for (int i = 0; i < d; ++i) {
    xp[i] = x[i] + h;
    const double fp = phi.value(xp, y);
    xp[i] = x[i] - h;
    const double fm = phi.value(xp, y);
    xp[i] = x[i];
    fd.grad_x[i] = (fp - fm) / (2.0 * h);
    yp[i] = y[i] + h;
    const double gp = phi.value(x, yp);
    yp[i] = y[i] - h;
    const double gm = phi.value(x, yp);
    yp[i] = y[i];
    fd.grad_y[i] = (gp - gm) / (2.0 * h);
  }
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int sx : {1, -1}) {
        for (int sy : {1, -1}) {
          xp[i] = x[i] + sx * h;
          yp[j] = y[j] + sy * h;
          acc += sx * sy * phi.value(xp, yp);
        }
      }
      xp[i] = x[i];
      yp[j] = y[j];
      fd.mixed_hessian[i * d + j] = acc / (4.0 * h * h);
    }
  }
  return fd;
}

void extrapolate(Vec& fine, const Vec& coarse) {
  for (std::size_t i = 0; i < fine.size(); ++i) fine[i] = (4.0 * fine[i] - coarse[i]) / 3.0;
}

}  // namespace

FiniteDifferences finite_differences(const PhaseFunction& phi, std::span<const double> x,
                                     std::span<const double> y, double h, bool richardson) {
  check_dims(phi, x, y);
  auto fd = raw_differences(phi, x, y, richardson ? h / 2.0 : h);
  if (richardson) {
    const auto coarse = raw_differences(phi, x, y, h);
    extrapolate(fd.grad_x, coarse.grad_x);
    extrapolate(fd.grad_y, coarse.grad_y);
    extrapolate(fd.mixed_hessian, coarse.mixed_hessian);
  }
  return fd;
}

double monge_ampere_det(const PhaseFunction& phi, std::span<const double> x, std::span<const double> y) {
  const auto e = evaluate(phi, x, y);
  if (e.forbidden) throw DomainError("Monge-Ampere determinant requested on the forbidden set");
  return bordered_det(e.grad_x, e.grad_y, e.mixed_hessian, phi.dim);
}

double monge_ampere_det_fd(const PhaseFunction& phi, std::span<const double> x, std::span<const double> y,
                           double h, bool richardson) {
  if (forbidden_indicator(phi, x, y)) throw DomainError("Monge-Ampere determinant requested on the forbidden set");
  const int d = phi.dim;
  const auto fd = finite_differences(phi, x, y, h, richardson);
  // Mixed entries come from differencing the gradient in y, which avoids the
  // h^-2 cancellation of the four-point value stencil.
  auto mixed = [&](double step) {
    Vec hess(d * d, 0.0);
    Vec yp(y.begin(), y.end());
    for (int j = 0; j < d; ++j) {
      yp[j] = y[j] + step;
      const auto ep = evaluate(phi, x, yp);
      yp[j] = y[j] - step;
      const auto em = evaluate(phi, x, yp);
      yp[j] = y[j];
      for (int i = 0; i < d; ++i) hess[i * d + j] = (ep.grad_x[i] - em.grad_x[i]) / (2.0 * step);
    }
    return hess;
  };
  Vec hess = mixed(richardson ? h / 2.0 : h);
  if (richardson) extrapolate(hess, mixed(h));
  return bordered_det(fd.grad_x, fd.grad_y, hess, d);
}

NondegeneracyReport nondegeneracy_scan(const PhaseFunction& phi, const FrostmanMeasure& mu,
                                       std::size_t pair_count, double tolerance, std::uint64_t seed) {
  if (pair_count == 0) throw DomainError("pair_count must be >= 1");
  if (mu.dim != phi.dim) throw DomainError("measure dimension does not match the phase function");
  const MeasureSampler sampler(mu);
  const std::size_t batches = (pair_count + kBatchSize - 1) / kBatchSize;
  struct Partial {
    std::size_t hits = 0;
    double min_grad = std::numeric_limits<double>::infinity();
    double min_det = std::numeric_limits<double>::infinity();
  };
  std::vector<Partial> parts(batches);
  parallel_batches(batches, [&](std::size_t b) {
    const int d = mu.dim;
    Vec x(d), y(d);
    Partial p;
    const std::size_t end = std::min(pair_count, (b + 1) * kBatchSize);
    for (std::size_t i = b * kBatchSize; i < end; ++i) {
      sampler.draw(seed, streams::kPairs, 2 * i, x);
      sampler.draw(seed, streams::kPairs, 2 * i + 1, y);
      if (forbidden_gap(phi, x, y) <= tolerance) {
        ++p.hits;
        continue;
      }
      const auto e = evaluate(phi, x, y);
      p.min_grad = std::min({p.min_grad, norm(e.grad_x), norm(e.grad_y)});
      p.min_det = std::min(p.min_det, std::abs(bordered_det(e.grad_x, e.grad_y, e.mixed_hessian, d)));
    }
    parts[b] = p;
  });
  NondegeneracyReport r;
  r.pairs = pair_count;
  r.min_grad_norm = std::numeric_limits<double>::infinity();
  r.min_ma_det_abs = std::numeric_limits<double>::infinity();
  std::size_t hits = 0;
  for (const auto& p : parts) {
    hits += p.hits;
    r.min_grad_norm = std::min(r.min_grad_norm, p.min_grad);
    r.min_ma_det_abs = std::min(r.min_ma_det_abs, p.min_det);
  }
  r.forbidden_mass_estimate = static_cast<double>(hits) / static_cast<double>(pair_count);
  return r;
}

double smoothstep(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return std::min(1.0, u * u * u * (u * (6.0 * u - 15.0) + 10.0));
}

double CutoffPair::psi(std::span<const double> x, std::span<const double> y) const {
  const double gap = forbidden_gap(phase, x, y);
  return smoothstep((gap - neighborhood_radius) / neighborhood_radius);
}

double CutoffPair::beta(double t) const {
  return smoothstep((t - (t_lo - ramp)) / ramp) * smoothstep(((t_hi + ramp) - t) / ramp);
}

CutoffPair build_cutoffs(const PhaseFunction& phi, double neighborhood_radius, double t_lo, double t_hi,
                         double ramp) {
  if (!(neighborhood_radius > 0.0)) throw DomainError("neighborhood radius must be positive");
  if (!(t_hi > t_lo)) throw DomainError("empty t range");
  CutoffPair c;
  c.phase = phi;
  c.neighborhood_radius = neighborhood_radius;
  c.t_lo = t_lo;
  c.t_hi = t_hi;
  c.ramp = ramp > 0.0 ? ramp : 0.1 * (t_hi - t_lo);
  return c;
}

PairWeight unit_cutoff() {
  return [](std::span<const double>, std::span<const double>) { return 1.0; };
}

PairWeight psi_of(const CutoffPair& cutoffs) {
  return [cutoffs](std::span<const double> x, std::span<const double> y) { return cutoffs.psi(x, y); };
}

}  // namespace pinlab
