#include <algorithm>
#include <cmath>
#include <limits>

#include "pinlab/errors.hpp"
#include "pinlab/pinned.hpp"

namespace pinlab {

Mollifier::Mollifier(double eps) : epsilon(eps) {
  if (!(eps > 0.0)) throw DomainError("mollifier scale must be positive");
}

double Mollifier::profile(double u) {
  const double s = 0.5 * u;
  const double q = 1.0 - s * s;
  if (q <= 0.0) return 0.0;
  return kProfileConstant * std::exp(-1.0 / q);
}

double Mollifier::profile_l2_squared() {
  // The integrand is flat to all orders at +-2, so the trapezoid rule converges
  // faster than any power of the step.
  static const double value = [] {
    constexpr int n = 4096;
    const double h = 4.0 / n;
    double s = 0.0;
    for (int i = 1; i < n; ++i) {
      const double p = profile(-2.0 + i * h);
      s += p * p;
    }
    return s * h;
  }();
  return value;
}

TGrid make_t_grid(double t_min, double t_max, double dt) {
  if (!(dt > 0.0)) throw DomainError("t grid step must be positive");
  if (!(t_max > t_min)) throw DomainError("empty t grid");
  TGrid g;
  g.t_min = t_min;
  g.dt = dt;
  g.count = static_cast<std::size_t>(std::ceil((t_max - t_min) / dt - 1e-9)) + 1;
  return g;
}

TGrid default_t_grid(const FrostmanMeasure& mu, const PhaseFunction& phi, std::span<const double> pins,
                     double eps) {
  if (mu.size() == 0) throw DomainError("empty measure");
  if (pins.empty() || pins.size() % mu.dim != 0) throw DomainError("pins must hold whole points");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  const std::size_t n_pins = pins.size() / mu.dim;
  for (std::size_t p = 0; p < n_pins; ++p) {
    const auto x = pins.subspan(p * mu.dim, mu.dim);
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double v = phi.value(x, mu.point(i));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (mu.representation == Representation::cell_uniform) {
    const double slack = mu.cell_side * std::sqrt(static_cast<double>(mu.dim));
    lo -= slack;
    hi += slack;
  }
  return make_t_grid(lo - 4.0 * eps, hi + 4.0 * eps, eps / 16.0);
}

double GriddedDensity::cell_volume() const { return std::pow(1.0 / side_n, dim); }

double GriddedDensity::mass() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * cell_volume();
}

GriddedDensity measure_mollify(const FrostmanMeasure& mu, double theta, int side_n) {
  if (side_n < 1) throw DomainError("grid side must be positive");
  const double h = 1.0 / side_n;
  if (h > theta / 4.0 + 1e-15) throw ResolutionError("grid step exceeds theta / 4");
  const Mollifier rho(theta);
  const int d = mu.dim;
  GriddedDensity g;
  g.dim = d;
  g.side_n = side_n;
  std::size_t total = 1;
  for (int k = 0; k < d; ++k) total *= static_cast<std::size_t>(side_n);
  g.values.assign(total, 0.0);

  const int half = static_cast<int>(std::ceil(2.0 * theta / h));
  const int width = 2 * half + 1;
  std::vector<int> index(d * width);
  std::vector<double> w(d * width);
  std::vector<int> odo(d);
  const double inv_vol = 1.0 / g.cell_volume();
  for (std::size_t a = 0; a < mu.size(); ++a) {
    const auto p = mu.point(a);
    for (int k = 0; k < d; ++k) {
      const auto base = static_cast<long>(std::floor(p[k] / h));
      double sum = 0.0;
      for (int j = 0; j < width; ++j) {
        const long node = base - half + j;
        const double v = rho(static_cast<double>(node) * h - p[k]);
        index[k * width + j] = static_cast<int>(((node % side_n) + side_n) % side_n);
        w[k * width + j] = v;
        sum += v;
      }
      for (int j = 0; j < width; ++j) w[k * width + j] /= sum;
    }
    std::fill(odo.begin(), odo.end(), 0);
    while (true) {
      std::size_t flat = 0;
      double prod = mu.weights[a] * inv_vol;
      for (int k = 0; k < d; ++k) {
        flat = flat * side_n + index[k * width + odo[k]];
        prod *= w[k * width + odo[k]];
      }
      g.values[flat] += prod;
      int k = d - 1;
      while (k >= 0 && ++odo[k] == width) odo[k--] = 0;
      if (k < 0) break;
    }
  }
  return g;
}

}  // namespace pinlab
