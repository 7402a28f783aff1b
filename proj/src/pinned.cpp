#include "pinlab/pinned.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pinlab/errors.hpp"
#include "pinlab/parallel.hpp"
#include "pinlab/rng.hpp"

namespace pinlab {

namespace {

using Vec = std::vector<double>;

void check_resolution(const Mollifier& rho, const TGrid& grid) {
  if (grid.count < 2) throw DomainError("t grid needs at least two nodes");
  if (grid.dt > rho.epsilon / 2.0) throw ResolutionError("t grid step exceeds eps / 2");
}

// Index range [lo, hi) of grid nodes inside the support of rho_eps(. - v).
std::pair<std::size_t, std::size_t> window(const TGrid& grid, double v, double radius) {
  const double a = std::ceil((v - radius - grid.t_min) / grid.dt);
  const double b = std::floor((v + radius - grid.t_min) / grid.dt) + 1.0;
  const double n = static_cast<double>(grid.count);
  const double lo = std::clamp(a, 0.0, n);
  const double hi = std::clamp(b, 0.0, n);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
}

// Runs fill(batch, buffer) for every batch with one zeroed buffer per batch and
// adds the buffers into total in batch order, so the sum is independent of the
// worker count. At most worker_count() buffers are alive at once.
template <class Fill>
void ordered_accumulate(std::size_t batches, std::size_t width, Vec& total, Fill fill) {
  const std::size_t group = std::max<unsigned>(1, worker_count());
  std::vector<Vec> buffers(std::min(group, batches), Vec(width));
  for (std::size_t first = 0; first < batches; first += group) {
    const std::size_t n = std::min(group, batches - first);
    parallel_batches(n, [&](std::size_t i) {
      std::fill(buffers[i].begin(), buffers[i].end(), 0.0);
      fill(first + i, buffers[i]);
    });
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < width; ++j) total[j] += buffers[i][j];
    }
  }
}

double pair_weight(const PairWeight& psi, std::span<const double> a, std::span<const double> b) {
  return psi ? psi(a, b) : 1.0;
}

std::size_t checked_power(std::size_t base, int k, std::size_t budget) {
  std::size_t r = 1;
  for (int i = 0; i < k; ++i) {
    if (r > budget / std::max<std::size_t>(base, 1)) throw ResourceError("chain grid exceeds budget");
    r *= base;
  }
  if (r > budget) throw ResourceError("chain grid exceeds budget");
  return r;
}

}  // namespace

PinnedDensity pinned_density(const FrostmanMeasure& mu, const PhaseFunction& phi, std::span<const double> pin,
                             const Mollifier& rho, const TGrid& grid, std::size_t mc_samples,
                             std::uint64_t seed) {
  if (mu.size() == 0) throw DomainError("empty measure");
  if (static_cast<int>(pin.size()) != mu.dim) throw DomainError("pin dimension mismatch");
  check_resolution(rho, grid);
  PinnedDensity nu;
  nu.pin.assign(pin.begin(), pin.end());
  nu.epsilon = rho.epsilon;
  nu.grid = grid;
  nu.mc_samples = mc_samples;
  nu.values.assign(grid.count, 0.0);
  nu.stderr_values.assign(grid.count, 0.0);
  const double radius = rho.support_radius();

  if (mc_samples == 0) {
    const std::size_t batches = (mu.size() + kBatchSize - 1) / kBatchSize;
    ordered_accumulate(batches, grid.count, nu.values, [&](std::size_t b, Vec& buf) {
      const std::size_t end = std::min(mu.size(), (b + 1) * kBatchSize);
      for (std::size_t a = b * kBatchSize; a < end; ++a) {
        const double v = phi.value(pin, mu.point(a));
        const auto [lo, hi] = window(grid, v, radius);
        for (std::size_t i = lo; i < hi; ++i) buf[i] += mu.weights[a] * rho(grid.node(i) - v);
      }
    });
    return nu;
  }

  const MeasureSampler sampler(mu);
  const std::size_t batches = (mc_samples + kBatchSize - 1) / kBatchSize;
  Vec sums(2 * grid.count, 0.0);
  ordered_accumulate(batches, 2 * grid.count, sums, [&](std::size_t b, Vec& buf) {
    Vec y(mu.dim);
    const std::size_t end = std::min(mc_samples, (b + 1) * kBatchSize);
    for (std::size_t s = b * kBatchSize; s < end; ++s) {
      sampler.draw(seed, streams::kSampling, s, y);
      const double v = phi.value(pin, y);
      const auto [lo, hi] = window(grid, v, radius);
      for (std::size_t i = lo; i < hi; ++i) {
        const double r = rho(grid.node(i) - v);
        buf[i] += r;
        buf[grid.count + i] += r * r;
      }
    }
  });
  const auto m = static_cast<double>(mc_samples);
  for (std::size_t i = 0; i < grid.count; ++i) {
    const double mean = sums[i] / m;
    nu.values[i] = mean;
    const double var = std::max(0.0, sums[grid.count + i] / m - mean * mean);
    nu.stderr_values[i] = mc_samples > 1 ? std::sqrt(var / (m - 1.0)) : 0.0;
  }
  return nu;
}

double ChainDensity::weight(std::size_t flat) const {
  double w = 1.0;
  for (int a = 0; a < k; ++a) {
    w *= grid.weight(flat % grid.count);
    flat /= grid.count;
  }
  return w;
}

ChainDensity chain_density(const FrostmanMeasure& mu, const PhaseFunction& phi, std::span<const double> pin,
                           int k, const Mollifier& rho, const TGrid& grid, std::size_t mc_samples,
                           std::uint64_t seed, const PairWeight& psi) {
  if (k < 1) throw DomainError("chain length k must be >= 1");
  if (mu.size() == 0) throw DomainError("empty measure");
  if (static_cast<int>(pin.size()) != mu.dim) throw DomainError("pin dimension mismatch");
  check_resolution(rho, grid);
  const std::size_t g = grid.count;
  const std::size_t nodes = checked_power(g, k, kChainGridBudget);
  const double radius = rho.support_radius();
  const int d = mu.dim;

  ChainDensity nu;
  nu.pin.assign(pin.begin(), pin.end());
  nu.k = k;
  nu.epsilon = rho.epsilon;
  nu.grid = grid;
  nu.mc_samples = mc_samples;
  nu.values.assign(nodes, 0.0);
  nu.stderr_values.assign(nodes, 0.0);

  if (mc_samples == 0) {
    // inner[y] holds sum over the tail (y_j, ..., y_k) of the chain starting at y,
    // as a function of (t_j, ..., t_k); built from the innermost link outwards.
    const std::size_t n = mu.size();
    Vec inner(n, 1.0);
    std::size_t tail = 1;
    for (int j = k; j >= 2; --j) {
      if (n > kChainGridBudget / (tail * g)) throw ResourceError("chain table exceeds budget");
      const std::size_t width = tail * g;
      Vec next(n * width, 0.0);
      parallel_batches(n, [&](std::size_t y) {
        double* row = next.data() + y * width;
        for (std::size_t z = 0; z < n; ++z) {
          const double v = phi.value(mu.point(y), mu.point(z));
          const auto [lo, hi] = window(grid, v, radius);
          if (lo >= hi) continue;
          const double wz = mu.weights[z] * pair_weight(psi, mu.point(y), mu.point(z));
          if (wz == 0.0) continue;
          const double* src = inner.data() + z * tail;
          for (std::size_t i = lo; i < hi; ++i) {
            const double c = wz * rho(grid.node(i) - v);
            double* dst = row + i * tail;
            for (std::size_t q = 0; q < tail; ++q) dst[q] += c * src[q];
          }
        }
      });
      inner.swap(next);
      tail = width;
    }
    for (std::size_t z = 0; z < n; ++z) {
      const double v = phi.value(pin, mu.point(z));
      const auto [lo, hi] = window(grid, v, radius);
      const double wz = mu.weights[z] * pair_weight(psi, pin, mu.point(z));
      if (wz == 0.0) continue;
      const double* src = inner.data() + z * tail;
      for (std::size_t i = lo; i < hi; ++i) {
        const double c = wz * rho(grid.node(i) - v);
        double* dst = nu.values.data() + i * tail;
        for (std::size_t q = 0; q < tail; ++q) dst[q] += c * src[q];
      }
    }
    return nu;
  }

  const MeasureSampler sampler(mu);
  const std::size_t batches = (mc_samples + kBatchSize - 1) / kBatchSize;
  Vec sums(2 * nodes, 0.0);
  ordered_accumulate(batches, 2 * nodes, sums, [&](std::size_t b, Vec& buf) {
    Vec pts((k + 1) * d);
    std::copy(pin.begin(), pin.end(), pts.begin());
    std::vector<std::size_t> lo(k), hi(k), odo(k);
    std::vector<Vec> link(k);
    const std::size_t end = std::min(mc_samples, (b + 1) * kBatchSize);
    for (std::size_t s = b * kBatchSize; s < end; ++s) {
      double scale = 1.0;
      bool empty = false;
      for (int j = 1; j <= k; ++j) {
        std::span<double> y(pts.data() + j * d, d);
        sampler.draw(seed, streams::kChain, s * k + (j - 1), y);
        std::span<const double> prev(pts.data() + (j - 1) * d, d);
        const double v = phi.value(prev, y);
        scale *= pair_weight(psi, prev, y);
        std::tie(lo[j - 1], hi[j - 1]) = window(grid, v, radius);
        if (lo[j - 1] >= hi[j - 1]) empty = true;
        link[j - 1].resize(hi[j - 1] - lo[j - 1]);
        for (std::size_t i = lo[j - 1]; i < hi[j - 1]; ++i) link[j - 1][i - lo[j - 1]] = rho(grid.node(i) - v);
      }
      if (empty || scale == 0.0) continue;
      for (int a = 0; a < k; ++a) odo[a] = lo[a];
      while (true) {
        std::size_t flat = 0;
        double val = scale;
        for (int a = 0; a < k; ++a) {
          flat = flat * g + odo[a];
          val *= link[a][odo[a] - lo[a]];
        }
        buf[flat] += val;
        buf[nodes + flat] += val * val;
        int a = k - 1;
        while (a >= 0 && ++odo[a] == hi[a]) {
          odo[a] = lo[a];
          --a;
        }
        if (a < 0) break;
      }
    }
  });
  const auto m = static_cast<double>(mc_samples);
  for (std::size_t i = 0; i < nodes; ++i) {
    const double mean = sums[i] / m;
    nu.values[i] = mean;
    const double var = std::max(0.0, sums[nodes + i] / m - mean * mean);
    nu.stderr_values[i] = mc_samples > 1 ? std::sqrt(var / (m - 1.0)) : 0.0;
  }
  return nu;
}

namespace {

double run_recursion(std::span<const double> points, std::span<const double> weights, int d,
                     const PhaseFunction& phi, std::span<const double> pin, int k, const Mollifier& rho,
                     std::span<const double> t, const PairWeight& psi) {
  const std::size_t n = weights.size();
  auto pt = [&](std::size_t i) { return points.subspan(i * d, d); };
  Vec g(n, 1.0);
  for (int j = k; j >= 2; --j) {
    Vec next(n, 0.0);
    const double tj = t[j - 1];
    parallel_batches(n, [&](std::size_t y) {
      double acc = 0.0;
      for (std::size_t z = 0; z < n; ++z) {
        const double r = rho(tj - phi.value(pt(y), pt(z)));
        if (r == 0.0) continue;
        acc += weights[z] * r * pair_weight(psi, pt(y), pt(z)) * g[z];
      }
      next[y] = acc;
    });
    g.swap(next);
  }
  double acc = 0.0;
  for (std::size_t z = 0; z < n; ++z) {
    const double r = rho(t[0] - phi.value(pin, pt(z)));
    if (r == 0.0) continue;
    acc += weights[z] * r * pair_weight(psi, pin, pt(z)) * g[z];
  }
  return acc;
}

}  // namespace

Estimate composed_operator_density(const FrostmanMeasure& mu, const PhaseFunction& phi,
                                   std::span<const double> pin, int k, const Mollifier& rho,
                                   std::span<const double> t, std::size_t mc_samples, std::uint64_t seed,
                                   const PairWeight& psi) {
  if (k < 1) throw DomainError("chain length k must be >= 1");
  if (static_cast<int>(t.size()) != k) throw DomainError("t must have k entries");
  if (mu.size() == 0) throw DomainError("empty measure");
  if (static_cast<int>(pin.size()) != mu.dim) throw DomainError("pin dimension mismatch");
  if (mc_samples == 0) {
    return {run_recursion(mu.points, mu.weights, mu.dim, phi, pin, k, rho, t, psi), 0.0};
  }
  constexpr std::size_t groups = 8;
  const std::size_t per_group = mc_samples / groups;
  if (per_group < 2) throw DomainError("need at least 16 samples for the grouped estimate");
  const MeasureSampler sampler(mu);
  const int d = mu.dim;
  Vec estimates(groups);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    Vec pts(per_group * d);
    const Vec w(per_group, 1.0 / static_cast<double>(per_group));
    for (std::size_t s = 0; s < per_group; ++s) {
      sampler.draw(seed, streams::kTuples, gi * per_group + s, std::span<double>(pts.data() + s * d, d));
    }
    estimates[gi] = run_recursion(pts, w, d, phi, pin, k, rho, t, psi);
  }
  const double mean = std::accumulate(estimates.begin(), estimates.end(), 0.0) / groups;
  double var = 0.0;
  for (double e : estimates) var += (e - mean) * (e - mean);
  var /= (groups - 1);
  return {mean, std::sqrt(var / groups)};
}

double density_mass(const PinnedDensity& nu) {
  const auto& v = nu.values;
  if (v.empty()) throw DomainError("empty density");
  if (v.front() > 1e-9 || v.back() > 1e-9) throw CoverageError("pinned density leaks past the t grid");
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += nu.grid.weight(i) * v[i];
  return s;
}

double density_mass(const ChainDensity& nu) {
  const std::size_t g = nu.grid.count;
  double s = 0.0;
  for (std::size_t i = 0; i < nu.values.size(); ++i) {
    std::size_t rem = i;
    bool boundary = false;
    for (int a = 0; a < nu.k; ++a) {
      const std::size_t c = rem % g;
      rem /= g;
      if (c == 0 || c + 1 == g) boundary = true;
    }
    if (boundary && nu.values[i] > 1e-9) throw CoverageError("chain density leaks past the t grid");
    s += nu.weight(i) * nu.values[i];
  }
  return s;
}

double l2_energy(std::span<const double> pin_weights, std::span<const PinnedDensity> densities,
                 const TWeight& beta) {
  if (pin_weights.size() != densities.size()) throw DomainError("pin weights and densities differ in count");
  if (densities.empty()) return 0.0;
  const auto& grid = densities.front().grid;
  Vec b(grid.count);
  for (std::size_t i = 0; i < grid.count; ++i) b[i] = grid.weight(i) * (beta ? beta(grid.node(i)) : 1.0);
  double total = 0.0;
  for (std::size_t p = 0; p < densities.size(); ++p) {
    const auto& nu = densities[p];
    if (!(nu.grid == grid) || nu.epsilon != densities.front().epsilon) {
      throw DomainError("densities do not share grid and epsilon");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < grid.count; ++i) s += b[i] * nu.values[i] * nu.values[i];
    total += pin_weights[p] * s;
  }
  return total;
}

CsBound cs_lower_bound(const PinnedDensity& nu, const TWeight& beta) {
  double mass = 0.0, weighted = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < nu.values.size(); ++i) {
    const double w = nu.grid.weight(i);
    const double b = beta ? beta(nu.grid.node(i)) : 1.0;
    mass += w * nu.values[i];
    weighted += w * b * nu.values[i];
    energy += w * b * nu.values[i] * nu.values[i];
  }
  if (std::abs(mass - 1.0) > 0.05) throw DomainError("density mass is not within 5% of 1");
  if (energy <= 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {weighted * weighted / energy, false};
}

double support_measure(const PinnedDensity& nu, double threshold) {
  double s = 0.0;
  for (std::size_t i = 0; i < nu.values.size(); ++i) {
    if (nu.values[i] > threshold) s += nu.grid.weight(i);
  }
  return s;
}

}  // namespace pinlab
