#include "pinlab/configs.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "pinlab/errors.hpp"
#include "pinlab/parallel.hpp"
#include "pinlab/rng.hpp"

namespace pinlab {

namespace {

using Vec = std::vector<double>;

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
};

// Mean and standard error of draw(s) over s in [0, samples), batch-partitioned.
template <class Draw>
std::pair<double, double> monte_carlo(std::size_t samples, Draw draw) {
  const std::size_t batches = (samples + kBatchSize - 1) / kBatchSize;
  std::vector<Moments> parts(batches);
  parallel_batches(batches, [&](std::size_t b) {
    Moments m;
    const std::size_t end = std::min(samples, (b + 1) * kBatchSize);
    for (std::size_t s = b * kBatchSize; s < end; ++s) {
      const double x = draw(s);
      m.sum += x;
      m.sum_sq += x * x;
    }
    parts[b] = m;
  });
  Moments total;
  for (const auto& p : parts) {
    total.sum += p.sum;
    total.sum_sq += p.sum_sq;
  }
  const auto n = static_cast<double>(samples);
  const double mean = total.sum / n;
  const double var = std::max(0.0, total.sum_sq / n - mean * mean);
  return {mean, samples > 1 ? std::sqrt(var / (n - 1.0)) : 0.0};
}

bool within(double v, double t, double eps) { return std::abs(v - t) <= eps; }

void check_eps(double eps) {
  if (!(eps > 0.0)) throw DomainError("epsilon must be positive");
}

// Per-item values reduced in index order.
double ordered_sum(std::size_t n, const std::function<double(std::size_t)>& item) {
  Vec parts(n);
  parallel_batches(n, [&](std::size_t i) { parts[i] = item(i); });
  double s = 0.0;
  for (double p : parts) s += p;
  return s;
}

}  // namespace

EdgeMap EdgeMap::from_pairs(int vertices, std::vector<std::pair<int, int>> pairs) {
  if (vertices < 2) throw DomainError("edge map needs at least two vertices");
  for (auto& [i, j] : pairs) {
    if (i == j) throw DomainError("edge map has a loop");
    if (i > j) std::swap(i, j);
    if (i < 1 || j > vertices) throw DomainError("edge endpoint out of range");
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  if (pairs.empty()) throw DomainError("edge map needs at least one edge");
  EdgeMap e;
  e.vertices = vertices;
  e.edges = std::move(pairs);
  return e;
}

EdgeMap EdgeMap::chain(int k) {
  std::vector<std::pair<int, int>> p;
  for (int i = 1; i <= k; ++i) p.emplace_back(i, i + 1);
  return from_pairs(k + 1, std::move(p));
}

bool EdgeMap::has_edge(int i, int j) const {
  if (i > j) std::swap(i, j);
  return std::binary_search(edges.begin(), edges.end(), std::make_pair(i, j));
}

EdgeMap pinned_lift(const EdgeMap& e) {
  const int k = e.vertices - 1;
  std::vector<std::pair<int, int>> out;
  for (const auto& [i, j] : e.edges) {
    out.emplace_back(i, j);
    if (j == k + 1) {
      out.emplace_back(k + 1, k + 1 + i);
    } else {
      out.emplace_back(k + 1 + i, k + 1 + j);
    }
  }
  return EdgeMap::from_pairs(2 * k + 1, std::move(out));
}

EdgeMap relabel(const EdgeMap& e, std::span<const int> perm) {
  if (static_cast<int>(perm.size()) != e.vertices) throw DomainError("permutation size mismatch");
  std::vector<int> seen(perm.begin(), perm.end());
  std::sort(seen.begin(), seen.end());
  for (int v = 1; v <= e.vertices; ++v) {
    if (seen[v - 1] != v) throw DomainError("not a permutation of the vertices");
  }
  std::vector<std::pair<int, int>> out;
  for (const auto& [i, j] : e.edges) out.emplace_back(perm[i - 1], perm[j - 1]);
  return EdgeMap::from_pairs(e.vertices, std::move(out));
}

EdgeMap pinned_lift(const EdgeMap& e, int pin) {
  if (pin < 1 || pin > e.vertices) throw DomainError("pin vertex out of range");
  std::vector<int> perm(e.vertices);
  std::iota(perm.begin(), perm.end(), 1);
  std::swap(perm[pin - 1], perm[e.vertices - 1]);
  return pinned_lift(relabel(e, perm));
}

void write_edge_map(std::ostream& out, const EdgeMap& e) {
  out << "vertices " << e.vertices << '\n';
  for (const auto& [i, j] : e.edges) out << i << ' ' << j << '\n';
}

EdgeMap read_edge_map(std::istream& in) {
  std::string word;
  int vertices = 0;
  if (!(in >> word >> vertices) || word != "vertices") throw DomainError("edge map header must be 'vertices n'");
  std::vector<std::pair<int, int>> pairs;
  int i = 0, j = 0;
  while (in >> i >> j) pairs.emplace_back(i, j);
  if (!in.eof()) throw DomainError("malformed edge map line");
  return EdgeMap::from_pairs(vertices, std::move(pairs));
}

ConfigCount config_count(const EdgeMap& e, std::span<const FrostmanMeasure* const> measures,
                         const PhaseFunction& phi, std::span<const double> t, double eps, std::size_t samples,
                         std::uint64_t seed, bool force_mc) {
  check_eps(eps);
  if (static_cast<int>(measures.size()) != e.vertices) throw DomainError("need one measure per vertex");
  if (t.size() != e.n()) throw DomainError("t assignment does not match the edges");
  const int v_count = e.vertices;
  const int d = phi.dim;
  for (const auto* m : measures) {
    if (m == nullptr || m->size() == 0 || m->dim != d) throw DomainError("invalid vertex measure");
  }
  // back_edges[v] lists (u, edge index) for edges (u, v) with u < v.
  std::vector<std::vector<std::pair<int, std::size_t>>> back_edges(v_count + 1);
  for (std::size_t q = 0; q < e.n(); ++q) back_edges[e.edges[q].second].emplace_back(e.edges[q].first, q);

  ConfigCount c;
  c.epsilon = eps;
  c.t.assign(t.begin(), t.end());
  const double norm = std::pow(eps, -static_cast<double>(e.n()));

  double tuples = 1.0;
  for (const auto* m : measures) tuples *= static_cast<double>(m->size());
  const bool exhaustive = !(force_mc && samples > 0) && tuples <= static_cast<double>(kExhaustiveTupleLimit);

  if (exhaustive) {
    const auto& first = *measures[0];
    const double total = ordered_sum(first.size(), [&](std::size_t a0) {
      std::vector<std::size_t> chosen(v_count + 1);
      chosen[1] = a0;
      double acc = 0.0;
      std::function<void(int, double)> visit = [&](int v, double w) {
        if (v > v_count) {
          acc += w;
          return;
        }
        const auto& mv = *measures[v - 1];
        for (std::size_t a = 0; a < mv.size(); ++a) {
          bool ok = true;
          for (const auto& [u, q] : back_edges[v]) {
            if (!within(phi.value(measures[u - 1]->point(chosen[u]), mv.point(a)), t[q], eps)) {
              ok = false;
              break;
            }
          }
          if (!ok) continue;
          chosen[v] = a;
          visit(v + 1, w * mv.weights[a]);
        }
      };
      visit(2, first.weights[a0]);
      return acc;
    });
    c.count_normalized = norm * total;
    c.exact = true;
    c.tuple_budget = static_cast<std::size_t>(tuples);
    return c;
  }
  if (samples == 0) throw ResourceError("tuple count exceeds the exhaustive limit and no samples were given");

  std::vector<MeasureSampler> samplers;
  for (const auto* m : measures) samplers.emplace_back(*m);
  const auto [mean, se] = monte_carlo(samples, [&](std::size_t s) {
    Vec pts(v_count * d);
    auto pt = [&](int v) { return std::span<double>(pts.data() + (v - 1) * d, d); };
    for (int v = 1; v <= v_count; ++v) {
      samplers[v - 1].draw(seed, streams::kTuples, s * v_count + (v - 1), pt(v));
    }
    for (std::size_t q = 0; q < e.n(); ++q) {
      if (!within(phi.value(pt(e.edges[q].first), pt(e.edges[q].second)), t[q], eps)) return 0.0;
    }
    return 1.0;
  });
  c.count_normalized = norm * mean;
  c.stderr_value = norm * se;
  c.tuple_budget = samples;
  return c;
}

ConfigCount hinge_count(const FrostmanMeasure& lambda, const FrostmanMeasure& mu, const PhaseFunction& phi,
                        double t, double eps, std::size_t samples, std::uint64_t seed) {
  const double tt[1] = {t};
  return chain_tuple_count(lambda, mu, phi, tt, eps, samples, seed);
}

ConfigCount hinge_count_integrated(const FrostmanMeasure& lambda, const FrostmanMeasure& mu,
                                   const PhaseFunction& phi, const std::function<double(double)>& beta,
                                   double eps, std::span<const double> t_nodes, std::size_t samples,
                                   std::uint64_t seed) {
  check_eps(eps);
  if (t_nodes.size() < 2) throw DomainError("need at least two t nodes");
  if (!std::is_sorted(t_nodes.begin(), t_nodes.end())) throw DomainError("t nodes must be ascending");
  if (lambda.size() == 0 || mu.size() == 0) throw DomainError("empty measure");
  const std::size_t nt = t_nodes.size();
  Vec bw(nt);
  for (std::size_t i = 0; i < nt; ++i) {
    const double left = i > 0 ? t_nodes[i] - t_nodes[i - 1] : 0.0;
    const double right = i + 1 < nt ? t_nodes[i + 1] - t_nodes[i] : 0.0;
    bw[i] = 0.5 * (left + right) * (beta ? beta(t_nodes[i]) : 1.0);
  }
  ConfigCount c;
  c.epsilon = eps;
  const double norm = 1.0 / (eps * eps);

  if (samples == 0) {
    const double total = ordered_sum(lambda.size(), [&](std::size_t a) {
      std::vector<std::pair<double, double>> dist(mu.size());
      for (std::size_t y = 0; y < mu.size(); ++y) dist[y] = {phi.value(lambda.point(a), mu.point(y)), mu.weights[y]};
      std::sort(dist.begin(), dist.end());
      Vec keys(dist.size()), prefix(dist.size() + 1, 0.0);
      for (std::size_t y = 0; y < dist.size(); ++y) {
        keys[y] = dist[y].first;
        prefix[y + 1] = prefix[y] + dist[y].second;
      }
      double acc = 0.0;
      for (std::size_t i = 0; i < nt; ++i) {
        if (bw[i] == 0.0) continue;
        const auto lo = std::lower_bound(keys.begin(), keys.end(), t_nodes[i] - eps) - keys.begin();
        const auto hi = std::upper_bound(keys.begin(), keys.end(), t_nodes[i] + eps) - keys.begin();
        const double m = prefix[hi] - prefix[lo];
        acc += bw[i] * m * m;
      }
      return lambda.weights[a] * acc;
    });
    c.count_normalized = norm * total;
    c.exact = true;
    c.tuple_budget = lambda.size() * mu.size();
    return c;
  }

  const MeasureSampler sl(lambda), sm(mu);
  const int d = phi.dim;
  const auto [mean, se] = monte_carlo(samples, [&](std::size_t s) {
    Vec x(d), y(d), z(d);
    sl.draw(seed, streams::kTuples, 3 * s, x);
    sm.draw(seed, streams::kTuples, 3 * s + 1, y);
    sm.draw(seed, streams::kTuples, 3 * s + 2, z);
    const double a = phi.value(x, y);
    const double b = phi.value(x, z);
    const double lo = std::max(a, b) - eps;
    const double hi = std::min(a, b) + eps;
    if (lo > hi) return 0.0;
    double acc = 0.0;
    for (auto i = std::lower_bound(t_nodes.begin(), t_nodes.end(), lo) - t_nodes.begin();
         i < static_cast<std::ptrdiff_t>(nt) && t_nodes[i] <= hi; ++i) {
      acc += bw[i];
    }
    return acc;
  });
  c.count_normalized = norm * mean;
  c.stderr_value = norm * se;
  c.tuple_budget = samples;
  return c;
}

ConfigCount chain_tuple_count(const FrostmanMeasure& lambda, const FrostmanMeasure& mu,
                              const PhaseFunction& phi, std::span<const double> t, double eps,
                              std::size_t samples, std::uint64_t seed) {
  check_eps(eps);
  const int k = static_cast<int>(t.size());
  if (k < 1) throw DomainError("chain length k must be >= 1");
  if (lambda.size() == 0 || mu.size() == 0) throw DomainError("empty measure");
  ConfigCount c;
  c.epsilon = eps;
  c.t.assign(t.begin(), t.end());
  const double norm = std::pow(eps, -2.0 * k);

  if (samples == 0) {
    const std::size_t n = mu.size();
    if (k > 1 && static_cast<double>(n) * n > 1e10) throw ResourceError("measure too large for exact chains");
    // tail[y] = mu^(k-j+1) mass of the chain continuing from y with gaps t_j..t_k.
    Vec tail(n, 1.0);
    for (int j = k; j >= 2; --j) {
      Vec next(n);
      parallel_batches(n, [&](std::size_t y) {
        double acc = 0.0;
        for (std::size_t z = 0; z < n; ++z) {
          if (within(phi.value(mu.point(y), mu.point(z)), t[j - 1], eps)) acc += mu.weights[z] * tail[z];
        }
        next[y] = acc;
      });
      tail.swap(next);
    }
    const double total = ordered_sum(lambda.size(), [&](std::size_t a) {
      double m = 0.0;
      for (std::size_t z = 0; z < n; ++z) {
        if (within(phi.value(lambda.point(a), mu.point(z)), t[0], eps)) m += mu.weights[z] * tail[z];
      }
      return lambda.weights[a] * m * m;
    });
    c.count_normalized = norm * total;
    c.exact = true;
    c.tuple_budget = lambda.size() * n;
    return c;
  }

  const MeasureSampler sl(lambda), sm(mu);
  const int d = phi.dim;
  const std::size_t per = 2 * k + 1;
  const auto [mean, se] = monte_carlo(samples, [&](std::size_t s) {
    Vec x(d), prev(d), cur(d);
    sl.draw(seed, streams::kTuples, per * s, x);
    for (int side = 0; side < 2; ++side) {
      prev = x;
      for (int j = 0; j < k; ++j) {
        sm.draw(seed, streams::kTuples, per * s + 1 + side * k + j, cur);
        if (!within(phi.value(prev, cur), t[j], eps)) return 0.0;
        prev.swap(cur);
      }
    }
    return 1.0;
  });
  c.count_normalized = norm * mean;
  c.stderr_value = norm * se;
  c.tuple_budget = samples;
  return c;
}

}  // namespace pinlab
