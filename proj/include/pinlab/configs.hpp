#pragma once

// Epsilon-neighborhood counts of hinges, chains and general edge-map configurations,
// and the single-pin lift of an edge map.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "pinlab/fractal.hpp"
#include "pinlab/phase.hpp"

namespace pinlab {

/// Graph on vertices 1..vertices. Edges are stored as (i, j) with i < j, sorted.
struct EdgeMap {
  int vertices = 0;
  std::vector<std::pair<int, int>> edges;

  static EdgeMap from_pairs(int vertices, std::vector<std::pair<int, int>> pairs);
  static EdgeMap chain(int k);  // 1-2, 2-3, ..., k-(k+1)
  std::size_t n() const { return edges.size(); }
  bool has_edge(int i, int j) const;
  bool operator==(const EdgeMap& o) const { return vertices == o.vertices && edges == o.edges; }
};

/// Lift with the pin at vertex k+1 = vertices: 2k+1 vertices, twice the edges.
EdgeMap pinned_lift(const EdgeMap& e);
/// Swaps `pin` with the last vertex, then lifts.
EdgeMap pinned_lift(const EdgeMap& e, int pin);

/// perm[v-1] is the new label of vertex v.
EdgeMap relabel(const EdgeMap& e, std::span<const int> perm);

void write_edge_map(std::ostream& out, const EdgeMap& e);
EdgeMap read_edge_map(std::istream& in);

struct ConfigCount {
  double epsilon = 0.0;
  std::vector<double> t;           // one gap per edge, in edge order
  double count_normalized = 0.0;   // eps^-n times the event mass
  double stderr_value = 0.0;
  std::size_t tuple_budget = 0;    // tuples enumerated or sampled
  bool exact = false;
};

inline constexpr std::size_t kExhaustiveTupleLimit = 10'000'000;

/// Event: |phi(x^i, x^j) - t_ij| <= eps for every edge. Exhaustive enumeration when
/// the tuple count is at most kExhaustiveTupleLimit, Monte Carlo with `samples`
/// draws otherwise (ResourceError if samples == 0). samples > 0 with force_mc set
/// samples even when enumeration is possible.
ConfigCount config_count(const EdgeMap& e, std::span<const FrostmanMeasure* const> measures,
                         const PhaseFunction& phi, std::span<const double> t, double eps,
                         std::size_t samples, std::uint64_t seed, bool force_mc = false);

/// eps^-2 (lambda x mu x mu) of the hinge event. samples == 0 uses the exact
/// factorization sum_x lambda(x) mu(annulus_x)^2.
ConfigCount hinge_count(const FrostmanMeasure& lambda, const FrostmanMeasure& mu, const PhaseFunction& phi,
                        double t, double eps, std::size_t samples = 0, std::uint64_t seed = 0);

/// Trapezoid integral over t_nodes of beta(t) * hinge_count(t). All nodes share
/// the same tuples (common random numbers in Monte Carlo mode).
ConfigCount hinge_count_integrated(const FrostmanMeasure& lambda, const FrostmanMeasure& mu,
                                   const PhaseFunction& phi, const std::function<double(double)>& beta,
                                   double eps, std::span<const double> t_nodes, std::size_t samples = 0,
                                   std::uint64_t seed = 0);

/// eps^-2k mass of two k-chains sharing their first point (drawn from lambda).
/// samples == 0 uses the exact factorization through single-chain masses.
ConfigCount chain_tuple_count(const FrostmanMeasure& lambda, const FrostmanMeasure& mu,
                              const PhaseFunction& phi, std::span<const double> t, double eps,
                              std::size_t samples = 0, std::uint64_t seed = 0);

}  // namespace pinlab
