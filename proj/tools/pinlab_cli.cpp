// pinlab command line: every subcommand reads a config file, writes CSV tables,
// summary.json and manifest.json into the output directory.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pinlab/configs.hpp"
#include "pinlab/errors.hpp"
#include "pinlab/experiment.hpp"
#include "pinlab/fractal.hpp"
#include "pinlab/parallel.hpp"
#include "pinlab/phase.hpp"
#include "pinlab/pinned.hpp"
#include "pinlab/rng.hpp"
#include "pinlab/spectral.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace pinlab;

namespace {

constexpr const char* kVersion = "pinlab 0.1.0";

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json jnum(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw ResourceError("cannot write " + path.string());
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

double median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Run {
  std::string command;
  ExperimentConfig cfg;
  std::uint64_t seed = 0;
  fs::path out;
  std::vector<std::string> outputs;

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
};

std::vector<double> t_nodes(const TGrid& g) {
  std::vector<double> v(g.count);
  for (std::size_t i = 0; i < g.count; ++i) v[i] = g.node(i);
  return v;
}

std::function<double(double)> beta_of(const ExperimentConfig& cfg, const PhaseFunction& phi) {
  if (cfg.beta_range.empty()) return [](double) { return 1.0; };
  const auto cut = build_cutoffs(phi, cfg.neighborhood_radius, cfg.beta_range[0], cfg.beta_range[1]);
  return [cut](double t) { return cut.beta(t); };
}

TWeight tweight_of(const ExperimentConfig& cfg, const PhaseFunction& phi) {
  if (cfg.beta_range.empty()) return nullptr;
  return beta_of(cfg, phi);
}

// ---------------------------------------------------------------- gen

json cmd_gen(Run& run) {
  const auto& cfg = run.cfg;
  const auto phi = PhaseFunction::parse(cfg.phase, cfg.dim);
  const auto built = build_measure(cfg, cfg.target_dims.at(0));
  const auto& mu = built.measure;
  {
    std::ofstream f(run.file("measure.csv"));
    write_measure_csv(f, mu);
  }
  json s;
  s["family"] = cfg.family;
  s["atoms"] = mu.size();
  s["total_mass"] = mu.total_mass();
  s["exponent"] = mu.exponent;
  s["frostman_constant"] = jnum(mu.frostman_constant);
  std::vector<double> scales;
  if (built.fractal) {
    const auto& fr = *built.fractal;
    std::ofstream f(run.file("cells.txt"));
    write_cells(f, fr);
    s["level"] = fr.level;
    s["cells"] = fr.size();
    s["target_dim"] = fr.target_dim;
    s["box_dimension"] = fr.level >= 3 ? jnum(box_dimension_estimate(fr)) : json(nullptr);
    for (int l = 1; l <= fr.level; ++l) scales.push_back(fr.cell_side(l));
  } else {
    for (int j = 1; j <= 5; ++j) scales.push_back(std::ldexp(1.0, -j));
  }
  try {
    const auto fit = frostman_exponent_fit(mu, scales, 256, run.seed);
    s["fitted_exponent"] = jnum(fit.exponent);
    s["fitted_constant"] = jnum(fit.constant);
    CsvWriter csv(run.file("frostman_fit.csv"), {"scale", "sup_mass"});
    for (std::size_t i = 0; i < fit.scales.size(); ++i) csv.row({num(fit.scales[i]), num(fit.sup_mass[i])});
  } catch (const DomainError& e) {
    s["fitted_exponent"] = nullptr;
    s["fit_error"] = e.what();
  }
  const auto nd = nondegeneracy_scan(phi, mu, 2000, kForbiddenTolerance, run.seed);
  s["phase"] = phi.name();
  s["forbidden_mass_estimate"] = nd.forbidden_mass_estimate;
  s["min_grad_norm"] = jnum(nd.min_grad_norm);
  s["min_ma_det_abs"] = jnum(nd.min_ma_det_abs);
  return s;
}

// ---------------------------------------------------------------- pinned

json cmd_pinned(Run& run) {
  const auto& cfg = run.cfg;
  const auto phi = PhaseFunction::parse(cfg.phase, cfg.dim);
  const auto built = build_measure(cfg, cfg.target_dims.at(0));
  const auto& mu = built.measure;
  const auto pins = draw_pins(cfg, mu, run.seed);
  const int d = mu.dim;
  const std::size_t n_pins = pins.size() / d;
  const TWeight beta = tweight_of(cfg, phi);

  CsvWriter dens(run.file("pinned_density.csv"), {"pin", "eps", "t", "value", "stderr"});
  std::vector<std::string> head{"pin", "eps"};
  for (int i = 1; i <= d; ++i) head.push_back("x_" + std::to_string(i));
  for (const char* h : {"mass", "cs_lower_bound", "cs_infinite", "support_measure"}) head.emplace_back(h);
  CsvWriter summ(run.file("pinned_summary.csv"), head);

  json per_eps = json::array();
  for (double eps : cfg.eps) {
    const TGrid grid = experiment_t_grid(cfg, mu, phi, pins, eps);
    const Mollifier rho(eps);
    std::vector<PinnedDensity> all;
    std::vector<double> cs, sup, mass;
    for (std::size_t p = 0; p < n_pins; ++p) {
      const auto pin = std::span<const double>(pins).subspan(p * d, d);
      auto nu = pinned_density(mu, phi, pin, rho, grid, cfg.mc_samples, run.seed + p);
      for (std::size_t i = 0; i < grid.count; ++i) {
        dens.row({std::to_string(p), num(eps), num(grid.node(i)), num(nu.values[i]), num(nu.stderr_values[i])});
      }
      const double m = density_mass(nu);
      const auto b = cs_lower_bound(nu, beta);
      const double su = support_measure(nu);
      std::vector<std::string> row{std::to_string(p), num(eps)};
      for (double x : pin) row.push_back(num(x));
      row.insert(row.end(), {num(m), num(b.value), b.infinite ? "1" : "0", num(su)});
      summ.row(row);
      cs.push_back(b.infinite ? std::numeric_limits<double>::infinity() : b.value);
      sup.push_back(su);
      mass.push_back(m);
      all.push_back(std::move(nu));
    }
    const std::vector<double> w(n_pins, 1.0 / static_cast<double>(n_pins));
    json e;
    e["eps"] = eps;
    e["grid_nodes"] = grid.count;
    e["median_cs_lower_bound"] = jnum(median(cs));
    e["median_support_measure"] = jnum(median(sup));
    e["max_mass_error"] = std::accumulate(mass.begin(), mass.end(), 0.0,
                                          [](double a, double m) { return std::max(a, std::abs(m - 1.0)); });
    e["l2_energy"] = l2_energy(w, all, beta);
    per_eps.push_back(e);
  }
  json s;
  s["pins"] = n_pins;
  s["mode"] = cfg.mc_samples ? "monte_carlo" : "exact";
  s["per_eps"] = per_eps;
  return s;
}

// ---------------------------------------------------------------- chain

json cmd_chain(Run& run) {
  const auto& cfg = run.cfg;
  if (cfg.k < 1) throw ConfigError("k must be at least 1");
  const auto phi = PhaseFunction::parse(cfg.phase, cfg.dim);
  const auto built = build_measure(cfg, cfg.target_dims.at(0));
  const auto& mu = built.measure;
  const auto pins = draw_pins(cfg, mu, run.seed);
  const int d = mu.dim;
  const auto pin = std::span<const double>(pins).subspan(0, d);
  const double eps = cfg.eps.at(0);
  // later links start anywhere on the support, so every atom acts as a pin for the range
  const TGrid grid = experiment_t_grid(cfg, mu, phi, mu.points, eps);
  const Mollifier rho(eps);
  const auto nu = chain_density(mu, phi, pin, cfg.k, rho, grid, cfg.mc_samples, run.seed);

  std::vector<std::string> head;
  for (int j = 1; j <= cfg.k; ++j) head.push_back("t_" + std::to_string(j));
  head.emplace_back("value");
  head.emplace_back("stderr");
  CsvWriter csv(run.file("chain_density.csv"), head);
  std::size_t argmax = 0;
  std::vector<std::size_t> idx(cfg.k);
  for (std::size_t f = 0; f < nu.node_count(); ++f) {
    if (nu.values[f] > nu.values[argmax]) argmax = f;
    if (nu.values[f] == 0.0) continue;
    std::size_t r = f;
    for (int j = cfg.k - 1; j >= 0; --j) {
      idx[j] = r % grid.count;
      r /= grid.count;
    }
    std::vector<std::string> row;
    for (int j = 0; j < cfg.k; ++j) row.push_back(num(grid.node(idx[j])));
    row.push_back(num(nu.values[f]));
    row.push_back(num(nu.stderr_values[f]));
    csv.row(row);
  }
  json s;
  s["k"] = cfg.k;
  s["eps"] = eps;
  s["mode"] = cfg.mc_samples ? "monte_carlo" : "exact";
  s["pin"] = std::vector<double>(pin.begin(), pin.end());
  s["grid_nodes_per_axis"] = grid.count;
  s["mass"] = density_mass(nu);
  s["max_value"] = nu.values[argmax];
  std::vector<double> t(cfg.k);
  std::size_t r = argmax;
  for (int j = cfg.k - 1; j >= 0; --j) {
    t[j] = grid.node(r % grid.count);
    r /= grid.count;
  }
  const auto comp = composed_operator_density(mu, phi, pin, cfg.k, rho, t, cfg.mc_samples, run.seed);
  s["composed_at_max"] = comp.value;
  s["composed_stderr"] = comp.stderr_value;
  s["composed_abs_diff"] = std::abs(comp.value - nu.values[argmax]);
  return s;
}

// ---------------------------------------------------------------- hinge

json cmd_hinge(Run& run) {
  const auto& cfg = run.cfg;
  const auto phi = PhaseFunction::parse(cfg.phase, cfg.dim);
  const auto built = build_measure(cfg, cfg.target_dims.at(0));
  const auto& mu = built.measure;
  const auto pins = draw_pins(cfg, mu, run.seed);
  const std::size_t n_pins = pins.size() / mu.dim;
  const auto lambda = point_cloud_measure(mu.dim, pins, std::vector<double>(n_pins, 1.0), mu.exponent);
  const auto beta = beta_of(cfg, phi);

  CsvWriter point(run.file("hinge.csv"), {"eps", "t", "count", "stderr", "exact"});
  CsvWriter integ(run.file("hinge_integrated.csv"), {"eps", "value", "stderr", "exact", "nodes"});
  json rows = json::array();
  std::vector<double> values;
  for (double eps : cfg.eps) {
    for (double t : cfg.t) {
      const auto c = hinge_count(lambda, mu, phi, t, eps, cfg.mc_samples, run.seed);
      point.row({num(eps), num(t), num(c.count_normalized), num(c.stderr_value), c.exact ? "1" : "0"});
    }
    const auto nodes = t_nodes(experiment_t_grid(cfg, mu, phi, pins, eps));
    const auto c = hinge_count_integrated(lambda, mu, phi, beta, eps, nodes, cfg.mc_samples, run.seed);
    integ.row({num(eps), num(c.count_normalized), num(c.stderr_value), c.exact ? "1" : "0",
               std::to_string(nodes.size())});
    rows.push_back({{"eps", eps}, {"integrated", c.count_normalized}, {"stderr", c.stderr_value}});
    values.push_back(c.count_normalized);
  }
  json s;
  s["pins"] = n_pins;
  s["integrated"] = rows;
  if (!values.empty()) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    s["max_over_min"] = jnum(*hi / *lo);
  }
  return s;
}

// ---------------------------------------------------------------- config-count

json cmd_config_count(Run& run) {
  const auto& cfg = run.cfg;
  const auto phi = PhaseFunction::parse(cfg.phase, cfg.dim);
  const auto built = build_measure(cfg, cfg.target_dims.at(0));
  const auto& mu = built.measure;
  const EdgeMap base = EdgeMap::from_pairs(cfg.vertices, parse_edges(cfg.edges));
  EdgeMap e = base;
  std::vector<double> t = cfg.t;
  if (t.size() == 1 && base.n() > 1) t.assign(base.n(), t[0]);
  if (t.size() != base.n()) throw ConfigError("t needs one value per edge (or a single value)");
  if (cfg.pin_vertex != 0) {
    const int k1 = base.vertices;
    if (cfg.pin_vertex < 1 || cfg.pin_vertex > k1) throw ConfigError("pin_vertex out of range");
    std::vector<int> perm(k1);
    std::iota(perm.begin(), perm.end(), 1);
    std::swap(perm[cfg.pin_vertex - 1], perm[k1 - 1]);
    const EdgeMap moved = relabel(base, perm);
    // gap of each relabelled edge, then of both copies in the lift
    std::vector<double> t_moved(moved.n());
    for (std::size_t i = 0; i < base.n(); ++i) {
      int a = perm[base.edges[i].first - 1], b = perm[base.edges[i].second - 1];
      if (a > b) std::swap(a, b);
      const auto pos = std::find(moved.edges.begin(), moved.edges.end(), std::make_pair(a, b)) - moved.edges.begin();
      t_moved[pos] = t[i];
    }
    e = pinned_lift(base, cfg.pin_vertex);
    auto origin = [k1](int v) { return v > k1 ? v - k1 : v; };
    std::vector<double> t_lift(e.n());
    for (std::size_t i = 0; i < e.n(); ++i) {
      int a = origin(e.edges[i].first), b = origin(e.edges[i].second);
      if (a > b) std::swap(a, b);
      const auto pos = std::find(moved.edges.begin(), moved.edges.end(), std::make_pair(a, b)) - moved.edges.begin();
      t_lift[i] = t_moved.at(pos);
    }
    t = std::move(t_lift);
  }
  {
    std::ofstream f(run.file("edges.txt"));
    write_edge_map(f, e);
  }
  std::vector<const FrostmanMeasure*> measures(e.vertices, &mu);
  CsvWriter csv(run.file("config_count.csv"), {"eps", "count", "stderr", "exact", "tuples"});
  json rows = json::array();
  for (double eps : cfg.eps) {
    const auto c = config_count(e, measures, phi, t, eps, cfg.mc_samples, run.seed);
    csv.row({num(eps), num(c.count_normalized), num(c.stderr_value), c.exact ? "1" : "0",
             std::to_string(c.tuple_budget)});
    rows.push_back({{"eps", eps}, {"count", c.count_normalized}, {"stderr", c.stderr_value}, {"exact", c.exact}});
  }
  json s;
  s["vertices"] = e.vertices;
  s["edges"] = e.n();
  s["lifted"] = cfg.pin_vertex != 0;
  s["counts"] = rows;
  return s;
}

// ---------------------------------------------------------------- fourier

bool wants(const ExperimentConfig& cfg, const char* name) { return cfg.check == "all" || cfg.check == name; }

const char* shell_verdict_name(ShellVerdict v) {
  switch (v) {
    case ShellVerdict::converging: return "converging";
    case ShellVerdict::growing: return "growing";
    default: return "undecided";
  }
}

json fourier_lp(Run& run) {
  const auto& cfg = run.cfg;
  const int n = cfg.side_n;
  const int j_max = static_cast<int>(std::lround(std::log2(n))) - 1;
  const auto part = make_lp_partition(j_max);
  const double r_max = std::ldexp(1.0, j_max - 1);
  CsvWriter csv(run.file("fourier_lp.csv"), {"shell_or_eps", "value", "reference", "pass"});
  auto g = SpectralGrid::zeros(cfg.dim, n);
  double worst = 0.0;
  std::vector<double> shell_err(j_max + 1, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = frequency_norm(g, i);
    if (r > r_max) continue;
    const double err = std::abs(part.partition_sum(r) - 1.0);
    const int shell = r < 1.0 ? 0 : std::min(j_max, 1 + static_cast<int>(std::floor(std::log2(r))));
    shell_err[shell] = std::max(shell_err[shell], err);
    worst = std::max(worst, err);
  }
  for (int j = 0; j <= j_max; ++j) {
    csv.row({num(j == 0 ? 0.0 : std::ldexp(1.0, j - 1)), num(shell_err[j]), "0", shell_err[j] <= 1e-10 ? "1" : "0"});
  }
  // the projections of a random field add back up to the field
  const auto fields = band_limited_fields(cfg.dim, n, 1, r_max, run.seed);
  auto sum = SpectralGrid::zeros(cfg.dim, n);
  for (int j = 0; j <= j_max; ++j) {
    const auto pj = lp_project(fields[0], part, j);
    for (std::size_t i = 0; i < sum.size(); ++i) sum.values[i] += pj.values[i];
  }
  double diff = 0.0;
  for (std::size_t i = 0; i < sum.size(); ++i) diff += std::norm(sum.values[i] - fields[0].values[i]);
  json s;
  s["j_max"] = j_max;
  s["max_partition_error"] = worst;
  s["reconstruction_error"] = std::sqrt(diff / l2_norm_squared(fields[0]));
  return s;
}

json fourier_surface(Run& run) {
  const auto& cfg = run.cfg;
  const auto rep = surface_measure_decay(cfg.dim, cfg.side_n);
  const double expect = -(cfg.dim - 1) / 2.0;
  CsvWriter csv(run.file("fourier_surface.csv"), {"shell_or_eps", "value", "reference", "pass"});
  const double c0 = rep.shell_lo.empty() ? 0.0 : rep.shell_max[0] / std::pow(rep.shell_lo[0], expect);
  for (std::size_t i = 0; i < rep.shell_lo.size(); ++i) {
    const double ref = c0 * std::pow(rep.shell_lo[i], expect);
    csv.row({num(rep.shell_lo[i]), num(rep.shell_max[i]), num(ref), rep.shell_max[i] <= 2.0 * ref ? "1" : "0"});
  }
  json s;
  s["slope"] = jnum(rep.slope);
  s["expected_slope"] = expect;
  s["sigma_hat_zero"] = rep.sigma_hat_zero;
  s["flagged"] = rep.flagged;
  return s;
}

json fourier_energy(Run& run, const FrostmanMeasure& lambda) {
  const auto& cfg = run.cfg;
  const auto rep = energy_integral(lambda, cfg.gamma, cfg.side_n);
  CsvWriter csv(run.file("fourier_energy.csv"), {"shell_or_eps", "value", "reference", "pass"});
  for (std::size_t i = 0; i < rep.shell_radius.size(); ++i) {
    const double rel = std::abs(rep.shell_partial[i] - rep.kernel_value) / rep.kernel_value;
    csv.row({num(rep.shell_radius[i]), num(rep.shell_partial[i]), num(rep.kernel_value), rel <= 0.1 ? "1" : "0"});
  }
  json s;
  s["gamma"] = cfg.gamma;
  s["fourier_value"] = rep.fourier_value;
  s["kernel_value"] = jnum(rep.kernel_value);
  s["verdict"] = shell_verdict_name(rep.verdict);
  s["last_two_ratio"] = jnum(rep.last_two_ratio);
  s["last_first_ratio"] = jnum(rep.last_first_ratio);
  return s;
}

json fourier_schur(Run& run, const FrostmanMeasure& lambda) {
  const auto& cfg = run.cfg;
  const auto rep = schur_kernel_sup(lambda, cfg.gamma);
  CsvWriter csv(run.file("fourier_schur.csv"), {"shell_or_eps", "value", "reference", "pass"});
  for (std::size_t i = 0; i < rep.direct.size(); ++i) {
    csv.row({std::to_string(i), num(rep.direct[i]), num(rep.majorant[i]), rep.direct[i] <= rep.majorant[i] ? "1" : "0"});
  }
  json s;
  s["gamma"] = cfg.gamma;
  s["sup_direct"] = rep.sup_direct;
  s["sup_majorant"] = rep.sup_majorant;
  s["scale"] = rep.scale;
  return s;
}

json fourier_radon(Run& run) {
  const auto& cfg = run.cfg;
  const auto phi = PhaseFunction::parse(cfg.phase, cfg.dim);
  const double t = cfg.t.at(0);
  const auto cut = build_cutoffs(phi, cfg.neighborhood_radius, t - 0.05, t + 0.05);
  const auto fields = band_limited_fields(cfg.dim, cfg.side_n, 5, 2.0, run.seed);
  const double gamma = (cfg.dim - 1) / 2.0;
  const auto rep = radon_sobolev_ratio(phi, &cut, t, cfg.eps, fields, gamma);
  std::vector<double> lo(fields.size(), std::numeric_limits<double>::infinity());
  for (const auto& r : rep.rows) lo[r.field] = std::min(lo[r.field], r.ratio);
  CsvWriter csv(run.file("fourier_radon.csv"), {"shell_or_eps", "value", "reference", "pass"});
  for (const auto& r : rep.rows) {
    csv.row({num(r.eps), num(r.ratio), num(lo[r.field]), r.ratio <= 2.0 * lo[r.field] ? "1" : "0"});
  }
  json s;
  s["t"] = t;
  s["sobolev_order"] = gamma;
  s["max_over_min"] = rep.max_over_min;
  s["worst"] = rep.worst;
  return s;
}

json fourier_oscillatory(Run& run) {
  const auto& cfg = run.cfg;
  const auto phi = PhaseFunction::parse(cfg.phase, 2);
  const double u = -1.0 / std::sqrt(2.0);
  auto vec = [u](double m) { return std::vector<double>{m * u, m * u}; };
  const auto ref = oscillatory_G(phi, nullptr, 4.0, vec(4.0), vec(4.0), 0.0, cfg.quad_n);
  const double ref_abs = std::abs(ref.value);
  struct Case {
    double s, xi, zeta;
  };
  const Case cases[] = {{1, 32, 32}, {2, 32, 32}, {32, 2, 2}, {32, 1, 1}, {1, 16, 16}, {16, 1, 1}};
  CsvWriter csv(run.file("fourier_oscillatory.csv"), {"shell_or_eps", "value", "reference", "pass"});
  json rows = json::array();
  double worst = 0.0;
  for (const auto& c : cases) {
    const auto g = oscillatory_G(phi, nullptr, c.s, vec(c.xi), vec(c.zeta), 0.0, cfg.quad_n);
    const double ratio = std::abs(g.value) / ref_abs;
    worst = std::max(worst, ratio);
    csv.row({num(c.s), num(std::abs(g.value)), num(ref_abs), ratio <= 0.1 && !g.unresolved ? "1" : "0"});
    rows.push_back({{"s", c.s}, {"xi", c.xi}, {"zeta", c.zeta}, {"ratio", ratio}, {"unresolved", g.unresolved}});
  }
  json s;
  s["quad_n"] = cfg.quad_n;
  s["reference_modulus"] = ref_abs;
  s["worst_ratio"] = worst;
  s["cases"] = rows;
  return s;
}

json cmd_fourier(Run& run) {
  const auto& cfg = run.cfg;
  static const char* kChecks[] = {"all", "lp", "surface", "energy", "schur", "radon", "oscillatory"};
  if (std::find(std::begin(kChecks), std::end(kChecks), cfg.check) == std::end(kChecks)) {
    throw ConfigError("unknown fourier check '" + cfg.check + "'");
  }
  json s;
  if (wants(cfg, "lp")) s["lp"] = fourier_lp(run);
  if (wants(cfg, "surface")) s["surface"] = fourier_surface(run);
  if (wants(cfg, "energy") || wants(cfg, "schur")) {
    const auto built = build_measure(cfg, cfg.target_dims.at(0));
    if (wants(cfg, "energy")) s["energy"] = fourier_energy(run, built.measure);
    if (wants(cfg, "schur")) s["schur"] = fourier_schur(run, built.measure);
  }
  if (wants(cfg, "radon")) s["radon"] = fourier_radon(run);
  if (wants(cfg, "oscillatory")) s["oscillatory"] = fourier_oscillatory(run);
  return s;
}

// ---------------------------------------------------------------- sweep / probe

json cmd_sweep(Run& run) {
  const auto& cfg = run.cfg;
  const auto rep = sweep_threshold(cfg, run.seed);
  CsvWriter rows(run.file("sweep_rows.csv"), {"target_dim", "pin", "eps", "density_mass", "cs_lower_bound",
                                              "support_measure", "l2_energy", "error"});
  for (const auto& r : rep.rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    rows.row({num(r.target_dim), std::to_string(r.pin), num(r.eps), num(r.density_mass), num(r.cs_lower_bound),
              num(r.support_measure), num(r.l2_energy), err});
  }
  CsvWriter sum(run.file("sweep_summary.csv"),
                {"target_dim", "eps", "median_cs", "median_support", "hinge", "verdict"});
  json dims = json::array();
  for (const auto& s : rep.summaries) {
    for (std::size_t i = 0; i < s.eps.size(); ++i) {
      sum.row({num(s.target_dim), num(s.eps[i]), num(s.median_cs[i]), num(s.median_support[i]), num(s.hinge[i]),
               verdict_name(s.verdict)});
    }
    json j;
    j["target_dim"] = s.target_dim;
    j["verdict"] = verdict_name(s.verdict);
    j["above_threshold"] = s.above_threshold;
    j["exceptional_bound"] = s.exceptional_bound;
    j["eps"] = s.eps;
    json cs = json::array(), sup = json::array(), h = json::array();
    for (std::size_t i = 0; i < s.eps.size(); ++i) {
      cs.push_back(jnum(s.median_cs[i]));
      sup.push_back(jnum(s.median_support[i]));
      h.push_back(jnum(s.hinge[i]));
    }
    j["median_cs"] = cs;
    j["median_support"] = sup;
    j["hinge"] = h;
    dims.push_back(j);
  }
  std::size_t failed = std::count_if(rep.rows.begin(), rep.rows.end(), [](const SweepRow& r) { return !r.error.empty(); });
  json s;
  s["threshold"] = rep.threshold;
  s["failed_cells"] = failed;
  s["dims"] = dims;
  return s;
}

json cmd_probe(Run& run) {
  const auto& cfg = run.cfg;
  const auto rep = exceptional_probe(cfg, run.seed);
  CsvWriter lv(run.file("probe_levels.csv"), {"eps", "flagged_fraction", "failed", "median_cs", "median_support"});
  CsvWriter cdf(run.file("probe_cdf.csv"), {"eps", "rank", "quantile", "cs_lower_bound", "support_measure"});
  json levels = json::array();
  for (const auto& l : rep.levels) {
    lv.row({num(l.eps), num(l.flagged_fraction), std::to_string(l.failed), num(median(l.sorted_cs)),
            num(median(l.sorted_support))});
    const std::size_t n = l.sorted_cs.size();
    for (std::size_t i = 0; i < n; ++i) {
      cdf.row({num(l.eps), std::to_string(i), num((i + 1.0) / n), num(l.sorted_cs[i]), num(l.sorted_support[i])});
    }
    levels.push_back({{"eps", l.eps}, {"flagged_fraction", l.flagged_fraction}, {"failed", l.failed}});
  }
  json s;
  s["target_dim"] = rep.target_dim;
  s["floor"] = rep.floor;
  s["pins"] = rep.pins;
  s["persistent"] = rep.persistent;
  s["levels"] = levels;
  return s;
}

// ---------------------------------------------------------------- regression

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "[" + std::to_string(i) + "]", out);
  } else {
    out.emplace_back(prefix, j);
  }
}

std::string show(const json& v) {
  if (v.is_number()) return num(v.get<double>());
  return v.dump();
}

// Returns the number of mismatching keys, printing a diff table when nonzero.
std::size_t regression_check(const json& golden, const json& current, double rtol) {
  std::vector<std::pair<std::string, json>> g, c;
  flatten(golden, "", g);
  flatten(current, "", c);
  std::map<std::string, json> cur(c.begin(), c.end());
  std::map<std::string, json> gold(g.begin(), g.end());
  struct Diff {
    std::string key, golden, current, rel;
  };
  std::vector<Diff> diffs;
  for (const auto& [key, gv] : g) {
    const auto it = cur.find(key);
    if (it == cur.end()) {
      diffs.push_back({key, show(gv), "(missing)", "-"});
      continue;
    }
    const json& cv = it->second;
    if (gv.is_number() && cv.is_number()) {
      const double a = gv.get<double>(), b = cv.get<double>();
      const double rel = std::abs(a - b) / std::max(std::abs(a), std::numeric_limits<double>::min());
      if (std::abs(a - b) > rtol * std::abs(a) && !(a == 0.0 && std::abs(b) <= rtol)) {
        diffs.push_back({key, show(gv), show(cv), num(rel)});
      }
    } else if (gv != cv) {
      diffs.push_back({key, show(gv), show(cv), "-"});
    }
  }
  for (const auto& [key, cv] : c) {
    if (!gold.count(key)) diffs.push_back({key, "(missing)", show(cv), "-"});
  }
  if (!diffs.empty()) {
    std::size_t w = 3;
    for (const auto& d : diffs) w = std::max(w, d.key.size());
    std::fprintf(stderr, "regression mismatch (rtol %g):\n", rtol);
    std::fprintf(stderr, "%-*s  %-24s  %-24s  %s\n", static_cast<int>(w), "key", "golden", "current", "rel_diff");
    for (const auto& d : diffs) {
      std::fprintf(stderr, "%-*s  %-24s  %-24s  %s\n", static_cast<int>(w), d.key.c_str(), d.golden.c_str(),
                   d.current.c_str(), d.rel.c_str());
    }
  }
  return diffs.size();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw ResourceError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned jobs = 0;
  bool freeze = false;
  bool check = false;
  std::string golden;
};

int execute(const std::string& command, const Options& opt) {
  Run run;
  run.command = command;
  run.cfg = load_config(opt.config);
  if (opt.seed) run.cfg.seed = opt.seed;
  if (!run.cfg.seed) throw ConfigError("no seed: set seed in the config or pass --seed");
  run.seed = *run.cfg.seed;
  if (!opt.out.empty()) run.cfg.out = opt.out;
  run.out = run.cfg.out;
  if (opt.jobs) set_worker_count(opt.jobs);
  std::error_code ec;
  fs::create_directories(run.out, ec);
  if (ec) throw ResourceError("cannot create output directory " + run.out.string() + ": " + ec.message());

  json summary;
  if (command == "gen") summary = cmd_gen(run);
  else if (command == "pinned") summary = cmd_pinned(run);
  else if (command == "chain") summary = cmd_chain(run);
  else if (command == "hinge") summary = cmd_hinge(run);
  else if (command == "config-count") summary = cmd_config_count(run);
  else if (command == "fourier") summary = cmd_fourier(run);
  else if (command == "sweep") summary = cmd_sweep(run);
  else if (command == "probe") summary = cmd_probe(run);

  json wrapped;
  wrapped["command"] = command;
  wrapped["seed"] = run.seed;
  wrapped["summary"] = summary;
  write_json(run.file("summary.json"), wrapped);

  json manifest;
  manifest["command"] = command;
  manifest["version"] = kVersion;
  manifest["timestamp"] = utc_timestamp();
  manifest["seed"] = run.seed;
  manifest["jobs"] = worker_count();
  json resolved;
  for (const auto& [k, v] : run.cfg.resolved()) resolved[k] = v;
  manifest["config"] = resolved;
  manifest["outputs"] = run.outputs;
  write_json(run.out / "manifest.json", manifest);

  const fs::path golden = opt.golden.empty() ? run.out / "golden.json" : fs::path(opt.golden);
  if (opt.freeze) {
    write_json(golden, wrapped);
    std::printf("froze %s\n", golden.string().c_str());
  }
  if (opt.check) {
    std::ifstream f(golden);
    if (!f) throw ConfigError("golden file " + golden.string() + " not found");
    json g;
    try {
      g = json::parse(f);
    } catch (const json::exception& e) {
      throw ConfigError("golden file " + golden.string() + ": " + e.what());
    }
    if (regression_check(g, wrapped, run.cfg.regression_rtol) != 0) return 4;
    std::printf("regression check passed against %s\n", golden.string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pinned distance-set laboratory"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options opt;
  const std::pair<const char*, const char*> commands[] = {
      {"gen", "build a fractal and its Frostman measure"},
      {"pinned", "mollified pinned densities per pin and eps"},
      {"chain", "k-chain density at the first pin"},
      {"hinge", "hinge counts and their beta-integrated form"},
      {"config-count", "edge-map configuration counts, optionally pinned and lifted"},
      {"fourier", "Littlewood-Paley, decay, energy, Schur, Radon and oscillatory checks"},
      {"sweep", "threshold sweep over target dimensions"},
      {"probe", "exceptional-pin probe"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config,-c", opt.config, "experiment config file")->required();
    sub->add_option("--seed", opt.seed, "overrides the config seed");
    sub->add_option("--out,-o", opt.out, "output directory (overrides the config)");
    sub->add_option("--jobs,-j", opt.jobs, "worker threads; results do not depend on it");
    sub->add_flag("--regression-freeze", opt.freeze, "write the summary as the golden file");
    sub->add_flag("--regression-check", opt.check, "compare the summary with the golden file");
    sub->add_option("--golden", opt.golden, "golden file (default <out>/golden.json)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  std::string command;
  for (const auto* sub : app.get_subcommands()) command = sub->get_name();
  try {
    return execute(command, opt);
  } catch (const RegressionMismatch& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const ResourceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::bad_alloc&) {
    std::fprintf(stderr, "error: out of memory\n");
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
}
