#include "pinlab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "pinlab/configs.hpp"
#include "pinlab/errors.hpp"
#include "pinlab/parallel.hpp"
#include "pinlab/pinned.hpp"
#include "pinlab/rng.hpp"

namespace pinlab {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string format_number(double v) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return out.str();
}

std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_number(v[i]);
  return s;
}

int parse_int(const std::string& text) {
  const double v = parse_number(text);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError("expected an integer, got '" + text + "'");
  return static_cast<int>(v);
}

std::size_t parse_count(const std::string& text) {
  const double v = parse_number(text);
  if (v < 0 || v != std::floor(v) || v > 1e15) throw ConfigError("expected a nonnegative integer, got '" + text + "'");
  return static_cast<std::size_t>(v);
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

double parse_number(const std::string& raw) {
  const std::string text = trim(raw);
  if (text.empty()) throw ConfigError("empty number");
  try {
    const auto caret = text.find('^');
    if (caret != std::string::npos) {
      std::size_t used_b = 0, used_e = 0;
      const std::string bs = text.substr(0, caret), es = text.substr(caret + 1);
      const double b = std::stod(bs, &used_b);
      const double e = std::stod(es, &used_e);
      if (used_b != bs.size() || used_e != es.size()) throw ConfigError("bad power '" + text + "'");
      return std::pow(b, e);
    }
    const auto slash = text.find('/');
    if (slash != std::string::npos) {
      const double den = parse_number(text.substr(slash + 1));
      if (den == 0.0) throw ConfigError("division by zero in '" + text + "'");
      return parse_number(text.substr(0, slash)) / den;
    }
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw ConfigError("bad number '" + text + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("bad number '" + text + "'");
  }
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!trim(item).empty()) out.push_back(parse_number(item));
  }
  return out;
}

std::vector<std::pair<int, int>> parse_edges(const std::string& text) {
  std::vector<std::pair<int, int>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto dash = item.find('-');
    if (dash == std::string::npos) throw ConfigError("edge '" + item + "' must look like i-j");
    out.emplace_back(parse_int(item.substr(0, dash)), parse_int(item.substr(dash + 1)));
  }
  return out;
}

std::map<std::string, std::string> ExperimentConfig::resolved() const {
  std::map<std::string, std::string> m;
  m["phase"] = phase;
  m["dim"] = std::to_string(dim);
  m["family"] = family;
  m["target_dims"] = format_list(target_dims);
  m["ratio"] = format_number(ratio);
  m["base"] = std::to_string(base);
  m["keep"] = std::to_string(keep);
  m["level"] = std::to_string(level);
  m["representation"] = representation == Representation::cell_atoms ? "cell_atoms" : "cell_uniform";
  m["per_axis"] = std::to_string(per_axis);
  m["box_lo"] = format_number(box_lo);
  m["box_hi"] = format_number(box_hi);
  m["circle_radius"] = format_number(circle_radius);
  m["circle_count"] = std::to_string(circle_count);
  m["pins"] = std::to_string(pins);
  m["pin_source"] = pin_source;
  m["pin_point"] = format_list(pin_point);
  m["eps"] = format_list(eps);
  m["dt_divisor"] = format_number(dt_divisor);
  m["mc_samples"] = std::to_string(mc_samples);
  m["neighborhood_radius"] = format_number(neighborhood_radius);
  m["beta_range"] = format_list(beta_range);
  m["k"] = std::to_string(k);
  m["t"] = format_list(t);
  m["vertices"] = std::to_string(vertices);
  m["edges"] = edges;
  m["pin_vertex"] = std::to_string(pin_vertex);
  m["check"] = check;
  m["side_n"] = std::to_string(side_n);
  m["gamma"] = format_number(gamma);
  m["quad_n"] = std::to_string(quad_n);
  m["flag_floor"] = format_number(flag_floor);
  m["stable_tol"] = format_number(stable_tol);
  m["shrink_tol"] = format_number(shrink_tol);
  m["regression_rtol"] = format_number(regression_rtol);
  m["seed"] = seed ? std::to_string(*seed) : "";
  m["out"] = out;
  return m;
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig c;
  using Setter = std::function<void(const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"phase", [&](const std::string& v) { c.phase = v; }},
      {"dim", [&](const std::string& v) { c.dim = parse_int(v); }},
      {"family", [&](const std::string& v) { c.family = v; }},
      {"target_dims", [&](const std::string& v) { c.target_dims = parse_number_list(v); }},
      {"target_dim", [&](const std::string& v) { c.target_dims = {parse_number(v)}; }},
      {"ratio", [&](const std::string& v) { c.ratio = parse_number(v); }},
      {"base", [&](const std::string& v) { c.base = parse_int(v); }},
      {"keep", [&](const std::string& v) { c.keep = parse_int(v); }},
      {"level", [&](const std::string& v) { c.level = parse_int(v); }},
      {"representation",
       [&](const std::string& v) {
         if (v == "cell_atoms") {
           c.representation = Representation::cell_atoms;
         } else if (v == "cell_uniform") {
           c.representation = Representation::cell_uniform;
         } else {
           throw ConfigError("representation must be cell_atoms or cell_uniform");
         }
       }},
      {"per_axis", [&](const std::string& v) { c.per_axis = parse_int(v); }},
      {"box_lo", [&](const std::string& v) { c.box_lo = parse_number(v); }},
      {"box_hi", [&](const std::string& v) { c.box_hi = parse_number(v); }},
      {"circle_radius", [&](const std::string& v) { c.circle_radius = parse_number(v); }},
      {"circle_count", [&](const std::string& v) { c.circle_count = parse_count(v); }},
      {"pins", [&](const std::string& v) { c.pins = parse_count(v); }},
      {"pin_source", [&](const std::string& v) { c.pin_source = v; }},
      {"pin_point", [&](const std::string& v) { c.pin_point = parse_number_list(v); }},
      {"eps", [&](const std::string& v) { c.eps = parse_number_list(v); }},
      {"dt_divisor", [&](const std::string& v) { c.dt_divisor = parse_number(v); }},
      {"mc_samples", [&](const std::string& v) { c.mc_samples = parse_count(v); }},
      {"neighborhood_radius", [&](const std::string& v) { c.neighborhood_radius = parse_number(v); }},
      {"beta_range", [&](const std::string& v) { c.beta_range = parse_number_list(v); }},
      {"k", [&](const std::string& v) { c.k = parse_int(v); }},
      {"t", [&](const std::string& v) { c.t = parse_number_list(v); }},
      {"vertices", [&](const std::string& v) { c.vertices = parse_int(v); }},
      {"edges", [&](const std::string& v) { c.edges = v; }},
      {"pin_vertex", [&](const std::string& v) { c.pin_vertex = parse_int(v); }},
      {"check", [&](const std::string& v) { c.check = v; }},
      {"side_n", [&](const std::string& v) { c.side_n = parse_int(v); }},
      {"gamma", [&](const std::string& v) { c.gamma = parse_number(v); }},
      {"quad_n", [&](const std::string& v) { c.quad_n = parse_int(v); }},
      {"flag_floor", [&](const std::string& v) { c.flag_floor = parse_number(v); }},
      {"stable_tol", [&](const std::string& v) { c.stable_tol = parse_number(v); }},
      {"shrink_tol", [&](const std::string& v) { c.shrink_tol = parse_number(v); }},
      {"regression_rtol", [&](const std::string& v) { c.regression_rtol = parse_number(v); }},
      {"seed", [&](const std::string& v) { c.seed = static_cast<std::uint64_t>(parse_count(v)); }},
      {"out", [&](const std::string& v) { c.out = v; }},
  };
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    try {
      it->second(value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + " (" + key + "): " + e.what());
    }
  }
  if (c.dim < 1 || c.dim > 3) throw ConfigError("dim must be 1, 2 or 3");
  if (c.eps.empty()) throw ConfigError("eps list is empty");
  for (double e : c.eps) {
    if (!(e > 0.0)) throw ConfigError("eps values must be positive");
  }
  if (!(c.dt_divisor >= 2.0)) throw ConfigError("dt_divisor must be >= 2");
  if (!c.beta_range.empty() && c.beta_range.size() != 2) throw ConfigError("beta_range needs two values");
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

BuiltMeasure build_measure(const ExperimentConfig& cfg, double target_dim) {
  BuiltMeasure b;
  if (cfg.family == "product_cantor") {
    CellFractal f = cfg.ratio > 0.0 ? build_product_cantor(cfg.dim, cfg.ratio, cfg.level)
                                    : build_for_dimension(cfg.dim, target_dim, cfg.level);
    b.measure = natural_measure(f, cfg.representation);
    b.fractal = std::move(f);
  } else if (cfg.family == "subdivision") {
    CellFractal f = build_subdivision_fractal(cfg.dim, cfg.base, cfg.keep, cfg.level, cfg.seed.value_or(0));
    b.measure = natural_measure(f, cfg.representation);
    b.fractal = std::move(f);
  } else if (cfg.family == "lebesgue") {
    b.measure = lebesgue_atoms(cfg.dim, cfg.per_axis, cfg.box_lo, cfg.box_hi, cfg.representation);
  } else if (cfg.family == "circle") {
    if (cfg.dim != 2) throw ConfigError("circle family needs dim = 2");
    b.measure = circle_measure(0.5, 0.5, cfg.circle_radius, cfg.circle_count);
  } else if (cfg.family == "segment") {
    std::vector<double> a(cfg.dim, 0.5), e(cfg.dim, 0.5);
    a[0] = cfg.box_lo;
    e[0] = cfg.box_hi;
    b.measure = segment_measure(a, e, cfg.circle_count);
  } else {
    throw ConfigError("unknown family '" + cfg.family + "'");
  }
  return b;
}

std::vector<double> draw_pins(const ExperimentConfig& cfg, const FrostmanMeasure& mu, std::uint64_t seed) {
  const int d = mu.dim;
  std::vector<double> pins(cfg.pins * d);
  if (cfg.pin_source == "point") {
    if (static_cast<int>(cfg.pin_point.size()) != d) throw ConfigError("pin_point must have dim entries");
    for (std::size_t p = 0; p < cfg.pins; ++p) std::copy(cfg.pin_point.begin(), cfg.pin_point.end(), pins.begin() + p * d);
    return pins;
  }
  if (cfg.pin_source != "mu") throw ConfigError("pin_source must be mu or point");
  // Pins sit on atoms of mu (the cell centers for cell measures).
  const MeasureSampler sampler(mu);
  for (std::size_t p = 0; p < cfg.pins; ++p) {
    const auto atom = mu.point(sampler.draw_atom(seed, streams::kPins, p));
    std::copy(atom.begin(), atom.end(), pins.begin() + p * d);
  }
  return pins;
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::stable: return "STABLE";
    case Verdict::shrinking: return "SHRINKING";
    case Verdict::inconclusive: return "INCONCLUSIVE";
  }
  return "INCONCLUSIVE";
}

Verdict verdict_from_trajectory(std::span<const double> tr, double stable_tol, double shrink_tol) {
  if (tr.size() < 2) return Verdict::inconclusive;
  for (double v : tr) {
    if (!std::isfinite(v) || v <= 0.0) return Verdict::inconclusive;
  }
  bool shrinking = true;
  for (std::size_t i = 1; i < tr.size(); ++i) {
    if (tr[i] > (1.0 - shrink_tol) * tr[i - 1]) shrinking = false;
  }
  if (shrinking) return Verdict::shrinking;
  const std::size_t steps = std::min<std::size_t>(2, tr.size() - 1);
  bool stable = true;
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t i = tr.size() - 1 - s;
    if (std::abs(tr[i] - tr[i - 1]) > stable_tol * tr[i - 1]) stable = false;
  }
  return stable ? Verdict::stable : Verdict::inconclusive;
}

std::vector<SweepSummary> summarize_rows(std::span<const SweepRow> rows, int dim, double stable_tol,
                                         double shrink_tol) {
  std::vector<SweepSummary> out;
  std::vector<double> dims;
  for (const auto& r : rows) {
    if (std::find(dims.begin(), dims.end(), r.target_dim) == dims.end()) dims.push_back(r.target_dim);
  }
  for (double s : dims) {
    SweepSummary sum;
    sum.target_dim = s;
    sum.exceptional_bound = dim + 1.0 - s;
    sum.above_threshold = s > (dim + 1.0) / 2.0;
    for (const auto& r : rows) {
      if (r.target_dim == s && std::find(sum.eps.begin(), sum.eps.end(), r.eps) == sum.eps.end()) sum.eps.push_back(r.eps);
    }
    std::sort(sum.eps.begin(), sum.eps.end(), std::greater<>());
    for (double e : sum.eps) {
      std::vector<double> cs, sup;
      for (const auto& r : rows) {
        if (r.target_dim == s && r.eps == e && r.error.empty()) {
          cs.push_back(r.cs_lower_bound);
          sup.push_back(r.support_measure);
        }
      }
      sum.median_cs.push_back(median(cs));
      sum.median_support.push_back(median(sup));
    }
    sum.verdict = verdict_from_trajectory(sum.median_cs, stable_tol, shrink_tol);
    out.push_back(std::move(sum));
  }
  return out;
}

TGrid experiment_t_grid(const ExperimentConfig& cfg, const FrostmanMeasure& mu, const PhaseFunction& phi,
                        std::span<const double> pins, double eps) {
  const TGrid base = default_t_grid(mu, phi, pins, eps);
  return make_t_grid(base.t_min, base.t_max(), eps / cfg.dt_divisor);
}

namespace {

struct PinCell {
  double mass = 0.0;
  CsBound cs;
  double support = 0.0;
  double energy = 0.0;
  std::string error;
};

TWeight make_beta(const ExperimentConfig& cfg, const PhaseFunction& phi) {
  if (cfg.beta_range.empty()) return nullptr;
  const auto cut = build_cutoffs(phi, cfg.neighborhood_radius, cfg.beta_range[0], cfg.beta_range[1]);
  return [cut](double t) { return cut.beta(t); };
}

std::vector<PinCell> pin_cells(const ExperimentConfig& cfg, const FrostmanMeasure& mu, const PhaseFunction& phi,
                               std::span<const double> pins, double eps, std::uint64_t seed, TGrid* grid_out) {
  const std::size_t n_pins = pins.size() / mu.dim;
  std::vector<PinCell> cells(n_pins);
  TGrid grid;
  try {
    grid = experiment_t_grid(cfg, mu, phi, pins, eps);
  } catch (const Error& e) {
    for (auto& c : cells) c.error = e.what();
    return cells;
  }
  if (grid_out) *grid_out = grid;
  const TWeight beta = make_beta(cfg, phi);
  const Mollifier rho(eps);
  for (std::size_t p = 0; p < n_pins; ++p) {
    auto& c = cells[p];
    try {
      const auto nu = pinned_density(mu, phi, pins.subspan(p * mu.dim, mu.dim), rho, grid, cfg.mc_samples,
                                     seed + p);
      c.mass = density_mass(nu);
      c.cs = cs_lower_bound(nu, beta);
      c.support = support_measure(nu, 0.0);
      const double w[1] = {1.0};
      c.energy = l2_energy(w, std::span<const PinnedDensity>(&nu, 1), beta);
    } catch (const Error& e) {
      c.error = e.what();
    }
  }
  return cells;
}

}  // namespace

SweepReport sweep_threshold(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.target_dims.size() < 2) throw ConfigError("sweep needs at least two target dimensions");
  if (cfg.eps.size() < 2) throw ConfigError("sweep needs at least two eps values");
  const auto phi = PhaseFunction::parse(cfg.phase, cfg.dim);
  SweepReport rep;
  rep.threshold = (cfg.dim + 1.0) / 2.0;
  std::vector<std::vector<double>> hinges;
  for (double s : cfg.target_dims) {
    std::vector<double> hinge_row;
    try {
      const auto built = build_measure(cfg, s);
      const auto& mu = built.measure;
      const auto pins = draw_pins(cfg, mu, seed);
      const std::size_t n_pins = pins.size() / mu.dim;
      const auto lambda = point_cloud_measure(mu.dim, pins, std::vector<double>(n_pins, 1.0), s);
      for (double eps : cfg.eps) {
        TGrid grid;
        const auto cells = pin_cells(cfg, mu, phi, pins, eps, seed, &grid);
        for (std::size_t p = 0; p < n_pins; ++p) {
          const auto& c = cells[p];
          rep.rows.push_back({s, p, eps, c.mass, c.cs.value, c.support, c.energy, c.error});
        }
        double h = std::numeric_limits<double>::quiet_NaN();
        if (grid.count >= 2) {
          std::vector<double> nodes(grid.count);
          for (std::size_t i = 0; i < grid.count; ++i) nodes[i] = grid.node(i);
          try {
            h = hinge_count_integrated(lambda, mu, phi, make_beta(cfg, phi), eps, nodes, 0, seed).count_normalized;
          } catch (const Error&) {
          }
        }
        hinge_row.push_back(h);
      }
    } catch (const Error& e) {
      for (double eps : cfg.eps) rep.rows.push_back({s, 0, eps, 0, 0, 0, 0, e.what()});
      hinge_row.assign(cfg.eps.size(), std::numeric_limits<double>::quiet_NaN());
    }
    hinges.push_back(std::move(hinge_row));
  }
  rep.summaries = summarize_rows(rep.rows, cfg.dim, cfg.stable_tol, cfg.shrink_tol);
  for (std::size_t i = 0; i < rep.summaries.size(); ++i) {
    auto& sum = rep.summaries[i];
    const auto pos = std::find(cfg.target_dims.begin(), cfg.target_dims.end(), sum.target_dim) - cfg.target_dims.begin();
    // summaries list eps from coarse to fine; the hinge row follows cfg.eps order
    for (double e : sum.eps) {
      const auto j = std::find(cfg.eps.begin(), cfg.eps.end(), e) - cfg.eps.begin();
      sum.hinge.push_back(hinges[pos][j]);
    }
  }
  return rep;
}

ProbeReport exceptional_probe(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.pins < 50) throw ConfigError("exceptional probe needs at least 50 pins");
  const auto phi = PhaseFunction::parse(cfg.phase, cfg.dim);
  const double s = cfg.target_dims.front();
  const auto built = build_measure(cfg, s);
  const auto& mu = built.measure;
  const auto pins = draw_pins(cfg, mu, seed);
  const std::size_t n_pins = pins.size() / mu.dim;
  ProbeReport rep;
  rep.target_dim = s;
  rep.floor = cfg.flag_floor;
  rep.pins = n_pins;
  std::vector<bool> always(n_pins, true);
  std::vector<double> eps = cfg.eps;
  std::sort(eps.begin(), eps.end(), std::greater<>());
  for (double e : eps) {
    ProbeLevel lvl;
    lvl.eps = e;
    const auto cells = pin_cells(cfg, mu, phi, pins, e, seed, nullptr);
    std::size_t flagged = 0;
    for (std::size_t p = 0; p < n_pins; ++p) {
      const auto& c = cells[p];
      if (!c.error.empty()) {
        ++lvl.failed;
        always[p] = false;
        continue;
      }
      const bool low = c.cs.value < cfg.flag_floor;
      flagged += low;
      always[p] = always[p] && low;
      lvl.sorted_cs.push_back(c.cs.value);
      lvl.sorted_support.push_back(c.support);
    }
    std::sort(lvl.sorted_cs.begin(), lvl.sorted_cs.end());
    std::sort(lvl.sorted_support.begin(), lvl.sorted_support.end());
    const std::size_t evaluated = n_pins - lvl.failed;
    lvl.flagged_fraction = evaluated ? static_cast<double>(flagged) / static_cast<double>(evaluated) : 0.0;
    rep.levels.push_back(std::move(lvl));
  }
  rep.persistent = static_cast<std::size_t>(std::count(always.begin(), always.end(), true));
  return rep;
}

}  // namespace pinlab
