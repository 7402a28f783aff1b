#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "pinlab/errors.hpp"
#include "pinlab/fractal.hpp"
#include "pinlab/phase.hpp"
#include "pinlab/spectral.hpp"

using namespace pinlab;

namespace {

SpectralGrid random_grid(int dim, int n, std::uint64_t seed) {
  auto g = SpectralGrid::zeros(dim, n);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z;
  for (auto& v : g.values) v = {z(gen), z(gen)};
  return g;
}

SpectralGrid wave(int n, int qx, int qy) {
  auto g = SpectralGrid::zeros(2, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      g.values[i * n + j] = std::polar(1.0, 2.0 * std::numbers::pi * (qx * i + qy * j) / n);
  return g;
}

double rel_diff(const SpectralGrid& a, const SpectralGrid& b) {
  double num = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) num += std::norm(a.values[i] - b.values[i]);
  return std::sqrt(num / l2_norm_squared(b));
}

}  // namespace

TEST_CASE("fft round trip and Parseval") {
  for (int dim : {1, 2, 3}) {
    const int n = dim == 3 ? 16 : 64;
    const auto g = random_grid(dim, n, 5 + dim);
    auto h = g;
    fft_forward(h);
    CHECK(l2_norm_squared(h) == doctest::Approx(l2_norm_squared(g) * std::pow(n, dim)).epsilon(1e-10));
    fft_inverse(h);
    CHECK(rel_diff(h, g) <= 1e-10);
  }
  CHECK(frequency(8, 3) == 3);
  CHECK(frequency(8, 4) == -4);
  CHECK(frequency(8, 7) == -1);
}

TEST_CASE("Littlewood-Paley partition") {
  const int n = 512;
  const int j_max = 8;
  const auto p = make_lp_partition(j_max);
  const double r_max = std::ldexp(1.0, j_max - 1);
  const auto g = SpectralGrid::zeros(2, n);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = frequency_norm(g, i);
    if (r <= r_max) worst = std::max(worst, std::abs(p.partition_sum(r) - 1.0));
  }
  CHECK(worst <= 1e-10);
  for (double r = 0.0; r < 8.0; r += 0.01) {
    CHECK(p.alpha0(r) >= 0.0);
    CHECK(p.alpha(r) >= -1e-15);
    if (r >= 2.0) CHECK(p.alpha0(r) == 0.0);
    if (r <= 0.5 || r >= 2.0) CHECK(p.alpha(r) == 0.0);
  }
  CHECK(lp_cutoff(1.0) == 1.0);
  CHECK(lp_cutoff(0.3) == 1.0);
  CHECK(lp_cutoff(2.0) == 0.0);
  CHECK_THROWS_AS(lp_project(g, p, j_max + 1), DomainError);
  CHECK_THROWS_AS(lp_project(g, p, -1), DomainError);
}

TEST_CASE("projections reassemble band-limited fields") {
  const int n = 128;
  const auto p = make_lp_partition(6);
  const auto f = band_limited_fields(2, n, 1, 32.0, 3)[0];
  auto sum = SpectralGrid::zeros(2, n);
  for (int j = 0; j <= 6; ++j) {
    const auto pj = lp_project(f, p, j);
    for (std::size_t i = 0; i < sum.size(); ++i) sum.values[i] += pj.values[i];
  }
  CHECK(rel_diff(sum, f) <= 1e-9);

  for (int j = 1; j <= 5; ++j) {
    const auto w = wave(n, 1 << j, 0);
    for (int b = 0; b <= 6; ++b) {
      const double energy = l2_norm_squared(lp_project(w, p, b)) / l2_norm_squared(w);
      if (std::abs(b - j) > 1) CHECK(energy <= 1e-20);
    }
  }
  auto c = SpectralGrid::zeros(2, n);
  for (auto& v : c.values) v = 2.5;
  CHECK(rel_diff(lp_project(c, p, 0), c) <= 1e-12);
  for (int b = 1; b <= 6; ++b) CHECK(l2_norm_squared(lp_project(c, p, b)) <= 1e-20);
}

TEST_CASE("band-limited fields") {
  const auto fs = band_limited_fields(2, 64, 3, 4.0, 9);
  REQUIRE(fs.size() == 3);
  for (auto f : fs) {
    for (const auto& v : f.values) CHECK(std::abs(v.imag()) <= 1e-12);
    fft_forward(f);
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double r = frequency_norm(f, i);
      if (r == 0.0 || r > 4.0) CHECK(std::abs(f.values[i]) <= 1e-9);
    }
  }
  CHECK(band_limited_fields(2, 64, 1, 4.0, 9)[0].values == fs[0].values);
}

TEST_CASE("surface measure decay") {
  const auto rep = surface_measure_decay(2, 512);
  CHECK(rep.slope == doctest::Approx(-0.5).epsilon(0.1));
  CHECK(rep.sigma_hat_zero == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(rep.flagged);
  CHECK(rep.shell_lo.front() == 8.0);
  CHECK(surface_measure_decay(2, 128).flagged);
  CHECK_THROWS_AS(surface_measure_decay(2, 8), DomainError);
  CHECK_THROWS_AS(surface_measure_decay(4, 64), DomainError);
}

TEST_CASE("energy constant") {
  // d = 1, gamma = 1/2: pi^0 Gamma(1/4) / Gamma(1/4) = 1
  CHECK(energy_constant(0.5, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(energy_constant(1.0, 2) ==
        doctest::Approx(std::tgamma(0.5) / std::tgamma(0.5)).epsilon(1e-14));
  CHECK(energy_constant(1.2, 2) ==
        doctest::Approx(std::pow(std::numbers::pi, 0.2) * std::tgamma(0.4) / std::tgamma(0.6)).epsilon(1e-14));
}

TEST_CASE("shell classification") {
  const std::vector<double> flat{1.0, 1.5, 1.6, 1.62}, grow{1.0, 1.5, 2.2, 3.0}, mid{1.0, 1.2, 1.4};
  CHECK(classify_shells(flat) == ShellVerdict::converging);
  CHECK(classify_shells(grow) == ShellVerdict::growing);
  CHECK(classify_shells(mid) == ShellVerdict::undecided);
}

TEST_CASE("energy of a segment below the threshold diverges") {
  const int n = 256;
  const std::vector<double> a{0.25, 0.5}, b{0.75 - 1.0 / n, 0.5};
  const auto seg = segment_measure(a, b, n / 2);
  const auto low = energy_integral(seg, 0.8, n);
  CHECK(low.verdict == ShellVerdict::growing);
  CHECK(low.last_first_ratio >= 2.0);
  const auto high = energy_integral(seg, 1.2, n);
  CHECK(high.last_two_ratio < low.last_two_ratio);
  for (std::size_t i = 1; i < high.shell_partial.size(); ++i) CHECK(high.shell_partial[i] >= high.shell_partial[i - 1]);
  CHECK_THROWS_AS(energy_integral(seg, 2.0, n), DomainError);
  CHECK_THROWS_AS(energy_integral(seg, 0.0, n), DomainError);
  CHECK_THROWS_AS(energy_integral(seg, 1.0, 100), DomainError);
}

TEST_CASE("energy of a uniform square: kernel and Fourier sides agree") {
  // the periodic grid needs room around the support, so the square has side 1/2;
  // the unit-square energy is 2^(gamma - 2) times this one
  const auto half = lebesgue_atoms(2, 64, 0.25, 0.75, Representation::cell_uniform);
  const auto quarter = lebesgue_atoms(2, 64, 0.375, 0.625, Representation::cell_uniform);
  for (double gamma : {0.5, 1.0, 1.5}) {
    const auto rep = energy_integral(half, gamma, 1024);
    CHECK(std::isfinite(rep.fourier_value));
    CHECK(rep.fourier_value == doctest::Approx(rep.kernel_value).epsilon(0.1));
    const auto small = energy_integral(quarter, gamma, 1024);
    CHECK(small.kernel_value / rep.kernel_value == doctest::Approx(std::pow(2.0, 2.0 - gamma)).epsilon(0.01));
  }
}

TEST_CASE("Schur sums on the middle-thirds set") {
  std::vector<double> direct_08, direct_02;
  for (int level = 4; level <= 8; ++level) {
    const auto mu = natural_measure(build_product_cantor(1, 1.0 / 3.0, level));
    const auto a = schur_kernel_sup(mu, 0.8);
    const auto b = schur_kernel_sup(mu, 0.2);
    for (std::size_t i = 0; i < a.direct.size(); ++i) CHECK(a.direct[i] <= a.majorant[i] * (1 + 1e-12));
    for (std::size_t i = 0; i < b.direct.size(); ++i) CHECK(b.direct[i] <= b.majorant[i] * (1 + 1e-12));
    CHECK(a.scale == 1.0);
    direct_08.push_back(a.sup_direct);
    direct_02.push_back(b.sup_direct);
  }
  // gamma above 1 - log 2 / log 3: the level-n shell adds about (3^0.2 / 2)^n
  for (std::size_t i = 1; i < direct_08.size(); ++i) {
    CHECK(direct_08[i] >= direct_08[i - 1]);
    CHECK(direct_08[i] / direct_08[i - 1] - 1.0 <= 0.1);
  }
  for (std::size_t i = 2; i < direct_08.size(); ++i) {
    CHECK(direct_08[i] - direct_08[i - 1] < direct_08[i - 1] - direct_08[i - 2]);
  }
  // gamma below: the shells grow like (3^0.8 / 2)^n, so the level ratio falls toward that rate
  const double rate = std::pow(3.0, 0.8) / 2.0;
  for (std::size_t i = 1; i < direct_02.size(); ++i) CHECK(direct_02[i] / direct_02[i - 1] >= rate);
  for (std::size_t i = 2; i < direct_02.size(); ++i) {
    CHECK(direct_02[i] / direct_02[i - 1] <= direct_02[i - 1] / direct_02[i - 2]);
  }
}

TEST_CASE("Schur sums rescale wide supports") {
  const auto mu = point_cloud_measure(2, {0.0, 0.0, 2.0, 0.0, 0.0, 1.0}, {1.0, 1.0, 1.0}, 0.0);
  const auto rep = schur_kernel_sup(mu, 1.0);
  CHECK(rep.scale == doctest::Approx(std::sqrt(5.0)).epsilon(1e-14));
  // first atom: distances 2 and 1 scaled by 1 / sqrt 5, kernel |r|^-1
  CHECK(rep.direct[0] == doctest::Approx((std::sqrt(5.0) / 2 + std::sqrt(5.0)) / 3).epsilon(1e-12));
}

TEST_CASE("Radon transform on constants") {
  const int n = 128;
  const double t = 0.25, eps = 1.0 / 16;
  const auto phi = PhaseFunction::euclidean(2);
  auto one = SpectralGrid::zeros(2, n);
  for (auto& v : one.values) v = 1.0;
  const auto tf = radon_apply(phi, nullptr, eps, t, one);
  CHECK(tf.values[(n / 2) * n + n / 2].real() == doctest::Approx(2 * std::numbers::pi * t).epsilon(0.01));
  // periodic translation invariance: every node sees the same circle
  CHECK(tf.values[0].real() == doctest::Approx(tf.values[(n / 2) * n + n / 2].real()).epsilon(1e-12));

  const auto zero = radon_apply(phi, nullptr, eps, t, SpectralGrid::zeros(2, n));
  for (const auto& v : zero.values) CHECK(std::abs(v) <= 1e-15);
  CHECK_THROWS_AS(radon_apply(phi, nullptr, 1.0 / n, t, one), ResolutionError);
}

TEST_CASE("Radon transform is linear and translation covariant") {
  const int n = 64;
  const auto phi = PhaseFunction::euclidean(2);
  const auto cut = build_cutoffs(phi, 0.05, 0.15, 0.35);
  const auto fs = band_limited_fields(2, n, 2, 6.0, 17);
  const double a = 1.7, b = -0.4;
  auto mix = SpectralGrid::zeros(2, n);
  for (std::size_t i = 0; i < mix.size(); ++i) mix.values[i] = a * fs[0].values[i] + b * fs[1].values[i];
  for (const CutoffPair* c : {static_cast<const CutoffPair*>(nullptr), &cut}) {
    const auto tf = radon_apply(phi, c, 1.0 / 8, 0.25, fs[0]);
    const auto tg = radon_apply(phi, c, 1.0 / 8, 0.25, fs[1]);
    auto expect = SpectralGrid::zeros(2, n);
    for (std::size_t i = 0; i < mix.size(); ++i) expect.values[i] = a * tf.values[i] + b * tg.values[i];
    CHECK(rel_diff(radon_apply(phi, c, 1.0 / 8, 0.25, mix), expect) <= 1e-10);
  }

  auto shifted = SpectralGrid::zeros(2, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) shifted.values[((i + 5) % n) * n + (j + 11) % n] = fs[0].values[i * n + j];
  const auto t0 = radon_apply(phi, nullptr, 1.0 / 8, 0.25, fs[0]);
  const auto t1 = radon_apply(phi, nullptr, 1.0 / 8, 0.25, shifted);
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      worst = std::max(worst, std::abs(t1.values[((i + 5) % n) * n + (j + 11) % n] - t0.values[i * n + j]));
  CHECK(worst <= 1e-10);
}

TEST_CASE("Radon transform of a non-translation-invariant phase") {
  // dot product: T 1 (x) counts nodes near the line x.y = t
  const int n = 64;
  const auto phi = PhaseFunction::dot_product(2);
  auto one = SpectralGrid::zeros(2, n);
  for (auto& v : one.values) v = 1.0;
  const auto tf = radon_apply(phi, nullptr, 1.0 / 16, 0.3, one);
  // x = (1/2, 1/2): the level set y1 + y2 = 2s has length 2 sqrt 2 s near s = 0.3, linear in s,
  // so mollifying leaves length / |x| = 1.2
  CHECK(tf.values[(n / 2) * n + n / 2].real() == doctest::Approx(1.2).epsilon(0.05));
}

TEST_CASE("Sobolev ratios") {
  const int n = 64;
  const auto phi = PhaseFunction::euclidean(2);
  const auto cut = build_cutoffs(phi, 0.05, 0.15, 0.25);
  const auto fs = band_limited_fields(2, n, 2, 2.0, 23);
  const std::vector<double> eps{0.125, 0.0625};
  const auto half = radon_sobolev_ratio(phi, &cut, 0.2, eps, fs, 0.5);
  const auto plain = radon_sobolev_ratio(phi, &cut, 0.2, eps, fs, 0.0);
  REQUIRE(half.rows.size() == plain.rows.size());
  for (std::size_t i = 0; i < half.rows.size(); ++i) {
    CHECK(plain.rows[i].ratio <= half.rows[i].ratio);
    CHECK(std::isfinite(half.rows[i].ratio));
  }
  const auto again = radon_sobolev_ratio(phi, &cut, 0.2, eps, fs, 0.5);
  CHECK(again.worst == half.worst);

  // the pure wave e(q.x) is an eigenfunction of the translation-invariant operator
  const auto w = wave(n, 1, 0);
  const auto tw = radon_apply(phi, nullptr, 0.125, 0.2, w);
  const Complex ratio = tw.values[3] / w.values[3];
  for (std::size_t i = 0; i < w.size(); i += 97) CHECK(std::abs(tw.values[i] - ratio * w.values[i]) <= 1e-10);
  auto g = SpectralGrid::zeros(2, n);
  const std::vector<double> one_eps{0.125};
  const std::vector<SpectralGrid> one_field{w};
  const double r = radon_sobolev_ratio(phi, nullptr, 0.2, one_eps, one_field, 0.0).rows[0].ratio;
  CHECK(r == doctest::Approx(std::abs(ratio)).epsilon(1e-10));
  CHECK(sobolev_norm(w, 0.5) == doctest::Approx(std::pow(2.0, 0.25)).epsilon(1e-10));
  CHECK(sobolev_norm(g, 1.0) == 0.0);
}

TEST_CASE("oscillatory integral") {
  const auto phi = PhaseFunction::euclidean(2);
  const std::vector<double> zero{0.0, 0.0};
  const GDomain dom;
  // the bump is a product of profiles scaled to a quarter of each box side
  const double volume = std::pow(0.25 / 4.0, 4);
  const auto v = oscillatory_G(phi, nullptr, 0.0, zero, zero, 0.3, 48);
  CHECK(v.value.real() == doctest::Approx(volume).epsilon(1e-8));
  CHECK(std::abs(v.value.imag()) <= 1e-15);
  const PairWeight none = [](std::span<const double>, std::span<const double>) { return 0.0; };
  CHECK(std::abs(oscillatory_G(phi, none, 3.0, zero, zero, 0.3, 48).value) == 0.0);

  const double u = -1.0 / std::sqrt(2.0);
  auto vec = [u](double m) { return std::vector<double>{m * u, m * u}; };
  const double ref = std::abs(oscillatory_G(phi, nullptr, 4.0, vec(4), vec(4), 0.0, 48).value);
  CHECK(ref > 1e-6);
  for (auto [s, f] : {std::pair{1.0, 32.0}, {32.0, 1.0}, {1.0, 16.0}}) {
    const auto g = oscillatory_G(phi, nullptr, s, vec(f), vec(f), 0.0, 48);
    CHECK_FALSE(g.unresolved);
    CHECK(std::abs(g.value) <= 0.1 * ref);
  }
  const std::vector<double> fast{64.0, 0.0};
  CHECK(oscillatory_G(phi, nullptr, 1.0, fast, zero, 0.0, 48).unresolved);
  CHECK_THROWS_AS(oscillatory_G(PhaseFunction::euclidean(3), nullptr, 1.0, zero, zero, 0.0, 48), UnsupportedError);
  CHECK_THROWS_AS(oscillatory_G(phi, nullptr, 1.0, zero, zero, 0.0, 65), DomainError);
}
