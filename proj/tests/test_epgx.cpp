#include "oracles.hpp"

#include "mrf/epgx.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace mrf;
using std::numbers::pi;

namespace {

auto two_pool_at(double za, double zb, double f) -> TwoPoolSpinConfiguration
{
  TwoPoolSpinConfiguration s{4, f};
  s.free.set_z(0, {za, 0.0});
  s.z_bound[0] = {zb, 0.0};
  return s;
}

TwoPoolParams const bsa_like{1056.0, 51.0, 0.14, 4.3, 12.0, Lineshape::gaussian};

} // namespace

TEST_CASE("gaussian lineshape values")
{
  CHECK(absorption_lineshape(12.0, 0.0, Lineshape::gaussian) == doctest::Approx(12e-6 / std::sqrt(2.0 * pi)));
  CHECK(absorption_lineshape(12.0, 0.0, Lineshape::gaussian) == doctest::Approx(4.787e-6).epsilon(1e-3));
  CHECK(absorption_lineshape(12.0, 5000.0, Lineshape::gaussian) == doctest::Approx(4.459e-6).epsilon(1e-3));
  CHECK(absorption_lineshape(12.0, 1e7, Lineshape::gaussian) < 1e-300);
  CHECK(absorption_lineshape(12.0, -5000.0, Lineshape::gaussian) ==
        absorption_lineshape(12.0, 5000.0, Lineshape::gaussian));
  CHECK_THROWS_AS(absorption_lineshape(0.0, 0.0, Lineshape::gaussian), std::invalid_argument);
}

TEST_CASE("super-Lorentzian wings match direct quadrature")
{
  for (double d : {1000.0, 2000.0, 5000.0, 20000.0}) {
    double const got = absorption_lineshape(12.0, d, Lineshape::super_lorentzian);
    double const ref = oracle::super_lorentzian(12e-6, d);
    CHECK(got == doctest::Approx(ref).epsilon(1e-4));
  }
}

TEST_CASE("super-Lorentzian is finite, even and continuous near resonance")
{
  double const g0 = absorption_lineshape(12.0, 0.0, Lineshape::super_lorentzian);
  CHECK(std::isfinite(g0));
  CHECK(g0 > 0.0);
  CHECK(absorption_lineshape(12.0, -400.0, Lineshape::super_lorentzian) ==
        absorption_lineshape(12.0, 400.0, Lineshape::super_lorentzian));
  double const below = absorption_lineshape(12.0, 999.999, Lineshape::super_lorentzian);
  double const above = absorption_lineshape(12.0, 1000.001, Lineshape::super_lorentzian);
  CHECK(below == doctest::Approx(above).epsilon(1e-5));
}

TEST_CASE("lineshape names")
{
  CHECK(lineshape_from_string(to_string(Lineshape::super_lorentzian)) == Lineshape::super_lorentzian);
  CHECK(lineshape_from_string(to_string(Lineshape::gaussian)) == Lineshape::gaussian);
  CHECK_THROWS_AS(lineshape_from_string("lorentz"), std::invalid_argument);
}

TEST_CASE("pulse saturation")
{
  std::vector<double> const hard{1.0, 1.0, 1.0, 1.0};

  SUBCASE("zero flip") { CHECK(pulse_saturation(0.0, 7.0, hard, 1.0, 5000.0, 12.0, Lineshape::gaussian).wt == 0.0); }
  SUBCASE("hard 180 at 5 kHz")
  {
    double const wt = pulse_saturation(pi, 7.0, hard, 1.0, 5000.0, 12.0, Lineshape::gaussian).wt;
    double const g = absorption_lineshape(12.0, 5000.0, Lineshape::gaussian);
    CHECK(wt == doctest::Approx(pi * g * pi * pi / 0.007).epsilon(1e-12));
    CHECK(wt == doctest::Approx(0.01975).epsilon(1e-3));
  }
  SUBCASE("B1 enters quadratically")
  {
    std::vector<double> const shape{0.1, 0.5, 1.0, 0.5, 0.1};
    double const a = pulse_saturation(0.8, 2.0, shape, 1.0, 0.0, 12.0, Lineshape::gaussian).wt;
    double const b = pulse_saturation(0.8, 2.0, shape, 1.3, 0.0, 12.0, Lineshape::gaussian).wt;
    CHECK(b / a == doctest::Approx(1.69).epsilon(1e-14));
    for (double s : {0.5, 0.77, 1.5}) {
      double const c = pulse_saturation(0.8, 2.0, shape, s, 0.0, 12.0, Lineshape::gaussian).wt;
      CHECK(c / a == doctest::Approx(s * s).epsilon(1e-14));
    }
  }
  SUBCASE("power factor of a constant pulse is 1/duration")
  {
    CHECK(waveform_power_factor(hard, 4.0) == doctest::Approx(250.0));
    std::vector<double> const lobes{1.0, -0.2, 1.0};
    CHECK(waveform_power_factor(lobes, 3.0) > 1.0 / 3e-3);
    std::vector<double> const zero_area{1.0, -1.0};
    CHECK_THROWS_AS(waveform_power_factor(zero_area, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(waveform_power_factor({}, 1.0), std::invalid_argument);
  }
}

TEST_CASE("relax_exchange matches the extrapolated Euler oracle")
{
  std::mt19937_64                        rng{2024};
  std::uniform_real_distribution<double> u{0.0, 1.0};
  for (int i = 0; i < 20; i++) {
    oracle::ExchangeCase c{};
    c.za = 2.0 * u(rng) - 1.0;
    c.zb = 0.3 * u(rng);
    c.dt_ms = 0.1 + 99.9 * u(rng);
    c.t1_ms = 200.0 + 2000.0 * u(rng);
    c.f = 0.01 + 0.29 * u(rng);
    c.k_per_s = 10.0 * u(rng);
    TwoPoolParams const p{c.t1_ms, 20.0, c.f, c.k_per_s, 12.0, Lineshape::gaussian};
    auto const          got = relax_exchange(two_pool_at(c.za, c.zb, c.f), c.dt_ms, p);
    auto const          ref = oracle::euler_exchange_extrapolated(c, 1e-6);
    CHECK(got.free.z(0).real() == doctest::Approx(ref[0]).epsilon(1e-6));
    CHECK(got.z_bound[0].real() == doctest::Approx(ref[1]).epsilon(1e-6));
  }
}

TEST_CASE("exchange limits")
{
  SUBCASE("k = 0 decouples the pools")
  {
    TwoPoolParams const p{1000.0, 50.0, 0.2, 0.0, 12.0, Lineshape::gaussian};
    auto const          r = relax_exchange(two_pool_at(0.0, 0.0, 0.2), 200.0, p);
    double const        e1 = std::exp(-0.2);
    CHECK(r.free.z(0).real() == doctest::Approx(0.8 * (1.0 - e1)).epsilon(1e-14));
    CHECK(r.z_bound[0].real() == doctest::Approx(0.2 * (1.0 - e1)).epsilon(1e-14));
  }
  SUBCASE("long intervals reach (1-F, F)")
  {
    auto const r = relax_exchange(two_pool_at(-1.0, 0.0, bsa_like.f_frac), 1e6, bsa_like);
    CHECK(std::abs(r.free.z(0).real() - 0.86) < 1e-12);
    CHECK(std::abs(r.z_bound[0].real() - 0.14) < 1e-12);
  }
  SUBCASE("equilibrium is a fixed point")
  {
    for (double dt : {0.001, 7.5, 350.0, 1e4}) {
      auto const r = relax_exchange(two_pool_at(0.86, 0.14, 0.14), dt, bsa_like);
      CHECK(std::abs(r.free.z(0).real() - 0.86) < 1e-12);
      CHECK(std::abs(r.z_bound[0].real() - 0.14) < 1e-12);
    }
  }
  SUBCASE("total longitudinal magnetization recovers monotonically")
  {
    auto   s = two_pool_at(-0.86, 0.05, 0.14);
    double prev = -1e9;
    for (int i = 0; i < 2000; i++) {
      s = relax_exchange(s, 5.0, bsa_like);
      double const total = s.free.z(0).real() + s.z_bound[0].real();
      CHECK(total >= prev - 1e-15);
      CHECK(total <= 1.0 + 1e-9);
      prev = total;
    }
    CHECK(prev == doctest::Approx(1.0).epsilon(1e-3));
  }
  SUBCASE("F = 0 reduces to single-pool relaxation")
  {
    TwoPoolParams const p{900.0, 70.0, 0.0, 4.3, 12.0, Lineshape::gaussian};
    TwoPoolSpinConfiguration s{6, 0.0};
    s.free = rf_rotate(s.free, 1.0, 0.3);
    s.free = grad_shift(s.free, 1);
    s.free = rf_rotate(s.free, 0.7, 0.0);
    auto const two = relax_exchange(s, 12.0, p);
    auto const one = relax(s.free, 12.0, p.relaxation());
    for (std::size_t k = 0; k <= 6; k++) {
      CHECK(std::abs(two.free.f_plus(k) - one.f_plus(k)) < 1e-15);
      CHECK(std::abs(two.free.z(k) - one.z(k)) < 1e-15);
    }
  }
  SUBCASE("invalid parameters")
  {
    TwoPoolSpinConfiguration const s{2, 0.1};
    CHECK_THROWS_AS(relax_exchange(s, 1.0, {1000.0, 50.0, 0.6, 4.3, 12.0, Lineshape::gaussian}), std::invalid_argument);
    CHECK_THROWS_AS(relax_exchange(s, 1.0, {1000.0, 50.0, 0.1, -1.0, 12.0, Lineshape::gaussian}), std::invalid_argument);
    CHECK_THROWS_AS(relax_exchange(s, -1.0, bsa_like), std::invalid_argument);
  }
}

TEST_CASE("two_pool_rf")
{
  TwoPoolSpinConfiguration const eq{4, 0.1};

  SUBCASE("no saturation leaves the bound pool alone")
  {
    auto const r = two_pool_rf(eq, pi / 3, 0.2, {0.0});
    CHECK(r.z_bound == eq.z_bound);
    CHECK(r.free == rf_rotate(eq.free, pi / 3, 0.2));
  }
  SUBCASE("pure saturation")
  {
    auto const r = two_pool_rf(eq, 0.0, 0.0, {0.5});
    CHECK(r.free == eq.free);
    CHECK(r.z_bound[0].real() == doctest::Approx(0.1 * 0.6065306597).epsilon(1e-9));
  }
  SUBCASE("off-resonance saturation does not touch free transverse states")
  {
    auto s = eq;
    s.free = rf_rotate(s.free, 0.5, 0.0);
    s.free = grad_shift(s.free, 1);
    std::vector<double> const gauss = {0.1, 0.6, 1.0, 0.6, 0.1};
    auto const sat = pulse_saturation(pi, 7.0, gauss, 1.0, 5000.0, 12.0, Lineshape::gaussian);
    auto const r = two_pool_rf(s, 0.0, 0.0, sat);
    CHECK(r.free == s.free);
    CHECK(std::abs(r.z_bound[0]) < std::abs(s.z_bound[0]));
  }
  SUBCASE("saturation is monotone in wt")
  {
    double prev = 1.0;
    for (double wt : {0.01, 0.1, 0.5, 2.0}) {
      double const zb = std::abs(two_pool_rf(eq, 0.0, 0.0, {wt}).z_bound[0]);
      CHECK(zb < prev);
      prev = zb;
    }
  }
  CHECK_THROWS_AS(two_pool_rf(eq, 0.1, 0.0, {-0.1}), std::invalid_argument);
}

TEST_CASE("apply_inversion")
{
  SUBCASE("ideal inversion of a single pool")
  {
    TwoPoolParams const p{800.0, 60.0, 0.0, 4.3, 12.0, Lineshape::gaussian};
    auto const          r = apply_inversion(TwoPoolSpinConfiguration{4, 0.0}, {}, p);
    CHECK(r.free.z(0).real() == doctest::Approx(-1.0));
  }
  SUBCASE("bound pool saturated by the equivalent hard pulse")
  {
    TwoPoolParams const p{800.0, 60.0, 0.1, 4.3, 12.0, Lineshape::gaussian};
    InversionSpec const inv{};
    double const        w = inversion_saturation(inv, p, 1.0).wt;
    CHECK(w == doctest::Approx(pi * absorption_lineshape(12.0, 0.0, Lineshape::gaussian) * pi * pi / 0.010));
    auto const r = apply_inversion(TwoPoolSpinConfiguration{4, 0.1}, inv, p);
    CHECK(r.z_bound[0].real() == doctest::Approx(0.1 * std::exp(-w)).epsilon(1e-14));
    CHECK(r.free.z(0).real() == doctest::Approx(-0.9));
  }
  SUBCASE("transverse states are crushed")
  {
    TwoPoolParams const      p{800.0, 60.0, 0.1, 4.3, 12.0, Lineshape::gaussian};
    TwoPoolSpinConfiguration s{4, 0.1};
    s.free = rf_rotate(s.free, 0.4, 0.0);
    auto const r = apply_inversion(s, {0.9, 10.0, pi}, p);
    CHECK(r.free.f_plus(0) == Cx{});
    CHECK(r.free.z(0).real() == doctest::Approx(-0.9 * s.free.z(0).real()));
  }
  SUBCASE("efficiency bounds")
  {
    TwoPoolParams const p{};
    CHECK_THROWS_AS(apply_inversion(TwoPoolSpinConfiguration{2, 0.0}, {1.2, 10.0, pi}, p), std::invalid_argument);
  }
}
