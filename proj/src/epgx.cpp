#include "mrf/epgx.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace mrf {

auto to_string(Lineshape l) -> std::string
{
  return l == Lineshape::gaussian ? "gaussian" : "super_lorentzian";
}

auto lineshape_from_string(std::string const &s) -> Lineshape
{
  if (s == "gaussian") { return Lineshape::gaussian; }
  if (s == "super_lorentzian" || s == "superlorentzian") { return Lineshape::super_lorentzian; }
  throw std::invalid_argument("unknown lineshape: " + s);
}

void validate(TwoPoolParams const &p)
{
  validate(p.relaxation());
  if (!(p.f_frac >= 0.0 && p.f_frac < 0.5)) { throw std::invalid_argument("fractional pool size outside [0, 0.5)"); }
  if (!(p.k_per_s >= 0.0) || !std::isfinite(p.k_per_s)) { throw std::invalid_argument("exchange rate must be >= 0"); }
  if (!(p.t2ss_us > 0.0) || !std::isfinite(p.t2ss_us)) { throw std::invalid_argument("T2ss must be positive"); }
}

TwoPoolSpinConfiguration::TwoPoolSpinConfiguration(std::size_t max_order, double f_frac)
  : free{max_order, 1.0 - f_frac}
  , z_bound(max_order + 1)
{
  z_bound[0] = f_frac;
}

namespace {

auto gaussian_g(double t2ss_s, double delta_hz) -> double
{
  double const x = 2.0 * std::numbers::pi * delta_hz * t2ss_s;
  return t2ss_s / std::sqrt(2.0 * std::numbers::pi) * std::exp(-0.5 * x * x);
}

// ∫_0^1 sqrt(2/π) T2 / |3u²-1| exp(-2 (2πΔT2 / (3u²-1))²) du, u = cos θ.
auto super_lorentzian_quadrature(double t2ss_s, double delta_hz) -> double
{
  constexpr int n = 4000; // even, composite Simpson
  double const  h = 1.0 / n;
  double const  w = 2.0 * std::numbers::pi * delta_hz * t2ss_s;
  auto          f = [&](double u) {
    double const d = std::abs(3.0 * u * u - 1.0);
    if (d < 1e-300) { return 0.0; }
    double const r = w / d;
    return std::sqrt(2.0 / std::numbers::pi) * t2ss_s / d * std::exp(-2.0 * r * r);
  };
  double sum = f(0.0) + f(1.0);
  for (int i = 1; i < n; i++) {
    sum += (i % 2 ? 4.0 : 2.0) * f(i * h);
  }
  return sum * h / 3.0;
}

auto super_lorentzian_g(double t2ss_s, double delta_hz) -> double
{
  constexpr double cutoff = 1000.0;
  double const     x = std::abs(delta_hz);
  if (x >= cutoff) { return super_lorentzian_quadrature(t2ss_s, x); }
  // Below the cutoff the integral diverges towards Δ = 0; use an even cubic
  // h(x) = a + b x² + c x³ matched to value, slope and curvature at the cutoff.
  double const d = 10.0;
  double const g0 = super_lorentzian_quadrature(t2ss_s, cutoff);
  double const gp = super_lorentzian_quadrature(t2ss_s, cutoff + d);
  double const gpp = super_lorentzian_quadrature(t2ss_s, cutoff + 2 * d);
  double const d1 = (-3 * g0 + 4 * gp - gpp) / (2 * d);
  double const d2 = (g0 - 2 * gp + gpp) / (d * d);
  double const L = cutoff;
  // h'(L) = 2bL + 3cL², h''(L) = 2b + 6cL
  double const c = (d2 - d1 / L) / (3.0 * L);
  double const b = (d2 - 6.0 * c * L) / 2.0;
  double const a = g0 - b * L * L - c * L * L * L;
  return a + b * x * x + c * x * x * x;
}

} // namespace

auto absorption_lineshape(double t2ss_us, double delta_hz, Lineshape kind) -> double
{
  if (!(t2ss_us > 0.0)) { throw std::invalid_argument("T2ss must be positive"); }
  double const t2 = t2ss_us * 1e-6;
  return kind == Lineshape::gaussian ? gaussian_g(t2, delta_hz) : super_lorentzian_g(t2, delta_hz);
}

auto waveform_power_factor(std::span<double const> waveform, double duration_ms) -> double
{
  if (!(duration_ms > 0.0)) { throw std::invalid_argument("pulse duration must be positive"); }
  if (waveform.empty()) { throw std::invalid_argument("empty waveform"); }
  double const dt = duration_ms * 1e-3 / static_cast<double>(waveform.size());
  double       area = 0.0, energy = 0.0;
  for (double b : waveform) {
    if (!std::isfinite(b)) { throw std::invalid_argument("non-finite waveform sample"); }
    area += b * dt;
    energy += b * b * dt;
  }
  if (!(std::abs(area) > 0.0)) { throw std::invalid_argument("waveform has zero integral"); }
  return energy / (area * area);
}

auto pulse_saturation(double flip_rad,
                      double duration_ms,
                      std::span<double const> waveform,
                      double b1_scale,
                      double delta_hz,
                      double t2ss_us,
                      Lineshape kind) -> SaturationSpec
{
  double const alpha = b1_scale * flip_rad;
  double const g = absorption_lineshape(t2ss_us, delta_hz, kind);
  return {std::numbers::pi * g * alpha * alpha * waveform_power_factor(waveform, duration_ms)};
}

ExchangeFactors::ExchangeFactors(double dt_ms, TwoPoolParams const &p)
  : relax{dt_ms, p.relaxation()}
  , coupled{p.f_frac > 0.0}
  , f_frac{p.f_frac}
{
  // Λ = -R1 I + K, K = [[-ka, kb], [ka, -kb]] has eigenvalues 0 and -(ka + kb),
  // so exp(Λt) = exp(-R1 t) (I + (1 - exp(-(ka+kb) t)) / (ka+kb) K).
  double const dt = dt_ms * 1e-3;
  double const ka = p.k_per_s;
  double const kb = coupled ? p.k_per_s * (1.0 - p.f_frac) / p.f_frac : 0.0;
  double const s = ka + kb;
  double const phi = s > 0.0 ? -std::expm1(-s * dt) / s : dt;
  double const e1 = relax.e1;
  aa = e1 * (1.0 - phi * ka);
  ab = e1 * (phi * kb);
  ba = e1 * (phi * ka);
  bb = e1 * (1.0 - phi * kb);
}

void relax_exchange_inplace(TwoPoolSpinConfiguration &s, ExchangeFactors const &x)
{
  if (!x.coupled) {
    relax_inplace(s.free, x.relax, 1.0);
    return;
  }
  auto              fp = s.free.f_plus();
  auto              fm = s.free.f_minus();
  auto              za = s.free.z();
  auto              zb = std::span<Cx>{s.z_bound};
  std::size_t const n = s.free.active();
  double const      e2 = x.relax.e2;

  double const eqa = 1.0 - x.f_frac, eqb = x.f_frac;
  // order 0 relaxes towards (1-F, F)
  {
    Cx const a = za[0] - eqa, b = zb[0] - eqb;
    za[0] = eqa + x.aa * a + x.ab * b;
    zb[0] = eqb + x.ba * a + x.bb * b;
    fp[0] *= e2;
    fm[0] *= e2;
  }
  for (std::size_t k = 1; k < n; k++) {
    Cx const a = za[k], b = zb[k];
    za[k] = x.aa * a + x.ab * b;
    zb[k] = x.ba * a + x.bb * b;
    fp[k] *= e2;
    fm[k] *= e2;
  }
}

void saturate_bound_inplace(TwoPoolSpinConfiguration &s, double wt)
{
  if (wt == 0.0) { return; }
  double const      f = std::exp(-wt);
  std::size_t const n = s.free.active();
  for (std::size_t k = 0; k < n; k++) {
    s.z_bound[k] *= f;
  }
}

auto relax_exchange(TwoPoolSpinConfiguration s, double dt_ms, TwoPoolParams const &p) -> TwoPoolSpinConfiguration
{
  validate(p);
  if (!(dt_ms >= 0.0) || !std::isfinite(dt_ms)) { throw std::invalid_argument("relaxation interval must be >= 0"); }
  relax_exchange_inplace(s, ExchangeFactors{dt_ms, p});
  return s;
}

auto two_pool_rf(TwoPoolSpinConfiguration s, double flip_rad, double phase_rad, SaturationSpec sat)
  -> TwoPoolSpinConfiguration
{
  if (!(sat.wt >= 0.0)) { throw std::invalid_argument("saturation exponent must be >= 0"); }
  s.free = rf_rotate(std::move(s.free), flip_rad, phase_rad);
  saturate_bound_inplace(s, sat.wt);
  return s;
}

namespace {
constexpr double hard[1] = {1.0};
}

auto inversion_saturation(InversionSpec const &inv, TwoPoolParams const &p, double b1_scale) -> SaturationSpec
{
  return pulse_saturation(inv.equivalent_flip_rad, inv.duration_ms, hard, b1_scale, 0.0, p.t2ss_us, p.lineshape);
}

void apply_inversion_inplace(TwoPoolSpinConfiguration &s, double efficiency, SaturationSpec sat)
{
  s.free.zero_transverse();
  std::size_t const n = s.free.active();
  auto              z = s.free.z();
  for (std::size_t k = 0; k < n; k++) {
    z[k] *= -efficiency;
  }
  saturate_bound_inplace(s, sat.wt);
}

auto apply_inversion(TwoPoolSpinConfiguration s, InversionSpec const &inv, TwoPoolParams const &p, double b1_scale)
  -> TwoPoolSpinConfiguration
{
  if (!(inv.efficiency >= 0.0 && inv.efficiency <= 1.0)) { throw std::invalid_argument("inversion efficiency outside [0, 1]"); }
  apply_inversion_inplace(s, inv.efficiency, inversion_saturation(inv, p, b1_scale));
  return s;
}

} // namespace mrf
