#include "mrf/epg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mrf {

namespace {

void require_finite(double v, char const *what)
{
  if (!std::isfinite(v)) { throw std::invalid_argument(std::string("non-finite ") + what); }
}

// std::complex arrays may be accessed as interleaved double pairs.
auto as_doubles(std::span<Cx> v) -> double * { return reinterpret_cast<double *>(v.data()); }

} // namespace

SpinConfiguration::SpinConfiguration(std::size_t max_order, double m0)
  : fp_(max_order + 1)
  , fm_(max_order + 1)
  , z_(max_order + 1)
{
  z_[0] = m0;
}

void SpinConfiguration::set_f_plus(std::size_t k, Cx v)
{
  fp_.at(k) = v;
  active_ = std::max(active_, k + 1);
}

void SpinConfiguration::set_f_minus(std::size_t k, Cx v)
{
  fm_.at(k) = v;
  active_ = std::max(active_, k + 1);
}

void SpinConfiguration::set_z(std::size_t k, Cx v)
{
  z_.at(k) = v;
  active_ = std::max(active_, k + 1);
}

void SpinConfiguration::set_active(std::size_t n)
{
  n = std::clamp<std::size_t>(n, 1, fp_.size());
  for (std::size_t k = n; k < active_; k++) {
    fp_[k] = fm_[k] = z_[k] = 0.0;
  }
  active_ = n;
}

void SpinConfiguration::zero_transverse()
{
  std::fill(fp_.begin(), fp_.end(), Cx{});
  std::fill(fm_.begin(), fm_.end(), Cx{});
}

void validate(RelaxationParams const &p)
{
  require_finite(p.t1_ms, "T1");
  require_finite(p.t2_ms, "T2");
  if (p.t1_ms <= 0.0 || p.t2_ms <= 0.0) { throw std::invalid_argument("relaxation times must be positive"); }
  if (p.t2_ms > p.t1_ms) { throw std::invalid_argument("T2 > T1 is not physical"); }
}

RfMatrix::RfMatrix(double flip_rad, double phase_rad)
{
  double const c2 = std::cos(flip_rad / 2) * std::cos(flip_rad / 2);
  double const s2 = std::sin(flip_rad / 2) * std::sin(flip_rad / 2);
  double const sa = std::sin(flip_rad);
  double const ca = std::cos(flip_rad);
  Cx const     e1 = std::polar(1.0, phase_rad);
  Cx const     e2 = std::polar(1.0, 2 * phase_rad);
  Cx const     i{0.0, 1.0};

  pp = c2;
  pm = e2 * s2;
  pz = -i * e1 * sa;
  mp = std::conj(e2) * s2;
  mm = c2;
  mz = i * std::conj(e1) * sa;
  zp = -0.5 * i * std::conj(e1) * sa;
  zm = 0.5 * i * e1 * sa;
  zz = ca;
}

RelaxFactors::RelaxFactors(double dt_ms, RelaxationParams const &p)
  : e1{std::exp(-dt_ms / p.t1_ms)}
  , e2{std::exp(-dt_ms / p.t2_ms)}
{
}

void rf_rotate_inplace(SpinConfiguration &s, RfMatrix const &m)
{
  double *fp = as_doubles(s.f_plus());
  double *fm = as_doubles(s.f_minus());
  double *z = as_doubles(s.z());

  double const ppr = m.pp.real(), pmr = m.pm.real(), pmi = m.pm.imag(), pzr = m.pz.real(), pzi = m.pz.imag();
  double const mpr = m.mp.real(), mpi = m.mp.imag(), mmr = m.mm.real(), mzr = m.mz.real(), mzi = m.mz.imag();
  double const zpr = m.zp.real(), zpi = m.zp.imag(), zmr = m.zm.real(), zmi = m.zm.imag(), zzr = m.zz.real();

  std::size_t const n = s.active();
  for (std::size_t k = 0; k < n; k++) {
    double const ar = fp[2 * k], ai = fp[2 * k + 1];
    double const br = fm[2 * k], bi = fm[2 * k + 1];
    double const cr = z[2 * k], ci = z[2 * k + 1];
    fp[2 * k] = ppr * ar + (pmr * br - pmi * bi) + (pzr * cr - pzi * ci);
    fp[2 * k + 1] = ppr * ai + (pmr * bi + pmi * br) + (pzr * ci + pzi * cr);
    fm[2 * k] = (mpr * ar - mpi * ai) + mmr * br + (mzr * cr - mzi * ci);
    fm[2 * k + 1] = (mpr * ai + mpi * ar) + mmr * bi + (mzr * ci + mzi * cr);
    z[2 * k] = (zpr * ar - zpi * ai) + (zmr * br - zmi * bi) + zzr * cr;
    z[2 * k + 1] = (zpr * ai + zpi * ar) + (zmr * bi + zmi * br) + zzr * ci;
  }
  s.f_minus()[0] = std::conj(s.f_plus()[0]);
}

void relax_inplace(SpinConfiguration &s, RelaxFactors const &r, double m0)
{
  double *fp = as_doubles(s.f_plus());
  double *fm = as_doubles(s.f_minus());
  double *z = as_doubles(s.z());

  std::size_t const n = 2 * s.active();
  for (std::size_t k = 0; k < n; k++) {
    fp[k] *= r.e2;
    fm[k] *= r.e2;
    z[k] *= r.e1;
  }
  z[0] += m0 * (1.0 - r.e1);
}

void grad_shift_inplace(SpinConfiguration &s, int cycles)
{
  auto              fp = s.f_plus();
  auto              fm = s.f_minus();
  std::size_t const cap = fp.size();

  for (; cycles > 0; cycles--) {
    std::size_t const n = s.active();
    std::size_t const top = std::min(n, cap - 1);
    // F+ moves up one order; the highest order is dropped at the cap.
    for (std::size_t k = top; k >= 1; k--) {
      fp[k] = fp[k - 1];
    }
    for (std::size_t k = 0; k + 1 < n; k++) {
      fm[k] = fm[k + 1];
    }
    fm[n - 1] = 0.0;
    fp[0] = std::conj(fm[0]);
    s.set_active(top + 1);
  }
  for (; cycles < 0; cycles++) {
    std::size_t const n = s.active();
    std::size_t const top = std::min(n, cap - 1);
    for (std::size_t k = top; k >= 1; k--) {
      fm[k] = fm[k - 1];
    }
    for (std::size_t k = 0; k + 1 < n; k++) {
      fp[k] = fp[k + 1];
    }
    fp[n - 1] = 0.0;
    fm[0] = std::conj(fp[0]);
    s.set_active(top + 1);
  }
}

void prune_inplace(SpinConfiguration &s, double e2, double tol)
{
  if (tol <= 0.0) { return; }
  std::size_t n = s.active();
  auto const  fp = s.f_plus();
  auto const  fm = s.f_minus();
  auto const  z = s.z();
  while (n > 1) {
    std::size_t const k = n - 1;
    double const      mag = std::max({std::abs(fp[k]), std::abs(fm[k]), std::abs(z[k])});
    if (mag * std::pow(e2, static_cast<double>(k)) >= tol) { break; }
    n--;
  }
  s.set_active(n);
}

auto rf_rotate(SpinConfiguration s, double flip_rad, double phase_rad) -> SpinConfiguration
{
  require_finite(flip_rad, "flip angle");
  require_finite(phase_rad, "phase");
  rf_rotate_inplace(s, RfMatrix{flip_rad, phase_rad});
  return s;
}

auto relax(SpinConfiguration s, double dt_ms, RelaxationParams const &p) -> SpinConfiguration
{
  require_finite(dt_ms, "interval");
  if (dt_ms < 0.0) { throw std::invalid_argument("negative relaxation interval"); }
  validate(p);
  relax_inplace(s, RelaxFactors{dt_ms, p});
  return s;
}

auto grad_shift(SpinConfiguration s, int cycles) -> SpinConfiguration
{
  grad_shift_inplace(s, cycles);
  return s;
}

auto readout_signal(SpinConfiguration const &s, double demod_phase_rad) -> Cx
{
  return s.f_plus(0) * std::polar(1.0, -demod_phase_rad);
}

auto max_reachable_order(std::span<Event const> events) -> std::size_t
{
  std::size_t n = 0;
  for (auto const &e : events) {
    if (auto const *sh = std::get_if<event::Shift>(&e)) { n += static_cast<std::size_t>(std::abs(sh->cycles)); }
  }
  return n;
}

auto run_epg(std::span<Event const> events, RelaxationParams const &p, EngineOptions const &opts)
  -> std::vector<Cx>
{
  validate(p);
  SpinConfiguration s{opts.max_order};
  std::vector<Cx>   out;
  for (auto const &e : events) {
    if (auto const *rf = std::get_if<event::Rf>(&e)) {
      if (opts.ideal_spoiling) { s.zero_transverse(); }
      rf_rotate_inplace(s, RfMatrix{rf->flip_rad, rf->phase_rad});
    } else if (auto const *rx = std::get_if<event::Relax>(&e)) {
      if (rx->dt_ms < 0.0) { throw std::invalid_argument("negative relaxation interval"); }
      relax_inplace(s, RelaxFactors{rx->dt_ms, p});
    } else if (auto const *sh = std::get_if<event::Shift>(&e)) {
      grad_shift_inplace(s, sh->cycles);
    } else if (auto const *ro = std::get_if<event::Readout>(&e)) {
      out.push_back(readout_signal(s, ro->demod_phase_rad));
    } else {
      s.zero_transverse();
    }
  }
  return out;
}

namespace {

struct Vec3
{
  double x, y, z;
};

// Right-handed rotation of v by angle about the unit axis (cos phase, sin phase, 0).
auto rotate(Vec3 v, double angle, double phase) -> Vec3
{
  double const ux = std::cos(phase), uy = std::sin(phase);
  double const c = std::cos(angle), s = std::sin(angle);
  double const dot = ux * v.x + uy * v.y;
  // u x v with uz = 0
  double const cx = uy * v.z;
  double const cy = -ux * v.z;
  double const cz = ux * v.y - uy * v.x;
  return {v.x * c + cx * s + ux * dot * (1 - c), v.y * c + cy * s + uy * dot * (1 - c), v.z * c + cz * s};
}

} // namespace

auto isochromat_reference(std::span<Event const> events, RelaxationParams const &p, std::size_t n_spins)
  -> std::vector<Cx>
{
  validate(p);
  if (n_spins < 1) { throw std::invalid_argument("need at least one isochromat"); }
  for (auto const &e : events) {
    if (std::holds_alternative<event::Spoil>(e)) {
      throw std::invalid_argument("isochromat reference does not support ideal spoiling events");
    }
  }

  std::vector<Vec3>   m(n_spins, Vec3{0.0, 0.0, 1.0});
  std::vector<double> theta(n_spins);
  for (std::size_t j = 0; j < n_spins; j++) {
    theta[j] = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n_spins);
  }

  std::vector<Cx> out;
  for (auto const &e : events) {
    if (auto const *rf = std::get_if<event::Rf>(&e)) {
      for (auto &v : m) {
        v = rotate(v, rf->flip_rad, rf->phase_rad);
      }
    } else if (auto const *rx = std::get_if<event::Relax>(&e)) {
      double const e1 = std::exp(-rx->dt_ms / p.t1_ms);
      double const e2 = std::exp(-rx->dt_ms / p.t2_ms);
      for (auto &v : m) {
        v.x *= e2;
        v.y *= e2;
        v.z = v.z * e1 + (1.0 - e1);
      }
    } else if (auto const *sh = std::get_if<event::Shift>(&e)) {
      for (std::size_t j = 0; j < n_spins; j++) {
        Cx const t = Cx{m[j].x, m[j].y} * std::polar(1.0, sh->cycles * theta[j]);
        m[j].x = t.real();
        m[j].y = t.imag();
      }
    } else if (auto const *ro = std::get_if<event::Readout>(&e)) {
      Cx sum{};
      for (auto const &v : m) {
        sum += Cx{v.x, v.y};
      }
      out.push_back(sum / static_cast<double>(n_spins) * std::polar(1.0, -ro->demod_phase_rad));
    }
  }
  return out;
}

} // namespace mrf
