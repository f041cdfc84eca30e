#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <variant>
#include <vector>

namespace mrf {

using Cx = std::complex<double>;

/// Dephasing-order state of a single spin pool.
///
/// Orders run k = 0..K. Transverse states follow F+(k) = (Mx + iMy)-like
/// coefficients of exp(ikθ) and F-(k) those of exp(-ikθ), so that
/// f_minus(0) == conj(f_plus(0)). Magnetization is in units of M0 = 1.
///
/// `active()` is one past the highest order that may be nonzero; the
/// propagators only touch orders below it.
class SpinConfiguration
{
public:
  explicit SpinConfiguration(std::size_t max_order = 0, double m0 = 1.0);

  static auto equilibrium(std::size_t max_order, double m0 = 1.0) -> SpinConfiguration
  {
    return SpinConfiguration{max_order, m0};
  }

  auto max_order() const -> std::size_t { return fp_.size() - 1; }
  auto active() const -> std::size_t { return active_; }

  auto f_plus(std::size_t k) const -> Cx { return fp_[k]; }
  auto f_minus(std::size_t k) const -> Cx { return fm_[k]; }
  auto z(std::size_t k) const -> Cx { return z_[k]; }

  void set_f_plus(std::size_t k, Cx v);
  void set_f_minus(std::size_t k, Cx v);
  void set_z(std::size_t k, Cx v);

  auto f_plus() -> std::span<Cx> { return fp_; }
  auto f_minus() -> std::span<Cx> { return fm_; }
  auto z() -> std::span<Cx> { return z_; }
  auto f_plus() const -> std::span<Cx const> { return fp_; }
  auto f_minus() const -> std::span<Cx const> { return fm_; }
  auto z() const -> std::span<Cx const> { return z_; }

  void set_active(std::size_t n);
  void zero_transverse();

  friend auto operator==(SpinConfiguration const &, SpinConfiguration const &) -> bool = default;

private:
  std::vector<Cx> fp_;
  std::vector<Cx> fm_;
  std::vector<Cx> z_;
  std::size_t     active_ = 1;
};

struct RelaxationParams
{
  double t1_ms;
  double t2_ms;
};

void validate(RelaxationParams const &p);

/// Precomputed 3x3 RF mixing matrix acting on (F+, F-, Z) of every order.
///
/// Convention: right-handed rotation by `flip` about the transverse axis
/// (cos phase, sin phase, 0). Equilibrium excited with phase 0 gives
/// F+(0) = -i sin(flip).
struct RfMatrix
{
  RfMatrix(double flip_rad, double phase_rad);

  Cx pp, pm, pz; // row F+
  Cx mp, mm, mz; // row F-
  Cx zp, zm, zz; // row Z
};

struct RelaxFactors
{
  RelaxFactors(double dt_ms, RelaxationParams const &p);
  double e1;
  double e2;
};

void rf_rotate_inplace(SpinConfiguration &s, RfMatrix const &m);
void relax_inplace(SpinConfiguration &s, RelaxFactors const &r, double m0 = 1.0);
void grad_shift_inplace(SpinConfiguration &s, int cycles);

/// Drops trailing orders whose maximum attainable contribution to a later
/// F+(0) readout, |state(k)| * e2^k, is below `tol`.
void prune_inplace(SpinConfiguration &s, double e2, double tol);

auto rf_rotate(SpinConfiguration s, double flip_rad, double phase_rad) -> SpinConfiguration;
auto relax(SpinConfiguration s, double dt_ms, RelaxationParams const &p) -> SpinConfiguration;
auto grad_shift(SpinConfiguration s, int cycles) -> SpinConfiguration;
auto readout_signal(SpinConfiguration const &s, double demod_phase_rad) -> Cx;

// Event list shared by the EPG runner and the isochromat reference.
namespace event {
struct Rf
{
  double flip_rad;
  double phase_rad;
};
struct Relax
{
  double dt_ms;
};
struct Shift
{
  int cycles = 1;
};
struct Readout
{
  double demod_phase_rad = 0.0;
};
struct Spoil
{
};
} // namespace event

using Event = std::variant<event::Rf, event::Relax, event::Shift, event::Readout, event::Spoil>;

struct EngineOptions
{
  std::size_t max_order = 256;
  /// Zero all transverse states before each RF pulse.
  bool ideal_spoiling = false;
};

/// Runs an event list through the EPG propagators from equilibrium and
/// returns one sample per Readout event.
auto run_epg(std::span<Event const> events, RelaxationParams const &p, EngineOptions const &opts)
  -> std::vector<Cx>;

/// Brute-force reference: n_spins classical magnetization vectors with
/// equally spaced dephasing angles 2πj/n_spins per gradient cycle.
/// Throws on event kinds that have no isochromat meaning (Spoil).
auto isochromat_reference(std::span<Event const> events, RelaxationParams const &p, std::size_t n_spins)
  -> std::vector<Cx>;

/// Highest gradient order reachable by an event list (sum of |cycles|).
auto max_reachable_order(std::span<Event const> events) -> std::size_t;

} // namespace mrf
