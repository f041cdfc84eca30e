#pragma once

#include "mrf/epg.hpp"

#include <span>
#include <string>
#include <vector>

namespace mrf {

enum class Lineshape
{
  gaussian,
  super_lorentzian
};

auto to_string(Lineshape l) -> std::string;
auto lineshape_from_string(std::string const &s) -> Lineshape;

/// Free pool + semi-solid pool. The semi-solid pool shares T1 with the
/// free pool. `k_per_s` is the free -> semi-solid rate; the reverse rate
/// follows from detailed balance.
struct TwoPoolParams
{
  double    t1_ms = 1000.0;
  double    t2_ms = 100.0;
  double    f_frac = 0.0;
  double    k_per_s = 4.3;
  double    t2ss_us = 12.0;
  Lineshape lineshape = Lineshape::gaussian;

  auto relaxation() const -> RelaxationParams { return {t1_ms, t2_ms}; }
};

void validate(TwoPoolParams const &p);

class TwoPoolSpinConfiguration
{
public:
  explicit TwoPoolSpinConfiguration(std::size_t max_order = 0, double f_frac = 0.0);

  SpinConfiguration free;
  std::vector<Cx>   z_bound;

  friend auto operator==(TwoPoolSpinConfiguration const &, TwoPoolSpinConfiguration const &) -> bool = default;
};

/// Dimensionless saturation exponent of one pulse; the bound pool is
/// multiplied by exp(-wt).
struct SaturationSpec
{
  double wt = 0.0;
};

/// Absorption lineshape G(Δ) in seconds.
auto absorption_lineshape(double t2ss_us, double delta_hz, Lineshape kind) -> double;

/// ∫b² dt / (∫b dt)² in 1/s for a waveform sampled uniformly over `duration_ms`.
/// Negative lobes (sinc side lobes) are allowed; the net area must be nonzero.
auto waveform_power_factor(std::span<double const> waveform, double duration_ms) -> double;

auto pulse_saturation(double flip_rad,
                      double duration_ms,
                      std::span<double const> waveform,
                      double b1_scale,
                      double delta_hz,
                      double t2ss_us,
                      Lineshape kind) -> SaturationSpec;

/// Exact propagator of the coupled longitudinal system over one interval.
struct ExchangeFactors
{
  ExchangeFactors(double dt_ms, TwoPoolParams const &p);

  RelaxFactors relax;
  bool         coupled; // false when F = 0: single-pool relaxation only
  double       f_frac;
  double       aa, ab, ba, bb; // exp(Λ dt)
};

void relax_exchange_inplace(TwoPoolSpinConfiguration &s, ExchangeFactors const &x);
void saturate_bound_inplace(TwoPoolSpinConfiguration &s, double wt);

auto relax_exchange(TwoPoolSpinConfiguration s, double dt_ms, TwoPoolParams const &p) -> TwoPoolSpinConfiguration;
auto two_pool_rf(TwoPoolSpinConfiguration s, double flip_rad, double phase_rad, SaturationSpec sat)
  -> TwoPoolSpinConfiguration;

struct InversionSpec
{
  double efficiency = 1.0;
  double duration_ms = 10.0;
  double equivalent_flip_rad = 3.14159265358979323846;
};

auto inversion_saturation(InversionSpec const &inv, TwoPoolParams const &p, double b1_scale) -> SaturationSpec;
void apply_inversion_inplace(TwoPoolSpinConfiguration &s, double efficiency, SaturationSpec sat);
auto apply_inversion(TwoPoolSpinConfiguration s, InversionSpec const &inv, TwoPoolParams const &p, double b1_scale = 1.0)
  -> TwoPoolSpinConfiguration;

} // namespace mrf
