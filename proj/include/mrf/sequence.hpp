#pragma once

#include "mrf/epgx.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mrf {

enum class Waveform
{
  hard,
  gaussian,
  windowed_sinc
};

auto to_string(Waveform w) -> std::string;
auto waveform_from_string(std::string const &s) -> Waveform;

/// Peak-normalized amplitude samples at the midpoints of `n` equal intervals.
/// Gaussian: σ = duration/6. Windowed sinc: time-bandwidth product 4, Hamming window.
auto sample_waveform(Waveform w, std::size_t n = 256) -> std::vector<double>;

/// Full-width excitation bandwidth in Hz used to lay out the slice profile.
auto waveform_bandwidth_hz(Waveform w, double duration_ms) -> double;

enum class PulseKind
{
  excitation,
  inversion,
  mt_offres
};

struct PulseEvent
{
  PulseKind kind = PulseKind::excitation;
  double    flip_deg = 0.0;
  double    phase_deg = 0.0;
  double    duration_ms = 1.0;
  double    offset_hz = 0.0;
  Waveform  waveform = Waveform::hard;
  bool      readout = false;
  double    demod_phase_deg = 0.0;
};

enum class SegmentType
{
  fisp,
  flash
};

struct Slot
{
  std::optional<PulseEvent> pulse;
  int                       shift = 0; // gradient cycles at the end of the slot
};

struct SegmentRange
{
  SegmentType type;
  std::size_t first_slot;
  std::size_t count;
};

// ---------------------------------------------------------------------------
// Schedule document (JSON). Field names are part of the file format.

struct FlipGenerator
{
  std::string shape = "half_sine";
  double      max_deg = 60.0;
  std::size_t count = 350;
};

struct SegmentConfig
{
  SegmentType                  type = SegmentType::fisp;
  std::optional<std::vector<double>> flips_deg;
  std::optional<FlipGenerator> generator;
  double                       phase_increment_deg = 0.0;

  auto flips() const -> std::vector<double>;
};

struct MtPulseConfig
{
  double   flip_deg = 180.0;
  double   duration_ms = 7.0;
  double   offset_hz = 5000.0;
  Waveform waveform = Waveform::gaussian;
};

struct GapConfig
{
  std::size_t                  slots = 50;
  std::optional<MtPulseConfig> mt_pulse;
};

struct ScheduleConfig
{
  double                     tr_ms = 7.5;
  double                     inversion_duration_ms = 10.0;
  double                     inversion_efficiency = 1.0;
  std::vector<SegmentConfig> segments;
  std::vector<GapConfig>     gaps;
  Waveform                   excitation_waveform = Waveform::windowed_sinc;
  double                     excitation_duration_ms = 1.0;

  /// IRFF defaults: FISP, FISP, FLASH, FLASH with half-sine trains peaking
  /// at 30°, 60°, 30°, 60°, 350 pulses each, 50-slot gaps.
  static auto irff(bool with_mt_pulses = false, std::size_t segment_length = 350) -> ScheduleConfig;

  void validate() const;
};

auto to_json(ScheduleConfig const &c) -> nlohmann::json;
auto schedule_config_from_json(nlohmann::json const &j) -> ScheduleConfig;

/// Canonical text of the schedule document.
auto dump(ScheduleConfig const &c) -> std::string;

// ---------------------------------------------------------------------------

struct Schedule
{
  double                    tr_ms = 7.5;
  std::vector<Slot>         slots;
  std::vector<SegmentRange> segments;
  std::size_t               total_readouts = 0;
  InversionSpec             inversion;
  Waveform                  excitation_waveform = Waveform::windowed_sinc;
  double                    excitation_duration_ms = 1.0;

  auto mt_pulse_count() const -> std::size_t;
  auto longest_segment() const -> std::size_t;
  /// 64-bit digest of the slot timeline.
  auto hash() const -> std::uint64_t;
  /// Binary serialization of the slot timeline (the input to hash()).
  auto serialize() const -> std::vector<std::uint8_t>;
};

/// Quadratic RF-spoiling phase: increment·n(n+1)/2, reduced to [0, 360).
auto rf_spoil_phase(std::size_t n, double increment_deg) -> double;

auto build_schedule(ScheduleConfig const &config) -> Schedule;

/// Builds the IRFF timeline; with_mt_pulses places 50 off-resonance pulses
/// (7 ms, 180°, 5 kHz, gaussian) in each slot of gaps 1 and 2 and clears the
/// others, without it every gap is empty.
auto build_irff(ScheduleConfig config, bool with_mt_pulses) -> Schedule;

// ---------------------------------------------------------------------------

struct SliceBin
{
  Cx     scale;
  double weight;
};

struct SliceProfile
{
  std::vector<SliceBin> bins;

  static auto single_hard_bin() -> SliceProfile { return {{SliceBin{Cx{1.0, 0.0}, 1.0}}}; }
};

auto compute_slice_profile(Waveform w, double nominal_flip_deg, std::size_t n_bins = 16) -> SliceProfile;

enum class Model
{
  single_pool,
  two_pool
};

auto to_string(Model m) -> std::string;
auto model_from_string(std::string const &s) -> Model;

struct SimOptions
{
  /// 0 selects the longest segment length capped at 256.
  std::size_t max_order = 0;
  double      prune_tol = 0.0;
};

/// Default maximum dephasing order for a schedule.
auto default_max_order(Schedule const &s) -> std::size_t;

auto simulate_fingerprint(Schedule const &schedule,
                          TwoPoolParams const &tissue,
                          double b1_scale,
                          SliceProfile const &profile,
                          Model model,
                          SimOptions const &opts = {}) -> std::vector<Cx>;

} // namespace mrf
