#pragma once

#include "mrf/matcher.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mrf {

/// Tabular study output. Rows are preformatted text; numeric summaries are
/// kept separately for programmatic checks.
struct StudyReport
{
  std::string                                  kind;
  std::vector<std::string>                     columns;
  std::vector<std::vector<std::string>>        rows;
  std::vector<std::pair<std::string, double>>  summary;
  nlohmann::json                               provenance = nlohmann::json::object();

  auto summary_value(std::string const &name) const -> double;
};

/// CSV with '#'-prefixed provenance and summary lines ahead of the header.
void write_csv(StudyReport const &r, std::filesystem::path const &path);

/// Adds complex white noise so that 20 log10(rms|s| / σ) = snr_db, where σ²
/// is the total complex noise variance (σ²/2 per component). An infinite
/// SNR leaves the series untouched.
void add_noise(std::vector<Cx> &s, double snr_db, std::mt19937_64 &rng);

/// Engine for one trial of a seeded study; independent of thread count.
auto trial_rng(std::uint64_t seed, std::uint64_t trial) -> std::mt19937_64;

struct StudySetup
{
  Schedule     irff;
  Schedule     irff_mt;
  SliceProfile profile;
  SimOptions   sim;

  /// IRFF and IRFF-MT with the default windowed-sinc slice profile.
  static auto defaults() -> StudySetup;
  auto schedule_for(DictKind k) const -> Schedule const &;
};

struct Sample
{
  std::string   name;
  TwoPoolParams tissue;
  double        b1 = 1.0;
};

/// Two-pool "truth" fingerprint under the schedule used by dictionary kind k.
auto simulate_truth(StudySetup const &setup, DictKind k, Sample const &s) -> std::vector<Cx>;

// Phantom comparison (sample x dictionary) ------------------------------------

struct PhantomDictionaries
{
  Dictionary const *single_pool_irff = nullptr;
  Dictionary const *two_pool_irff = nullptr;
  Dictionary const *two_pool_irff_mt = nullptr;
};

struct NoiseSpec
{
  double        snr_db = 30.0;
  std::uint64_t seed = 1;
};

struct PhantomCell
{
  std::string name;
  DictKind    dict;
  Sample      truth;
  MatchResult match;
};

struct PhantomStudy
{
  std::vector<PhantomCell> cells;
  StudyReport              report;

  auto cell(std::string const &sample, DictKind dict) const -> PhantomCell const &;
};

auto phantom_report(StudySetup const &setup, Sample const &water, Sample const &bsa, PhantomDictionaries const &dicts,
                    std::optional<NoiseSpec> noise = std::nullopt, MatchOptions const &mopts = {}) -> PhantomStudy;

// Sensitivity to the fixed semi-solid assumptions ------------------------------

struct SensitivityConfig
{
  std::size_t n_t2ss = 32;
  std::size_t n_k = 32;
  double      t2ss_lo_us = 5.0, t2ss_hi_us = 20.0;
  double      k_lo = 1.0, k_hi = 10.0;
  Sample      truth{"truth", TwoPoolParams{800.0, 60.0, 0.10, 4.3, 12.0, Lineshape::gaussian}, 1.0};
  std::size_t threads = 0;
};

struct SensitivityCell
{
  double      t2ss_us;
  double      k_per_s;
  MatchResult match;
  double      err_t1_ms, err_t2_ms, err_b1, err_f; // matched - truth
};

struct SensitivityStudy
{
  std::vector<double>          t2ss_axis;
  std::vector<double>          k_axis;
  std::vector<SensitivityCell> cells; // row-major (t2ss, k)
  SensitivityCell              assumed;
  StudyReport                  report;
};

/// Simulates the truth with each (T2ss, k) on the grid and matches it with a
/// dictionary built for the dictionary's own fixed (T2ss, k).
auto sensitivity_grid(StudySetup const &setup, SensitivityConfig const &cfg, Dictionary const &dict) -> SensitivityStudy;

// Water/MT separation -----------------------------------------------------------

struct SeparationConfig
{
  std::size_t   n_trials = 500;
  double        snr_db = 30.0;
  std::uint64_t seed = 1;
  std::size_t   threads = 0;
};

struct SeparationTrial
{
  std::size_t truth_index;
  MatchResult irff;
  MatchResult irff_mt;
};

struct SeparationStudy
{
  std::vector<SeparationTrial> trials;
  double                       rate_irff = 0.0;
  double                       rate_irff_mt = 0.0;
  StudyReport                  report;
};

/// Noisy F = 0 fingerprints (tuples drawn from the shared grid) matched with
/// both dictionaries; reports how often a spurious F > 0 is returned.
auto separation_study(StudySetup const &setup, SeparationConfig const &cfg, Dictionary const &dict_irff,
                      Dictionary const &dict_irff_mt) -> SeparationStudy;

// ROI statistics ------------------------------------------------------------------

struct RoiStat
{
  int         label;
  std::size_t count; // finite values
  double      median;
};

/// Median per label, ignoring NaN values; labels in ascending order.
auto roi_stats(std::span<double const> values, std::span<int const> labels) -> std::vector<RoiStat>;
auto roi_report(std::vector<MatchResult> const &maps, std::span<int const> labels) -> StudyReport;

auto median(std::vector<double> v) -> double;

/// True when `truth` lies between the neighbours of axis[matched] (clamped at
/// the ends), i.e. the match is at most one grid step away.
auto within_one_step(std::vector<double> const &axis, std::size_t matched, double truth) -> bool;

} // namespace mrf
