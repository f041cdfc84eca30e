#pragma once

#include "mrf/sequence.hpp"

#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrf {

enum class DictKind
{
  single_pool_irff,
  two_pool_irff,
  two_pool_irff_mt
};

auto to_string(DictKind k) -> std::string;
auto dict_kind_from_string(std::string const &s) -> DictKind;
auto model_of(DictKind k) -> Model;
auto uses_mt_pulses(DictKind k) -> bool;

auto log_axis(double lo, double hi, std::size_t n) -> std::vector<double>;
auto linear_axis(double lo, double hi, std::size_t n) -> std::vector<double>;
/// {0} followed by n-1 log-spaced values in [lo, hi].
auto fraction_axis(std::size_t n, double lo = 0.005, double hi = 0.30) -> std::vector<double>;

struct GridSpec
{
  std::vector<double> t1_ms;
  std::vector<double> t2_ms;
  std::vector<double> b1;
  std::vector<double> f; // empty for single-pool dictionaries

  /// 70 x 70 x 41 (x 16) grid.
  static auto paper(DictKind k) -> GridSpec;
  /// 20 x 20 x 11 (x 8) grid.
  static auto desk(DictKind k) -> GridSpec;

  void validate() const;
  auto raw_size() const -> std::size_t;
};

struct ParamTuple
{
  double        t1_ms;
  double        t2_ms;
  double        b1;
  double        f;
  std::uint32_t i_t1, i_t2, i_b1, i_f;

  friend auto operator==(ParamTuple const &, ParamTuple const &) -> bool = default;
};

/// Cartesian product in row-major (t1, t2, b1, f) order, dropping T2 >= T1.
auto build_grid(GridSpec const &g) -> std::vector<ParamTuple>;
auto build_grid(DictKind kind, GridSpec const &g) -> std::vector<ParamTuple>;

struct DictionaryMeta
{
  DictKind      kind = DictKind::single_pool_irff;
  Model         model = Model::single_pool;
  std::uint64_t schedule_hash = 0;
  Lineshape     lineshape = Lineshape::gaussian;
  double        t2ss_us = 12.0;
  double        k_per_s = 4.3;
  std::string   settings; // creation settings as JSON text

  friend auto operator==(DictionaryMeta const &, DictionaryMeta const &) -> bool = default;
};

/// Parameter grid plus l2-normalized fingerprints stored as complex float32,
/// row-major (entry, time point).
struct Dictionary
{
  GridSpec                          grid;
  std::vector<ParamTuple>           params;
  std::size_t                       length = 0;
  std::vector<std::complex<float>>  entries;
  std::vector<double>               norms;
  DictionaryMeta                    meta;

  auto size() const -> std::size_t { return params.size(); }
  auto entry(std::size_t i) const -> std::span<std::complex<float> const>
  {
    return {entries.data() + i * length, length};
  }

  friend auto operator==(Dictionary const &a, Dictionary const &b) -> bool;
};

struct GenerateOptions
{
  std::size_t threads = 0;
  Lineshape   lineshape = Lineshape::gaussian;
  double      t2ss_us = 12.0;
  double      k_per_s = 4.3;
  SimOptions  sim;
  DictKind    kind = DictKind::single_pool_irff;
  /// Called with (done, total) from worker threads; may be empty.
  std::function<void(std::size_t, std::size_t)> progress;
};

class SimulationFailure : public std::runtime_error
{
public:
  SimulationFailure(ParamTuple t, std::string const &what);
  ParamTuple tuple;
};

auto generate(Schedule const &schedule,
              std::vector<ParamTuple> const &tuples,
              GridSpec const &grid,
              SliceProfile const &profile,
              Model model,
              GenerateOptions const &opts = {}) -> Dictionary;

// Binary container -----------------------------------------------------------

inline constexpr std::uint16_t dictionary_version_major = 1;
inline constexpr std::uint16_t dictionary_version_minor = 0;

class FormatError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

auto serialize(Dictionary const &d) -> std::vector<std::uint8_t>;
auto deserialize(std::span<std::uint8_t const> bytes) -> Dictionary;

/// Writes `path` and a JSON metadata sidecar at `path` + ".json".
void save(Dictionary const &d, std::filesystem::path const &path);
auto load(std::filesystem::path const &path) -> Dictionary;

/// CRC-64 of the serialized dictionary.
auto content_hash(Dictionary const &d) -> std::uint64_t;
auto metadata_json(Dictionary const &d) -> std::string;

/// Bytes needed to hold `entries` fingerprints of `length` points in memory.
auto memory_estimate_bytes(std::size_t entries, std::size_t length) -> std::uint64_t;

} // namespace mrf
