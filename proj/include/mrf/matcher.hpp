#pragma once

#include "mrf/dictionary.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mrf {

enum class MatchMode
{
  complex,
  magnitude
};

auto to_string(MatchMode m) -> std::string;
auto match_mode_from_string(std::string const &s) -> MatchMode;

struct MatchOptions
{
  MatchMode mode = MatchMode::complex;
  /// When set, the dictionary must have been built for this schedule.
  std::optional<std::uint64_t> schedule_hash;
  std::size_t                  threads = 0;
  /// Signals scored together in one matrix product.
  std::size_t                  block = 64;
};

struct MatchResult
{
  bool        valid = false;
  std::size_t index = 0;
  double      t1_ms = 0, t2_ms = 0, b1 = 0, f = 0;
  Cx          pd{0.0, 0.0};
  double      score = 0; // |<signal, unit entry>|
  double      nrmse = 0;
};

auto invalid_match() -> MatchResult;

/// ||s - f|| / ||s||. Matching applies it to the signal and the scale-fitted
/// entry, so it is invariant to the signal's overall scale.
auto nrmse(std::span<Cx const> measured, std::span<Cx const> fitted) -> double;

/// Exhaustive inner-product matcher. Candidates are scored with a single-
/// precision matrix product and the leaders re-scored in double precision,
/// so the result equals a double-precision linear scan with ties going to
/// the lowest entry index.
class Matcher
{
public:
  Matcher(Dictionary const &dict, MatchOptions opts = {});

  auto match(std::span<Cx const> signal) const -> MatchResult;
  auto match_many(std::span<Cx const> signals, std::size_t count) const -> std::vector<MatchResult>;

  auto dictionary() const -> Dictionary const & { return dict_; }
  auto options() const -> MatchOptions const & { return opts_; }

private:
  using CMat = Eigen::Matrix<std::complex<float>, Eigen::Dynamic, Eigen::Dynamic>;
  using RMat = Eigen::MatrixXf;

  void match_block(std::span<Cx const> signals, std::size_t count, std::span<MatchResult> out) const;
  auto exact_score(std::size_t entry, std::span<Cx const> s) const -> Cx;
  auto finish(std::size_t entry, std::span<Cx const> s) const -> MatchResult;

  Dictionary const   &dict_;
  MatchOptions        opts_;
  std::vector<double> inv_norm_; // 1 / ||stored entry||
  RMat                magnitude_; // L x N, magnitude mode only
};

auto match_one(std::span<Cx const> signal, Dictionary const &dict, MatchOptions const &opts = {}) -> MatchResult;

// Voxel data ------------------------------------------------------------------

struct SignalVolume
{
  std::size_t              voxels = 0;
  std::size_t              length = 0;
  std::vector<Cx>          data; // voxel-major
  std::vector<std::string> ids;  // optional voxel labels

  auto voxel(std::size_t i) const -> std::span<Cx const> { return {data.data() + i * length, length}; }
};

/// Voxels whose series is all zero or non-finite yield an invalid (NaN) result.
auto match_volume(SignalVolume const &v, Dictionary const &dict, MatchOptions const &opts = {})
  -> std::vector<MatchResult>;

inline constexpr std::uint16_t volume_version_major = 1;

/// Binary container: "MRFV", version, value type, rows, cols, payload, CRC-64.
/// Signals are stored as complex float32 pairs, maps as float64.
void write_volume_binary(SignalVolume const &v, std::filesystem::path const &path);
/// CSV: one voxel per row, `id,re0,im0,re1,im1,...`; '#' lines are comments.
void write_volume_csv(SignalVolume const &v, std::filesystem::path const &path,
                      std::vector<std::string> const &comments = {});
/// Reads either format, chosen by the leading magic bytes.
auto read_volume(std::filesystem::path const &path) -> SignalVolume;

inline std::vector<std::string> const map_columns = {"index", "t1_ms", "t2_ms", "b1", "f", "pd_re", "pd_im", "score", "nrmse"};

void write_maps_csv(std::vector<MatchResult> const &maps, std::vector<std::string> const &ids,
                    std::filesystem::path const &path, std::vector<std::string> const &comments = {});
void write_maps_binary(std::vector<MatchResult> const &maps, std::filesystem::path const &path);
auto read_maps_binary(std::filesystem::path const &path) -> std::vector<MatchResult>;
/// Reads maps written by either writer, chosen by the leading magic bytes.
auto read_maps(std::filesystem::path const &path) -> std::vector<MatchResult>;

} // namespace mrf
