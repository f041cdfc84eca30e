#include "mrf/matcher.hpp"

#include "mrf/checksum.hpp"
#include "mrf/parallel.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <limits>
#include <sstream>

namespace mrf {

auto to_string(MatchMode m) -> std::string { return m == MatchMode::complex ? "complex" : "magnitude"; }

auto match_mode_from_string(std::string const &s) -> MatchMode
{
  if (s == "complex") { return MatchMode::complex; }
  if (s == "magnitude") { return MatchMode::magnitude; }
  throw std::invalid_argument("unknown match mode: " + s);
}

auto invalid_match() -> MatchResult
{
  double const nan = std::numeric_limits<double>::quiet_NaN();
  MatchResult  r;
  r.valid = false;
  r.index = std::numeric_limits<std::size_t>::max();
  r.t1_ms = r.t2_ms = r.b1 = r.f = nan;
  r.pd = {nan, nan};
  r.score = r.nrmse = nan;
  return r;
}

auto nrmse(std::span<Cx const> measured, std::span<Cx const> fitted) -> double
{
  if (measured.size() != fitted.size()) { throw std::invalid_argument("nrmse: length mismatch"); }
  double ns = 0.0, e = 0.0;
  for (std::size_t i = 0; i < measured.size(); i++) {
    ns += std::norm(measured[i]);
    e += std::norm(measured[i] - fitted[i]);
  }
  if (!(ns > 0.0)) { throw std::invalid_argument("nrmse: measured series has zero norm"); }
  return std::sqrt(e / ns);
}

namespace {

// Float scores may be off by a few ulps times the series length; anything
// within this margin of the float maximum is re-scored exactly.
constexpr double rescore_margin = 1e-3;

} // namespace

Matcher::Matcher(Dictionary const &dict, MatchOptions opts)
  : dict_{dict}
  , opts_{opts}
{
  if (dict_.size() == 0 || dict_.length == 0) { throw std::invalid_argument("empty dictionary"); }
  if (opts_.schedule_hash && *opts_.schedule_hash != dict_.meta.schedule_hash) {
    throw std::invalid_argument("dictionary was built for schedule " + hex(dict_.meta.schedule_hash) +
                                ", signal declares schedule " + hex(*opts_.schedule_hash));
  }
  if (opts_.block == 0) { opts_.block = 1; }
  std::size_t const L = dict_.length;
  inv_norm_.resize(dict_.size());
  for (std::size_t j = 0; j < dict_.size(); j++) {
    double n = 0.0;
    for (auto const &v : dict_.entry(j)) {
      n += std::norm(std::complex<double>(v));
    }
    if (!(n > 0.0)) { throw std::invalid_argument("dictionary contains a zero entry"); }
    inv_norm_[j] = 1.0 / std::sqrt(n);
  }
  if (opts_.mode == MatchMode::magnitude) {
    magnitude_.resize(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(dict_.size()));
    for (std::size_t j = 0; j < dict_.size(); j++) {
      auto e = dict_.entry(j);
      for (std::size_t i = 0; i < L; i++) {
        magnitude_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::abs(e[i]);
      }
    }
  }
}

auto Matcher::exact_score(std::size_t entry, std::span<Cx const> s) const -> Cx
{
  auto e = dict_.entry(entry);
  if (opts_.mode == MatchMode::magnitude) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); i++) {
      acc += std::abs(std::complex<double>(e[i])) * std::abs(s[i]);
    }
    return {acc, 0.0};
  }
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < s.size(); i++) {
    // conj(e) * s
    double const er = e[i].real(), ei = e[i].imag();
    re += er * s[i].real() + ei * s[i].imag();
    im += er * s[i].imag() - ei * s[i].real();
  }
  return {re, im};
}

auto Matcher::finish(std::size_t j, std::span<Cx const> s) const -> MatchResult
{
  auto const       &t = dict_.params[j];
  Cx const          ip = exact_score(j, s);
  double const      inv2 = inv_norm_[j] * inv_norm_[j];
  Cx const          c = ip * inv2; // least-squares scale on the stored entry
  auto              e = dict_.entry(j);
  std::size_t const L = s.size();

  MatchResult r;
  r.valid = true;
  r.index = j;
  r.t1_ms = t.t1_ms;
  r.t2_ms = t.t2_ms;
  r.b1 = t.b1;
  r.f = t.f;
  r.pd = c / dict_.norms[j];
  r.score = std::abs(ip) * inv_norm_[j];

  std::vector<Cx> measured(L), fitted(L);
  for (std::size_t i = 0; i < L; i++) {
    if (opts_.mode == MatchMode::magnitude) {
      measured[i] = std::abs(s[i]);
      fitted[i] = c * std::abs(std::complex<double>(e[i]));
    } else {
      measured[i] = s[i];
      fitted[i] = c * std::complex<double>(e[i]);
    }
  }
  r.nrmse = nrmse(measured, fitted);
  return r;
}

void Matcher::match_block(std::span<Cx const> signals, std::size_t count, std::span<MatchResult> out) const
{
  auto const          L = static_cast<Eigen::Index>(dict_.length);
  auto const          N = static_cast<Eigen::Index>(dict_.size());
  auto const          m = static_cast<Eigen::Index>(count);
  std::vector<double> inv_s(count, 0.0);
  for (std::size_t c = 0; c < count; c++) {
    auto   s = signals.subspan(c * dict_.length, dict_.length);
    double n = 0.0;
    bool   finite = true;
    for (auto const &v : s) {
      finite = finite && std::isfinite(v.real()) && std::isfinite(v.imag());
      n += std::norm(v);
    }
    if (finite && n > 0.0 && std::isfinite(n)) { inv_s[c] = 1.0 / std::sqrt(n); }
  }

  Eigen::MatrixXf scores(N, m);
  if (opts_.mode == MatchMode::complex) {
    CMat S(L, m);
    for (Eigen::Index c = 0; c < m; c++) {
      for (Eigen::Index i = 0; i < L; i++) {
        Cx const v = signals[static_cast<std::size_t>(c * L + i)] * inv_s[c];
        S(i, c) = {static_cast<float>(v.real()), static_cast<float>(v.imag())};
      }
    }
    Eigen::Map<CMat const> E(dict_.entries.data(), L, N);
    CMat const             C = E.adjoint() * S;
    scores = C.cwiseAbs();
  } else {
    RMat S(L, m);
    for (Eigen::Index c = 0; c < m; c++) {
      for (Eigen::Index i = 0; i < L; i++) {
        S(i, c) = static_cast<float>(std::abs(signals[static_cast<std::size_t>(c * L + i)]) * inv_s[c]);
      }
    }
    scores.noalias() = magnitude_.transpose() * S;
  }

  for (std::size_t c = 0; c < count; c++) {
    if (inv_s[c] == 0.0) {
      out[c] = invalid_match();
      continue;
    }
    auto   s = signals.subspan(c * dict_.length, dict_.length);
    double best_f = -1.0;
    for (Eigen::Index j = 0; j < N; j++) {
      best_f = std::max(best_f, scores(j, static_cast<Eigen::Index>(c)) * inv_norm_[static_cast<std::size_t>(j)]);
    }
    double const threshold = best_f - rescore_margin;
    double       best = -1.0;
    std::size_t  arg = 0;
    for (Eigen::Index j = 0; j < N; j++) {
      auto const ju = static_cast<std::size_t>(j);
      if (scores(j, static_cast<Eigen::Index>(c)) * inv_norm_[ju] < threshold) { continue; }
      double const v = std::abs(exact_score(ju, s)) * inv_norm_[ju];
      if (v > best) {
        best = v;
        arg = ju;
      }
    }
    out[c] = finish(arg, s);
  }
}

auto Matcher::match(std::span<Cx const> signal) const -> MatchResult
{
  if (signal.size() != dict_.length) {
    throw std::invalid_argument("signal length " + std::to_string(signal.size()) + " does not match dictionary length " +
                                std::to_string(dict_.length));
  }
  MatchResult r;
  match_block(signal, 1, {&r, 1});
  if (!r.valid) { throw std::invalid_argument("signal is zero or non-finite"); }
  return r;
}

auto Matcher::match_many(std::span<Cx const> signals, std::size_t count) const -> std::vector<MatchResult>
{
  if (signals.size() != count * dict_.length) { throw std::invalid_argument("signal block does not match dictionary length"); }
  std::vector<MatchResult> out(count);
  std::size_t const        nblocks = (count + opts_.block - 1) / opts_.block;
  parallel_for(nblocks, opts_.threads, [&](std::size_t b) {
    std::size_t const first = b * opts_.block;
    std::size_t const n = std::min(opts_.block, count - first);
    match_block(signals.subspan(first * dict_.length, n * dict_.length), n, std::span{out}.subspan(first, n));
  });
  return out;
}

auto match_one(std::span<Cx const> signal, Dictionary const &dict, MatchOptions const &opts) -> MatchResult
{
  return Matcher{dict, opts}.match(signal);
}

auto match_volume(SignalVolume const &v, Dictionary const &dict, MatchOptions const &opts) -> std::vector<MatchResult>
{
  if (v.length != dict.length) {
    throw std::invalid_argument("volume series length " + std::to_string(v.length) + " does not match dictionary length " +
                                std::to_string(dict.length));
  }
  if (v.data.size() != v.voxels * v.length) { throw std::invalid_argument("inconsistent volume"); }
  return Matcher{dict, opts}.match_many(v.data, v.voxels);
}

// ---------------------------------------------------------------------------

namespace {

constexpr char volume_magic[4] = {'M', 'R', 'F', 'V'};

enum class ValueType : std::uint32_t
{
  complex64 = 0,
  float64 = 1
};

template <typename T>
void put(std::vector<std::uint8_t> &buf, T const &v)
{
  auto const *p = reinterpret_cast<std::uint8_t const *>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

void write_container(std::filesystem::path const &path, ValueType type, std::uint64_t rows, std::uint64_t cols,
                     void const *payload, std::size_t payload_bytes)
{
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), volume_magic, volume_magic + 4);
  put(buf, volume_version_major);
  put(buf, std::uint16_t{0});
  put(buf, static_cast<std::uint32_t>(type));
  put(buf, rows);
  put(buf, cols);
  auto const *p = static_cast<std::uint8_t const *>(payload);
  buf.insert(buf.end(), p, p + payload_bytes);
  put(buf, crc64(buf));
  std::ofstream out{path, std::ios::binary | std::ios::trunc};
  if (!out) { throw std::runtime_error("cannot open " + path.string() + " for writing"); }
  out.write(reinterpret_cast<char const *>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) { throw std::runtime_error("write failed: " + path.string()); }
}

struct Container
{
  ValueType                 type;
  std::uint64_t             rows, cols;
  std::vector<std::uint8_t> payload;
};

auto read_bytes(std::filesystem::path const &path) -> std::vector<std::uint8_t>
{
  std::ifstream in{path, std::ios::binary};
  if (!in) { throw std::runtime_error("cannot open " + path.string()); }
  return {std::istreambuf_iterator<char>{in}, std::istreambuf_iterator<char>{}};
}

auto parse_container(std::vector<std::uint8_t> const &b) -> Container
{
  constexpr std::size_t header = 4 + 2 + 2 + 4 + 8 + 8;
  if (b.size() < header + 8) { throw FormatError("volume file is truncated"); }
  std::uint16_t major;
  std::memcpy(&major, b.data() + 4, 2);
  if (major != volume_version_major) { throw FormatError("unsupported volume format version " + std::to_string(major)); }
  Container     c;
  std::uint32_t type;
  std::memcpy(&type, b.data() + 8, 4);
  std::memcpy(&c.rows, b.data() + 12, 8);
  std::memcpy(&c.cols, b.data() + 20, 8);
  if (type > 1) { throw FormatError("unknown volume value type"); }
  c.type = static_cast<ValueType>(type);
  constexpr std::size_t elem = 8; // float32 pair or float64
  if (c.cols != 0 && c.rows > UINT64_MAX / c.cols / elem) { throw FormatError("volume header counts overflow"); }
  std::uint64_t const payload = c.rows * c.cols * elem;
  if (b.size() < header + payload + 8) { throw FormatError("volume file is truncated"); }
  if (b.size() > header + payload + 8) { throw FormatError("volume file has trailing bytes"); }
  std::uint64_t stored;
  std::memcpy(&stored, b.data() + header + payload, 8);
  if (crc64(std::span{b}.first(header + payload)) != stored) { throw FormatError("volume checksum mismatch"); }
  c.payload.assign(b.begin() + header, b.begin() + static_cast<std::ptrdiff_t>(header + payload));
  return c;
}

auto split_csv(std::string const &line) -> std::vector<std::string>
{
  std::vector<std::string> out;
  std::string              cur;
  std::istringstream       is{line};
  while (std::getline(is, cur, ',')) {
    while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ')) {
      cur.pop_back();
    }
    out.push_back(cur);
  }
  return out;
}

auto parse_double(std::string const &s, std::size_t line) -> double
{
  double      v = 0.0;
  char const *b = s.data();
  while (b != s.data() + s.size() && *b == ' ') {
    b++;
  }
  auto [p, ec] = std::from_chars(b, s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw FormatError("line " + std::to_string(line) + ": not a number: '" + s + "'");
  }
  return v;
}

auto read_volume_csv(std::filesystem::path const &path) -> SignalVolume
{
  std::ifstream in{path};
  if (!in) { throw std::runtime_error("cannot open " + path.string()); }
  SignalVolume v;
  std::string  line;
  std::size_t  lineno = 0;
  bool         header_seen = false;
  while (std::getline(in, line)) {
    lineno++;
    if (line.empty() || line[0] == '#') { continue; }
    auto fields = split_csv(line);
    if (!header_seen) {
      header_seen = true;
      if (fields.size() > 1 && fields[1].find_first_not_of("0123456789.eE+- ") != std::string::npos) { continue; }
    }
    if (fields.size() < 3 || fields.size() % 2 == 0) {
      throw FormatError("line " + std::to_string(lineno) + ": expected id followed by re,im pairs");
    }
    std::size_t const len = (fields.size() - 1) / 2;
    if (v.voxels == 0) {
      v.length = len;
    } else if (len != v.length) {
      throw FormatError("line " + std::to_string(lineno) + ": series length differs from previous rows");
    }
    v.ids.push_back(fields[0]);
    for (std::size_t i = 0; i < len; i++) {
      v.data.emplace_back(parse_double(fields[1 + 2 * i], lineno), parse_double(fields[2 + 2 * i], lineno));
    }
    v.voxels++;
  }
  return v;
}

void write_comments(std::ostream &out, std::vector<std::string> const &comments)
{
  for (auto const &c : comments) {
    std::istringstream is{c};
    std::string        l;
    while (std::getline(is, l)) {
      out << "# " << l << "\n";
    }
  }
}

} // namespace

void write_volume_binary(SignalVolume const &v, std::filesystem::path const &path)
{
  std::vector<float> payload;
  payload.reserve(v.data.size() * 2);
  for (auto const &x : v.data) {
    payload.push_back(static_cast<float>(x.real()));
    payload.push_back(static_cast<float>(x.imag()));
  }
  write_container(path, ValueType::complex64, v.voxels, v.length, payload.data(), payload.size() * sizeof(float));
}

void write_volume_csv(SignalVolume const &v, std::filesystem::path const &path, std::vector<std::string> const &comments)
{
  std::ofstream out{path, std::ios::trunc};
  if (!out) { throw std::runtime_error("cannot open " + path.string() + " for writing"); }
  write_comments(out, comments);
  out << "voxel";
  for (std::size_t i = 0; i < v.length; i++) {
    out << ",re" << i << ",im" << i;
  }
  out << "\n" << std::setprecision(9);
  for (std::size_t k = 0; k < v.voxels; k++) {
    out << (k < v.ids.size() ? v.ids[k] : std::to_string(k));
    for (auto const &x : v.voxel(k)) {
      out << "," << x.real() << "," << x.imag();
    }
    out << "\n";
  }
  if (!out) { throw std::runtime_error("write failed: " + path.string()); }
}

auto read_volume(std::filesystem::path const &path) -> SignalVolume
{
  char          head[4] = {};
  std::ifstream probe{path, std::ios::binary};
  if (!probe) { throw std::runtime_error("cannot open " + path.string()); }
  probe.read(head, 4);
  if (probe.gcount() == 4 && std::memcmp(head, volume_magic, 4) == 0) {
    auto const c = parse_container(read_bytes(path));
    if (c.type != ValueType::complex64) { throw FormatError("volume file holds maps, not signals"); }
    SignalVolume v;
    v.voxels = c.rows;
    v.length = c.cols;
    v.data.resize(v.voxels * v.length);
    auto const *f = reinterpret_cast<float const *>(c.payload.data());
    for (std::size_t i = 0; i < v.data.size(); i++) {
      v.data[i] = {f[2 * i], f[2 * i + 1]};
    }
    return v;
  }
  return read_volume_csv(path);
}

void write_maps_csv(std::vector<MatchResult> const &maps, std::vector<std::string> const &ids,
                    std::filesystem::path const &path, std::vector<std::string> const &comments)
{
  std::ofstream out{path, std::ios::trunc};
  if (!out) { throw std::runtime_error("cannot open " + path.string() + " for writing"); }
  write_comments(out, comments);
  out << "voxel";
  for (auto const &c : map_columns) {
    out << "," << c;
  }
  out << "\n" << std::setprecision(10);
  for (std::size_t k = 0; k < maps.size(); k++) {
    auto const &r = maps[k];
    out << (k < ids.size() ? ids[k] : std::to_string(k)) << ",";
    if (r.valid) {
      out << r.index;
    } else {
      out << "nan";
    }
    out << "," << r.t1_ms << "," << r.t2_ms << "," << r.b1 << "," << r.f << "," << r.pd.real() << "," << r.pd.imag() << ","
        << r.score << "," << r.nrmse << "\n";
  }
  if (!out) { throw std::runtime_error("write failed: " + path.string()); }
}

void write_maps_binary(std::vector<MatchResult> const &maps, std::filesystem::path const &path)
{
  std::vector<double> payload;
  payload.reserve(maps.size() * map_columns.size());
  double const nan = std::numeric_limits<double>::quiet_NaN();
  for (auto const &r : maps) {
    double const row[] = {r.valid ? static_cast<double>(r.index) : nan, r.t1_ms, r.t2_ms, r.b1, r.f,
                          r.pd.real(), r.pd.imag(), r.score, r.nrmse};
    payload.insert(payload.end(), std::begin(row), std::end(row));
  }
  write_container(path, ValueType::float64, maps.size(), map_columns.size(), payload.data(),
                  payload.size() * sizeof(double));
}

auto read_maps_binary(std::filesystem::path const &path) -> std::vector<MatchResult>
{
  auto const c = parse_container(read_bytes(path));
  if (c.type != ValueType::float64 || c.cols != map_columns.size()) { throw FormatError("volume file does not hold maps"); }
  auto const              *d = reinterpret_cast<double const *>(c.payload.data());
  std::vector<MatchResult> out(c.rows);
  for (std::size_t k = 0; k < c.rows; k++) {
    double const *row = d + k * c.cols;
    auto         &r = out[k];
    r.valid = !std::isnan(row[0]);
    r.index = r.valid ? static_cast<std::size_t>(row[0]) : std::numeric_limits<std::size_t>::max();
    r.t1_ms = row[1];
    r.t2_ms = row[2];
    r.b1 = row[3];
    r.f = row[4];
    r.pd = {row[5], row[6]};
    r.score = row[7];
    r.nrmse = row[8];
  }
  return out;
}

auto read_maps(std::filesystem::path const &path) -> std::vector<MatchResult>
{
  char          head[4] = {};
  std::ifstream probe{path, std::ios::binary};
  if (!probe) { throw std::runtime_error("cannot open " + path.string()); }
  probe.read(head, 4);
  if (probe.gcount() == 4 && std::memcmp(head, volume_magic, 4) == 0) { return read_maps_binary(path); }

  std::ifstream            in{path};
  std::string              line;
  std::size_t              lineno = 0;
  bool                     header = true;
  std::vector<MatchResult> out;
  while (std::getline(in, line)) {
    lineno++;
    if (line.empty() || line[0] == '#') { continue; }
    auto const fields = split_csv(line);
    if (header) {
      header = false;
      if (fields.size() != map_columns.size() + 1 || fields[0] != "voxel") {
        throw FormatError("maps CSV: unexpected header on line " + std::to_string(lineno));
      }
      continue;
    }
    if (fields.size() != map_columns.size() + 1) { throw FormatError("maps CSV: wrong column count on line " + std::to_string(lineno)); }
    double v[9];
    for (std::size_t i = 0; i < 9; i++) {
      v[i] = fields[i + 1] == "nan" ? std::numeric_limits<double>::quiet_NaN() : parse_double(fields[i + 1], lineno);
    }
    MatchResult r;
    r.valid = !std::isnan(v[0]);
    r.index = r.valid ? static_cast<std::size_t>(v[0]) : std::numeric_limits<std::size_t>::max();
    r.t1_ms = v[1];
    r.t2_ms = v[2];
    r.b1 = v[3];
    r.f = v[4];
    r.pd = {v[5], v[6]};
    r.score = v[7];
    r.nrmse = v[8];
    out.push_back(r);
  }
  return out;
}

} // namespace mrf
