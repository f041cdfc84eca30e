#include "mrf/dictionary.hpp"

#include "mrf/checksum.hpp"
#include "mrf/parallel.hpp"

#include <json.hpp>

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace mrf {

static_assert(std::endian::native == std::endian::little, "dictionary container assumes a little-endian host");

using nlohmann::json;

auto to_string(DictKind k) -> std::string
{
  switch (k) {
  case DictKind::single_pool_irff: return "single-pool-irff";
  case DictKind::two_pool_irff: return "two-pool-irff";
  case DictKind::two_pool_irff_mt: return "two-pool-irff-mt";
  }
  return "?";
}

auto dict_kind_from_string(std::string const &s) -> DictKind
{
  for (auto k : {DictKind::single_pool_irff, DictKind::two_pool_irff, DictKind::two_pool_irff_mt}) {
    if (s == to_string(k)) { return k; }
  }
  throw std::invalid_argument("unknown dictionary kind: " + s);
}

auto model_of(DictKind k) -> Model { return k == DictKind::single_pool_irff ? Model::single_pool : Model::two_pool; }
auto uses_mt_pulses(DictKind k) -> bool { return k == DictKind::two_pool_irff_mt; }

auto log_axis(double lo, double hi, std::size_t n) -> std::vector<double>
{
  if (n == 0 || !(lo > 0.0) || !(hi >= lo)) { throw std::invalid_argument("bad log axis"); }
  if (n == 1) { return {lo}; }
  std::vector<double> v(n);
  double const        a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < n; i++) {
    v[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  v.front() = lo;
  v.back() = hi;
  return v;
}

auto linear_axis(double lo, double hi, std::size_t n) -> std::vector<double>
{
  if (n == 0 || !(hi >= lo)) { throw std::invalid_argument("bad linear axis"); }
  if (n == 1) { return {lo}; }
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; i++) {
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  v.back() = hi;
  return v;
}

auto fraction_axis(std::size_t n, double lo, double hi) -> std::vector<double>
{
  if (n == 0) { throw std::invalid_argument("bad fraction axis"); }
  std::vector<double> v{0.0};
  if (n > 1) {
    auto rest = log_axis(lo, hi, n - 1);
    v.insert(v.end(), rest.begin(), rest.end());
  }
  return v;
}

namespace {

auto make_grid(DictKind k, std::size_t nt1, std::size_t nt2, std::size_t nb1, std::size_t nf) -> GridSpec
{
  GridSpec g;
  g.t1_ms = log_axis(100.0, 4300.0, nt1);
  g.t2_ms = log_axis(15.0, 430.0, nt2);
  g.b1 = linear_axis(0.7, 1.3, nb1);
  if (model_of(k) == Model::two_pool) { g.f = fraction_axis(nf); }
  return g;
}

} // namespace

auto GridSpec::paper(DictKind k) -> GridSpec { return make_grid(k, 70, 70, 41, 16); }
auto GridSpec::desk(DictKind k) -> GridSpec { return make_grid(k, 20, 20, 11, 8); }

void GridSpec::validate() const
{
  auto check_axis = [](std::vector<double> const &a, char const *name, bool allow_empty) {
    if (a.empty() && !allow_empty) { throw std::invalid_argument(std::string{"empty axis: "} + name); }
    for (std::size_t i = 0; i < a.size(); i++) {
      if (!std::isfinite(a[i])) { throw std::invalid_argument(std::string{"non-finite value on axis "} + name); }
      if (i > 0 && !(a[i] > a[i - 1])) { throw std::invalid_argument(std::string{"axis not increasing: "} + name); }
    }
  };
  check_axis(t1_ms, "t1", false);
  check_axis(t2_ms, "t2", false);
  check_axis(b1, "b1", false);
  check_axis(f, "f", true);
  if (t1_ms.front() <= 0.0 || t2_ms.front() <= 0.0) { throw std::invalid_argument("relaxation times must be positive"); }
  if (b1.front() < 0.5 || b1.back() > 1.5) { throw std::invalid_argument("B1 axis outside [0.5, 1.5]"); }
  if (!f.empty() && (f.front() < 0.0 || f.back() >= 0.5)) { throw std::invalid_argument("F axis outside [0, 0.5)"); }
}

auto GridSpec::raw_size() const -> std::size_t
{
  return t1_ms.size() * t2_ms.size() * b1.size() * std::max<std::size_t>(1, f.size());
}

auto build_grid(GridSpec const &g) -> std::vector<ParamTuple>
{
  g.validate();
  std::vector<ParamTuple> out;
  std::size_t const       nf = std::max<std::size_t>(1, g.f.size());
  for (std::uint32_t a = 0; a < g.t1_ms.size(); a++) {
    for (std::uint32_t b = 0; b < g.t2_ms.size(); b++) {
      if (g.t2_ms[b] >= g.t1_ms[a]) { continue; }
      for (std::uint32_t c = 0; c < g.b1.size(); c++) {
        for (std::uint32_t d = 0; d < nf; d++) {
          out.push_back({g.t1_ms[a], g.t2_ms[b], g.b1[c], g.f.empty() ? 0.0 : g.f[d], a, b, c, d});
        }
      }
    }
  }
  return out;
}

auto build_grid(DictKind kind, GridSpec const &g) -> std::vector<ParamTuple>
{
  if (model_of(kind) == Model::single_pool && !g.f.empty()) {
    throw std::invalid_argument("single-pool dictionaries take no F axis");
  }
  if (model_of(kind) == Model::two_pool && g.f.empty()) { throw std::invalid_argument("two-pool dictionaries need an F axis"); }
  return build_grid(g);
}

auto operator==(Dictionary const &a, Dictionary const &b) -> bool
{
  return a.grid.t1_ms == b.grid.t1_ms && a.grid.t2_ms == b.grid.t2_ms && a.grid.b1 == b.grid.b1 && a.grid.f == b.grid.f &&
         a.params == b.params && a.length == b.length && a.norms == b.norms && a.meta == b.meta &&
         (a.entries.size() == b.entries.size() &&
          std::memcmp(a.entries.data(), b.entries.data(), a.entries.size() * sizeof(a.entries[0])) == 0);
}

namespace {

auto describe(ParamTuple const &t) -> std::string
{
  std::ostringstream os;
  os << "(T1=" << t.t1_ms << " ms, T2=" << t.t2_ms << " ms, B1=" << t.b1 << ", F=" << t.f << ")";
  return os.str();
}

} // namespace

SimulationFailure::SimulationFailure(ParamTuple t, std::string const &what)
  : std::runtime_error{"simulation failed at " + describe(t) + ": " + what}
  , tuple{t}
{
}

auto generate(Schedule const &schedule,
              std::vector<ParamTuple> const &tuples,
              GridSpec const &grid,
              SliceProfile const &profile,
              Model model,
              GenerateOptions const &opts) -> Dictionary
{
  Dictionary d;
  d.grid = grid;
  d.params = tuples;
  d.length = schedule.total_readouts;
  d.entries.resize(tuples.size() * d.length);
  d.norms.resize(tuples.size());
  d.meta.kind = opts.kind;
  d.meta.model = model;
  d.meta.schedule_hash = schedule.hash();
  d.meta.lineshape = opts.lineshape;
  d.meta.t2ss_us = opts.t2ss_us;
  d.meta.k_per_s = opts.k_per_s;
  json settings = {
    {"max_order", opts.sim.max_order == 0 ? default_max_order(schedule) : opts.sim.max_order},
    {"prune_tol", opts.sim.prune_tol},
    {"slice_bins", profile.bins.size()},
    {"excitation_waveform", to_string(schedule.excitation_waveform)},
    {"excitation_duration_ms", schedule.excitation_duration_ms},
  };
  d.meta.settings = settings.dump();

  std::atomic<std::size_t> done{0};
  parallel_for(
    tuples.size(), opts.threads,
    [&](std::size_t i) {
      ParamTuple const &t = tuples[i];
      TwoPoolParams     tissue{t.t1_ms, t.t2_ms, model == Model::two_pool ? t.f : 0.0, opts.k_per_s, opts.t2ss_us,
                           opts.lineshape};
      std::vector<Cx>   s;
      try {
        s = simulate_fingerprint(schedule, tissue, t.b1, profile, model, opts.sim);
      } catch (std::exception const &e) {
        throw SimulationFailure(t, e.what());
      }
      double n2 = 0.0;
      for (auto const &v : s) {
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) { throw SimulationFailure(t, "non-finite signal"); }
        n2 += std::norm(v);
      }
      double const norm = std::sqrt(n2);
      if (!(norm > 0.0)) { throw SimulationFailure(t, "zero fingerprint"); }
      d.norms[i] = norm;
      auto *dst = d.entries.data() + i * d.length;
      for (std::size_t j = 0; j < d.length; j++) {
        dst[j] = std::complex<float>(static_cast<float>(s[j].real() / norm), static_cast<float>(s[j].imag() / norm));
      }
      std::size_t const n = ++done;
      if (opts.progress) { opts.progress(n, tuples.size()); }
    },
    4);
  return d;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char magic[4] = {'M', 'R', 'F', 'D'};

class Writer
{
public:
  template <typename T>
  void put(T const &v)
  {
    static_assert(std::is_trivially_copyable_v<T>);
    auto const *p = reinterpret_cast<std::uint8_t const *>(&v);
    buf.insert(buf.end(), p, p + sizeof(T));
  }
  void put_bytes(void const *p, std::size_t n)
  {
    auto const *b = static_cast<std::uint8_t const *>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void put_axis(std::vector<double> const &a) { put_bytes(a.data(), a.size() * sizeof(double)); }

  std::vector<std::uint8_t> buf;
};

class Reader
{
public:
  explicit Reader(std::span<std::uint8_t const> b)
    : bytes{b}
  {
  }
  template <typename T>
  auto get() -> T
  {
    T v;
    get_bytes(&v, sizeof(T));
    return v;
  }
  void get_bytes(void *dst, std::size_t n)
  {
    if (n > bytes.size() - pos) { throw FormatError("dictionary file is truncated"); }
    std::memcpy(dst, bytes.data() + pos, n);
    pos += n;
  }
  auto get_axis(std::size_t n) -> std::vector<double>
  {
    std::vector<double> a(n);
    get_bytes(a.data(), n * sizeof(double));
    return a;
  }

  std::span<std::uint8_t const> bytes;
  std::size_t                   pos = 0;
};

auto checked_mul(std::uint64_t a, std::uint64_t b) -> std::uint64_t
{
  if (a != 0 && b > UINT64_MAX / a) { throw FormatError("dictionary header counts overflow"); }
  return a * b;
}

} // namespace

auto serialize(Dictionary const &d) -> std::vector<std::uint8_t>
{
  if (d.entries.size() != d.size() * d.length || d.norms.size() != d.size()) {
    throw std::invalid_argument("inconsistent dictionary");
  }
  Writer w;
  w.put_bytes(magic, 4);
  w.put(dictionary_version_major);
  w.put(dictionary_version_minor);
  w.put(static_cast<std::uint8_t>(d.meta.kind));
  w.put(static_cast<std::uint8_t>(d.meta.model));
  w.put(static_cast<std::uint8_t>(d.meta.lineshape));
  w.put(std::uint8_t{0});
  w.put(static_cast<std::uint64_t>(d.size()));
  w.put(static_cast<std::uint64_t>(d.length));
  w.put(static_cast<std::uint32_t>(d.grid.t1_ms.size()));
  w.put(static_cast<std::uint32_t>(d.grid.t2_ms.size()));
  w.put(static_cast<std::uint32_t>(d.grid.b1.size()));
  w.put(static_cast<std::uint32_t>(d.grid.f.size()));
  w.put(d.meta.schedule_hash);
  w.put(d.meta.t2ss_us);
  w.put(d.meta.k_per_s);
  w.put(static_cast<std::uint32_t>(d.meta.settings.size()));
  w.put_bytes(d.meta.settings.data(), d.meta.settings.size());
  w.put_axis(d.grid.t1_ms);
  w.put_axis(d.grid.t2_ms);
  w.put_axis(d.grid.b1);
  w.put_axis(d.grid.f);
  for (auto const &t : d.params) {
    w.put(t.t1_ms);
    w.put(t.t2_ms);
    w.put(t.b1);
    w.put(t.f);
    w.put(t.i_t1);
    w.put(t.i_t2);
    w.put(t.i_b1);
    w.put(t.i_f);
  }
  w.put_bytes(d.norms.data(), d.norms.size() * sizeof(double));
  w.put_bytes(d.entries.data(), d.entries.size() * sizeof(std::complex<float>));
  w.put(crc64(w.buf));
  return std::move(w.buf);
}

auto deserialize(std::span<std::uint8_t const> bytes) -> Dictionary
{
  Reader r{bytes};
  char   m[4];
  r.get_bytes(m, 4);
  if (std::memcmp(m, magic, 4) != 0) { throw FormatError("not a dictionary file (bad magic)"); }
  auto const major = r.get<std::uint16_t>();
  auto const minor = r.get<std::uint16_t>();
  if (major != dictionary_version_major) {
    throw FormatError("unsupported dictionary format version " + std::to_string(major) + "." + std::to_string(minor));
  }
  Dictionary d;
  auto const kind = r.get<std::uint8_t>();
  auto const model = r.get<std::uint8_t>();
  auto const lineshape = r.get<std::uint8_t>();
  r.get<std::uint8_t>();
  if (kind > 2 || model > 1 || lineshape > 1) { throw FormatError("corrupt dictionary header"); }
  d.meta.kind = static_cast<DictKind>(kind);
  d.meta.model = static_cast<Model>(model);
  d.meta.lineshape = static_cast<Lineshape>(lineshape);
  auto const n = r.get<std::uint64_t>();
  auto const len = r.get<std::uint64_t>();
  auto const nt1 = r.get<std::uint32_t>();
  auto const nt2 = r.get<std::uint32_t>();
  auto const nb1 = r.get<std::uint32_t>();
  auto const nf = r.get<std::uint32_t>();
  d.meta.schedule_hash = r.get<std::uint64_t>();
  d.meta.t2ss_us = r.get<double>();
  d.meta.k_per_s = r.get<double>();
  auto const settings_len = r.get<std::uint32_t>();

  std::uint64_t expected = r.pos + settings_len;
  expected += checked_mul(8, std::uint64_t{nt1} + nt2 + nb1 + nf);
  expected += checked_mul(n, 48);
  expected += checked_mul(n, 8);
  expected += checked_mul(checked_mul(n, len), 8);
  expected += 8;
  if (bytes.size() < expected) { throw FormatError("dictionary file is truncated"); }
  if (bytes.size() > expected) { throw FormatError("dictionary file has trailing bytes"); }
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (crc64(bytes.first(bytes.size() - 8)) != stored) { throw FormatError("dictionary checksum mismatch"); }

  d.meta.settings.resize(settings_len);
  r.get_bytes(d.meta.settings.data(), settings_len);
  d.grid.t1_ms = r.get_axis(nt1);
  d.grid.t2_ms = r.get_axis(nt2);
  d.grid.b1 = r.get_axis(nb1);
  d.grid.f = r.get_axis(nf);
  d.length = len;
  d.params.resize(n);
  for (auto &t : d.params) {
    t.t1_ms = r.get<double>();
    t.t2_ms = r.get<double>();
    t.b1 = r.get<double>();
    t.f = r.get<double>();
    t.i_t1 = r.get<std::uint32_t>();
    t.i_t2 = r.get<std::uint32_t>();
    t.i_b1 = r.get<std::uint32_t>();
    t.i_f = r.get<std::uint32_t>();
  }
  d.norms.resize(n);
  r.get_bytes(d.norms.data(), n * sizeof(double));
  d.entries.resize(n * len);
  r.get_bytes(d.entries.data(), d.entries.size() * sizeof(std::complex<float>));
  return d;
}

auto content_hash(Dictionary const &d) -> std::uint64_t
{
  auto const bytes = serialize(d);
  std::uint64_t h;
  std::memcpy(&h, bytes.data() + bytes.size() - 8, 8);
  return h;
}

auto metadata_json(Dictionary const &d) -> std::string
{
  json j = {
    {"format", "MRFD"},
    {"version", std::to_string(dictionary_version_major) + "." + std::to_string(dictionary_version_minor)},
    {"kind", to_string(d.meta.kind)},
    {"model", to_string(d.meta.model)},
    {"entries", d.size()},
    {"length", d.length},
    {"schedule_hash", hex(d.meta.schedule_hash)},
    {"lineshape", to_string(d.meta.lineshape)},
    {"t2ss_us", d.meta.t2ss_us},
    {"k_per_s", d.meta.k_per_s},
    {"axes", {{"t1_ms", d.grid.t1_ms}, {"t2_ms", d.grid.t2_ms}, {"b1", d.grid.b1}, {"f", d.grid.f}}},
    {"settings", json::parse(d.meta.settings.empty() ? "{}" : d.meta.settings)},
    {"checksum_crc64", hex(content_hash(d))},
  };
  return j.dump(2) + "\n";
}

void save(Dictionary const &d, std::filesystem::path const &path)
{
  auto const bytes = serialize(d);
  {
    std::ofstream out{path, std::ios::binary | std::ios::trunc};
    if (!out) { throw std::runtime_error("cannot open " + path.string() + " for writing"); }
    out.write(reinterpret_cast<char const *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) { throw std::runtime_error("write failed: " + path.string()); }
  }
  std::ofstream side{path.string() + ".json", std::ios::trunc};
  side << metadata_json(d);
  if (!side) { throw std::runtime_error("write failed: " + path.string() + ".json"); }
}

auto load(std::filesystem::path const &path) -> Dictionary
{
  std::ifstream in{path, std::ios::binary};
  if (!in) { throw std::runtime_error("cannot open " + path.string()); }
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>{in}, std::istreambuf_iterator<char>{}};
  return deserialize(bytes);
}

auto memory_estimate_bytes(std::size_t entries, std::size_t length) -> std::uint64_t
{
  return static_cast<std::uint64_t>(entries) * (length * sizeof(std::complex<float>) + sizeof(ParamTuple) + sizeof(double));
}

} // namespace mrf
