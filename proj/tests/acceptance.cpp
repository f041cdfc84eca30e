// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Desk-scale dictionaries are generated fresh; set
// MRF_ACCEPTANCE_DICTS to a directory holding single-pool-irff.mrfd and
// two-pool-irff.mrfd to reuse the two auxiliary ones (the timed IRFF-MT
// dictionary is always regenerated).

#include "oracles.hpp"

#include "mrf/analysis.hpp"
#include "mrf/checksum.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include <unistd.h>

using namespace mrf;
using std::numbers::pi;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

auto seconds_since(Clock::time_point t0) -> double
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome
{
  int         id;
  bool        pass;
  std::string detail;
  double      seconds;
};

std::vector<Outcome> outcomes;

template <class F>
void criterion(int id, F &&body)
{
  auto const  t0 = Clock::now();
  Outcome     o{id, false, {}, 0.0};
  try {
    std::ostringstream detail;
    o.pass = body(detail);
    o.detail = detail.str();
  } catch (std::exception const &e) {
    o.pass = false;
    o.detail = std::string{"exception: "} + e.what();
  }
  o.seconds = seconds_since(t0);
  std::printf("criterion %2d: %s  %s  [%.1f s]\n", o.id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), o.seconds);
  std::fflush(stdout);
  outcomes.push_back(std::move(o));
}

auto hardware_threads() -> std::size_t
{
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// Wall time scaled to 8 workers assuming linear scaling in the thread count.
auto projected_8core(double wall) -> double
{
  return wall * static_cast<double>(hardware_threads()) / 8.0;
}

auto as_double(std::span<std::complex<float> const> e) -> std::vector<Cx>
{
  return {e.begin(), e.end()};
}

auto read_bytes(fs::path const &p) -> std::vector<char>
{
  std::ifstream in{p, std::ios::binary};
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(fs::path const &p, std::vector<char> const &b)
{
  std::ofstream out{p, std::ios::binary};
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

auto file_crc(fs::path const &p) -> std::uint64_t
{
  auto const b = read_bytes(p);
  return crc64(std::string_view{b.data(), b.size()});
}

auto fisp_events(std::size_t pulses, double flip, double tr_ms) -> std::vector<Event>
{
  std::vector<Event> ev;
  for (std::size_t n = 0; n < pulses; n++) {
    ev.push_back(event::Rf{flip, 0.0});
    ev.push_back(event::Readout{});
    ev.push_back(event::Relax{tr_ms});
    ev.push_back(event::Shift{1});
  }
  return ev;
}

auto desk_dictionary(StudySetup const &setup, DictKind kind, std::size_t threads = 0) -> Dictionary
{
  GenerateOptions o;
  o.kind = kind;
  o.threads = threads;
  o.sim = setup.sim;
  auto const g = GridSpec::desk(kind);
  return generate(setup.schedule_for(kind), build_grid(kind, g), g, setup.profile, model_of(kind), o);
}

auto auxiliary_dictionary(StudySetup const &setup, DictKind kind) -> Dictionary
{
  if (char const *dir = std::getenv("MRF_ACCEPTANCE_DICTS")) {
    auto const path = fs::path{dir} / (to_string(kind) + ".mrfd");
    if (fs::exists(path)) {
      auto d = load(path);
      if (d.meta.kind == kind && d.meta.schedule_hash == setup.schedule_for(kind).hash()) {
        std::printf("  reusing %s\n", path.c_str());
        return d;
      }
    }
  }
  auto const t0 = Clock::now();
  auto       d = desk_dictionary(setup, kind);
  std::printf("  generated %s: %zu entries in %.0f s\n", to_string(kind).c_str(), d.size(), seconds_since(t0));
  return d;
}

auto random_tissue(std::mt19937_64 &rng, double f) -> std::pair<TwoPoolParams, double>
{
  std::uniform_real_distribution<double> u{0.0, 1.0};
  double const t1 = 300.0 + 2500.0 * u(rng);
  double const t2 = 20.0 + (std::min(t1, 400.0) - 20.0) * u(rng);
  auto const   shape = u(rng) < 0.5 ? Lineshape::gaussian : Lineshape::super_lorentzian;
  return {TwoPoolParams{t1, t2, f, 10.0 * u(rng), 5.0 + 15.0 * u(rng), shape}, 0.7 + 0.6 * u(rng)};
}

} // namespace

int main()
{
  std::printf("acceptance: %zu hardware thread(s)\n", hardware_threads());
  auto const setup = StudySetup::defaults();

  criterion(1, [&](std::ostream &out) {
    RelaxationParams const p{800.0, 60.0};
    double const           flip = 35.0 * pi / 180.0;
    auto const             t0 = Clock::now();
    EngineOptions          o;
    o.max_order = 256;
    auto const epg = run_epg(fisp_events(240, flip, 7.5), p, o);
    auto const iso = oracle::fisp_train_isochromats(240, flip, 7.5, p.t1_ms, p.t2_ms, 512);
    double const t = seconds_since(t0);
    double       scale = 0.0, dev = 0.0;
    for (std::size_t i = 0; i < epg.size(); i++) {
      scale = std::max(scale, std::abs(iso[i]));
      dev = std::max(dev, std::abs(epg[i] - iso[i]));
    }
    out << "max rel dev " << dev / scale << " (< 1e-9), runtime " << t << " s (< 5 s)";
    return dev / scale < 1e-9 && t < 5.0;
  });

  criterion(2, [&](std::ostream &out) {
    std::mt19937_64 rng{2};
    double          worst = 0.0;
    for (int i = 0; i < 20; i++) {
      auto const [tissue, b1] = random_tissue(rng, 0.0);
      auto const a = simulate_fingerprint(setup.irff_mt, tissue, b1, setup.profile, Model::two_pool, setup.sim);
      auto const b = simulate_fingerprint(setup.irff_mt, tissue, b1, setup.profile, Model::single_pool, setup.sim);
      for (std::size_t t = 0; t < a.size(); t++) {
        worst = std::max(worst, std::abs(a[t] - b[t]));
      }
    }
    out << "max abs dev " << worst << " over 20 sets (< 1e-12)";
    return worst < 1e-12;
  });

  criterion(3, [&](std::ostream &out) {
    std::mt19937_64                        rng{3};
    std::uniform_real_distribution<double> u{0.0, 1.0};
    double                                 worst = 0.0;
    for (int i = 0; i < 100; i++) {
      oracle::ExchangeCase c{};
      c.f = 0.3 * (1.0 - u(rng)); // (0, 0.3]
      c.za = (1.0 - c.f) * (2.0 * u(rng) - 1.0);
      c.zb = c.f * (2.0 * u(rng) - 1.0);
      c.dt_ms = 0.1 + 499.9 * u(rng);
      c.t1_ms = 300.0 + 2500.0 * u(rng);
      c.k_per_s = 10.0 * u(rng);
      TwoPoolParams const p{c.t1_ms, 50.0, c.f, c.k_per_s, 12.0, Lineshape::gaussian};
      TwoPoolSpinConfiguration s{4, c.f};
      s.free.set_z(0, {c.za, 0.0});
      s.z_bound[0] = {c.zb, 0.0};
      auto const   got = relax_exchange(s, c.dt_ms, p);
      auto const   ref = oracle::euler_exchange_extrapolated(c, 1e-6);
      double const err = std::hypot(got.free.z(0).real() - ref[0], got.z_bound[0].real() - ref[1]);
      worst = std::max(worst, err / std::hypot(ref[0], ref[1]));
    }
    out << "max rel dev " << worst << " over 100 cases vs extrapolated 1 us Euler (< 1e-6)";
    return worst < 1e-6;
  });

  criterion(4, [&](std::ostream &out) {
    double const  flip = 15.0 * pi / 180.0;
    EngineOptions o;
    o.ideal_spoiling = true;
    o.max_order = 4;
    auto const   s = run_epg(fisp_events(1000, flip, 7.5), {800.0, 60.0}, o);
    double const dev = std::abs(std::abs(s.back()) - oracle::spoiled_steady_state(flip, 7.5, 800.0));
    out << "|signal - analytic| " << dev << " (< 1e-6)";
    return dev < 1e-6;
  });

  criterion(5, [&](std::ostream &out) {
    std::vector<Cx> const s{{1.0, 2.0}, {-0.5, 0.3}, {0.0, 1.0}};
    std::vector<Cx> const a{{1.0, 0.0}, {0.0, 0.0}}, b{{0.0, 0.0}, {1.0, 0.0}};
    double const          e0 = nrmse(s, s);
    double const          e1 = nrmse(s, std::vector<Cx>(s.size()));
    double const          e2 = nrmse(a, b);
    out << "nrmse(s,s)=" << e0 << " nrmse(s,0)=" << e1 << " nrmse(e1,e2)=" << e2;
    return std::abs(e0) <= 1e-12 && std::abs(e1 - 1.0) <= 1e-12 && std::abs(e2 - std::sqrt(2.0)) <= 1e-12;
  });

  std::optional<Dictionary> mt;
  criterion(6, [&](std::ostream &out) {
    auto const t0 = Clock::now();
    mt = desk_dictionary(setup, DictKind::two_pool_irff_mt);
    double const gen = seconds_since(t0);

    Matcher const     m{*mt};
    std::size_t const chunk = 2048;
    std::size_t       mismatched = 0;
    double            worst = 0.0;
    std::vector<Cx>   sig;
    for (std::size_t first = 0; first < mt->size(); first += chunk) {
      std::size_t const n = std::min(chunk, mt->size() - first);
      sig.assign(mt->entries.begin() + static_cast<std::ptrdiff_t>(first * mt->length),
                 mt->entries.begin() + static_cast<std::ptrdiff_t>((first + n) * mt->length));
      auto const r = m.match_many(sig, n);
      for (std::size_t i = 0; i < n; i++) {
        mismatched += r[i].index != first + i;
        worst = std::max(worst, r[i].nrmse);
      }
    }
    double const wall = seconds_since(t0);
    double const proj = projected_8core(wall);
    out << mt->size() << " entries, " << mismatched << " mismatched, max nrmse " << worst << " (< 1e-9); generation "
        << gen << " s, total " << wall << " s on " << hardware_threads() << " thread(s), projected 8-core " << proj
        << " s (< 600 s)";
    return mismatched == 0 && worst < 1e-9 && proj < 600.0;
  });
  if (!mt) { mt = desk_dictionary(setup, DictKind::two_pool_irff_mt); }

  criterion(7, [&](std::ostream &out) {
    std::size_t const        n = 2000;
    std::vector<std::size_t> truth(n);
    std::vector<Cx>          sig(n * mt->length);
    for (std::size_t i = 0; i < n; i++) {
      auto                                       rng = trial_rng(7, i);
      std::uniform_int_distribution<std::size_t> pick{0, mt->size() - 1};
      truth[i] = pick(rng);
      auto s = as_double(mt->entry(truth[i]));
      add_noise(s, 30.0, rng);
      std::copy(s.begin(), s.end(), sig.begin() + static_cast<std::ptrdiff_t>(i * mt->length));
    }
    auto const  r = Matcher{*mt}.match_many(sig, n);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < n; i++) {
      auto const &t = mt->params[truth[i]];
      auto const &m = mt->params[r[i].index];
      auto const &g = mt->grid;
      ok += within_one_step(g.t1_ms, m.i_t1, t.t1_ms) && within_one_step(g.t2_ms, m.i_t2, t.t2_ms) &&
            within_one_step(g.b1, m.i_b1, t.b1) && within_one_step(g.f, m.i_f, t.f);
    }
    double const rate = static_cast<double>(ok) / static_cast<double>(n);
    out << ok << "/" << n << " within one step on all axes at 30 dB (" << 100.0 * rate << "%, >= 95%)";
    return rate >= 0.95;
  });

  std::printf("  auxiliary dictionaries for criteria 8 and 9\n");
  std::optional<Dictionary> single, irff;
  try {
    single = auxiliary_dictionary(setup, DictKind::single_pool_irff);
    irff = auxiliary_dictionary(setup, DictKind::two_pool_irff);
  } catch (std::exception const &e) {
    std::printf("  auxiliary dictionary generation failed: %s\n", e.what());
  }

  criterion(8, [&](std::ostream &out) {
    if (!single || !irff) { throw std::runtime_error("missing auxiliary dictionaries"); }
    Sample const water{"water", TwoPoolParams{648.0, 29.0, 0.0, 4.3, 12.0, Lineshape::gaussian}, 0.98};
    Sample const bsa{"bsa", TwoPoolParams{1056.0, 51.0, 0.14, 4.3, 12.0, Lineshape::gaussian}, 0.98};
    auto const   st = phantom_report(setup, water, bsa, {&*single, &*irff, &*mt});
    auto const  &sp = st.cell("bsa", DictKind::single_pool_irff).match;
    auto const  &tp = st.cell("bsa", DictKind::two_pool_irff_mt).match;
    auto const  &tpi = st.cell("bsa", DictKind::two_pool_irff).match;
    out << "single-pool T1 " << sp.t1_ms << " ms, T2 " << sp.t2_ms << " ms (truth 1056/51), nrmse single " << sp.nrmse
        << " vs two-pool IRFF-MT " << tp.nrmse << " (ratio " << sp.nrmse / tp.nrmse << ", >= 2; two-pool IRFF "
        << tpi.nrmse << ")";
    return sp.t1_ms < 1056.0 && sp.t2_ms < 51.0 && sp.nrmse > 2.0 * tp.nrmse;
  });

  criterion(9, [&](std::ostream &out) {
    if (!irff) { throw std::runtime_error("missing the IRFF dictionary"); }
    std::mt19937_64 rng{9};
    double          worst = 0.0;
    for (int i = 0; i < 20; i++) {
      auto const [tissue, b1] = random_tissue(rng, 0.0);
      auto const a = simulate_fingerprint(setup.irff, tissue, b1, setup.profile, Model::two_pool, setup.sim);
      auto const b = simulate_fingerprint(setup.irff_mt, tissue, b1, setup.profile, Model::two_pool, setup.sim);
      for (std::size_t t = 0; t < a.size(); t++) {
        worst = std::max(worst, std::abs(a[t] - b[t]));
      }
    }
    SeparationConfig cfg;
    cfg.n_trials = 500;
    cfg.snr_db = 30.0;
    cfg.seed = 9;
    auto const st = separation_study(setup, cfg, *irff, *mt);
    out << "F=0 IRFF vs IRFF-MT max dev " << worst << " (< 1e-9); spurious F>0 rate IRFF " << st.rate_irff
        << ", IRFF-MT " << st.rate_irff_mt << " over 500 trials at 30 dB";
    return worst < 1e-9 && st.rate_irff_mt <= st.rate_irff;
  });

  criterion(10, [&](std::ostream &out) {
    SensitivityConfig cfg;
    cfg.n_t2ss = 32;
    cfg.n_k = 32;
    auto const   t0 = Clock::now();
    auto const   st = sensitivity_grid(setup, cfg, *mt);
    double const t = seconds_since(t0);
    auto const  &g = mt->grid;
    auto const  &tr = cfg.truth;
    auto const  &a = st.assumed.match;
    auto const  &ap = mt->params[a.index];
    bool const   assumed_ok = within_one_step(g.t1_ms, ap.i_t1, tr.tissue.t1_ms) &&
                            within_one_step(g.t2_ms, ap.i_t2, tr.tissue.t2_ms) && within_one_step(g.b1, ap.i_b1, tr.b1) &&
                            within_one_step(g.f, ap.i_f, tr.tissue.f_frac);
    double f_lo = 0.0, f_hi = 0.0;
    for (auto const &c : st.cells) {
      f_lo = std::min(f_lo, c.err_f);
      f_hi = std::max(f_hi, c.err_f);
    }
    bool const f_ok = std::max(-f_lo, f_hi) <= 0.06;
    out << "assumed point -> T1 " << a.t1_ms << " T2 " << a.t2_ms << " B1 " << a.b1 << " F " << a.f
        << (assumed_ok ? " (within one step)" : " (NOT within one step)") << "; F error range [" << 100.0 * f_lo
        << ", " << 100.0 * f_hi << "] pp (|.| <= 6); runtime " << t << " s (< 900 s)";
    return assumed_ok && f_ok && t < 900.0;
  });

  criterion(11, [&](std::ostream &out) {
    auto const dir = fs::temp_directory_path() / ("mrf_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    struct Cleanup
    {
      fs::path p;
      ~Cleanup() { fs::remove_all(p); }
    } cleanup{dir};

    auto const path = dir / "desk.mrfd";
    save(*mt, path);
    auto const back = load(path);
    bool const round_trip = back == *mt && serialize(back) == serialize(*mt);
    save(back, dir / "again.mrfd");
    bool const resave_identical = read_bytes(path) == read_bytes(dir / "again.mrfd");

    auto const      orig = read_bytes(path);
    std::mt19937_64 rng{11};
    std::size_t     detected = 0, tried = 0;
    std::uniform_int_distribution<std::size_t> pos{0, orig.size() - 1};
    std::uniform_int_distribution<int>         bit{0, 7};
    std::vector<std::size_t>                   positions{0, 8, orig.size() / 2, orig.size() - 1};
    for (int i = 0; i < 12; i++) {
      positions.push_back(pos(rng));
    }
    auto bytes = orig;
    for (auto p : positions) {
      tried++;
      char const keep = bytes[p];
      bytes[p] = static_cast<char>(bytes[p] ^ (1 << bit(rng)));
      write_bytes(path, bytes);
      try {
        load(path);
      } catch (FormatError const &) {
        detected++;
      }
      bytes[p] = keep;
    }

    GridSpec const g{log_axis(300.0, 2000.0, 4), log_axis(30.0, 200.0, 3), linear_axis(0.8, 1.2, 3), fraction_axis(3)};
    auto const     tuples = build_grid(DictKind::two_pool_irff_mt, g);
    std::vector<std::uint64_t> hashes;
    for (std::size_t threads : {1, 2, 4}) {
      GenerateOptions o;
      o.kind = DictKind::two_pool_irff_mt;
      o.threads = threads;
      o.sim = setup.sim;
      auto const p = dir / ("t" + std::to_string(threads) + ".mrfd");
      save(generate(setup.irff_mt, tuples, g, setup.profile, Model::two_pool, o), p);
      hashes.push_back(file_crc(p));
    }
    bool const same_hash = std::all_of(hashes.begin(), hashes.end(), [&](auto h) { return h == hashes[0]; });
    out << "round trip " << (round_trip && resave_identical ? "bit-exact" : "DIFFERS") << "; corruption detected "
        << detected << "/" << tried << "; file hash with 1/2/4 threads " << (same_hash ? "identical " : "DIFFERS ")
        << hex(hashes[0]);
    return round_trip && resave_identical && detected == tried && same_hash;
  });

  std::size_t const failed =
    static_cast<std::size_t>(std::count_if(outcomes.begin(), outcomes.end(), [](auto const &o) { return !o.pass; }));
  std::printf("acceptance: %zu/%zu criteria passed\n", outcomes.size() - failed, outcomes.size());
  return failed == 0 ? 0 : 1;
}
