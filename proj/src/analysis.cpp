#include "mrf/analysis.hpp"

#include "mrf/checksum.hpp"
#include "mrf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace mrf {

using nlohmann::json;

namespace {

auto fmt(double v, int precision = 6) -> std::string
{
  if (std::isnan(v)) { return "nan"; }
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

auto dict_provenance(Dictionary const &d) -> json
{
  return {{"kind", to_string(d.meta.kind)},
          {"entries", d.size()},
          {"schedule_hash", hex(d.meta.schedule_hash)},
          {"dictionary_hash", hex(content_hash(d))}};
}

} // namespace

auto StudyReport::summary_value(std::string const &name) const -> double
{
  for (auto const &[k, v] : summary) {
    if (k == name) { return v; }
  }
  throw std::out_of_range("no summary value named " + name);
}

void write_csv(StudyReport const &r, std::filesystem::path const &path)
{
  std::ofstream out{path, std::ios::trunc};
  if (!out) { throw std::runtime_error("cannot open " + path.string() + " for writing"); }
  out << "# study: " << r.kind << "\n";
  out << "# provenance: " << r.provenance.dump() << "\n";
  for (auto const &[k, v] : r.summary) {
    out << "# " << k << " = " << fmt(v, 10) << "\n";
  }
  for (std::size_t i = 0; i < r.columns.size(); i++) {
    out << (i ? "," : "") << r.columns[i];
  }
  out << "\n";
  for (auto const &row : r.rows) {
    for (std::size_t i = 0; i < row.size(); i++) {
      out << (i ? "," : "") << row[i];
    }
    out << "\n";
  }
  if (!out) { throw std::runtime_error("write failed: " + path.string()); }
}

void add_noise(std::vector<Cx> &s, double snr_db, std::mt19937_64 &rng)
{
  if (s.empty() || snr_db == std::numeric_limits<double>::infinity()) { return; }
  double p = 0.0;
  for (auto const &v : s) {
    p += std::norm(v);
  }
  double const rms = std::sqrt(p / static_cast<double>(s.size()));
  double const sigma = rms * std::pow(10.0, -snr_db / 20.0);
  if (!(sigma > 0.0)) { return; }
  std::normal_distribution<double> n{0.0, sigma / std::sqrt(2.0)};
  for (auto &v : s) {
    double const re = n(rng);
    double const im = n(rng);
    v += Cx{re, im};
  }
}

auto trial_rng(std::uint64_t seed, std::uint64_t trial) -> std::mt19937_64
{
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
  return std::mt19937_64{seq};
}

auto StudySetup::defaults() -> StudySetup
{
  StudySetup s;
  auto const cfg = ScheduleConfig::irff(false);
  s.irff = build_irff(cfg, false);
  s.irff_mt = build_irff(cfg, true);
  s.profile = compute_slice_profile(cfg.excitation_waveform, 60.0);
  return s;
}

auto StudySetup::schedule_for(DictKind k) const -> Schedule const & { return uses_mt_pulses(k) ? irff_mt : irff; }

auto simulate_truth(StudySetup const &setup, DictKind k, Sample const &s) -> std::vector<Cx>
{
  return simulate_fingerprint(setup.schedule_for(k), s.tissue, s.b1, setup.profile, Model::two_pool, setup.sim);
}

// ---------------------------------------------------------------------------

auto PhantomStudy::cell(std::string const &sample, DictKind dict) const -> PhantomCell const &
{
  for (auto const &c : cells) {
    if (c.name == sample && c.dict == dict) { return c; }
  }
  throw std::out_of_range("no phantom cell " + sample + " / " + to_string(dict));
}

auto phantom_report(StudySetup const &setup, Sample const &water, Sample const &bsa, PhantomDictionaries const &dicts,
                    std::optional<NoiseSpec> noise, MatchOptions const &mopts) -> PhantomStudy
{
  std::pair<DictKind, Dictionary const *> const table[] = {
    {DictKind::single_pool_irff, dicts.single_pool_irff},
    {DictKind::two_pool_irff, dicts.two_pool_irff},
    {DictKind::two_pool_irff_mt, dicts.two_pool_irff_mt},
  };
  PhantomStudy study;
  study.report.kind = "phantom";
  study.report.columns = {"sample", "dictionary", "true_t1_ms", "true_t2_ms", "true_b1", "true_f", "t1_ms", "t2_ms",
                          "b1", "f", "pd_abs", "nrmse", "entry_index"};
  json dict_prov = json::array();
  std::uint64_t trial = 0;
  for (auto const *sample : {&water, &bsa}) {
    for (auto const &[kind, dict] : table) {
      trial++;
      if (!dict) { continue; }
      if (dict->meta.kind != kind) {
        throw std::invalid_argument("phantom_report: expected a " + to_string(kind) + " dictionary, got " +
                                    to_string(dict->meta.kind));
      }
      auto signal = simulate_truth(setup, kind, *sample);
      if (noise) {
        auto rng = trial_rng(noise->seed, trial);
        add_noise(signal, noise->snr_db, rng);
      }
      MatchOptions o = mopts;
      o.schedule_hash = setup.schedule_for(kind).hash();
      PhantomCell c{sample->name, kind, *sample, Matcher{*dict, o}.match(signal)};
      auto const &m = c.match;
      study.report.rows.push_back({c.name, to_string(kind), fmt(sample->tissue.t1_ms), fmt(sample->tissue.t2_ms),
                                   fmt(sample->b1), fmt(sample->tissue.f_frac), fmt(m.t1_ms), fmt(m.t2_ms), fmt(m.b1),
                                   fmt(m.f), fmt(std::abs(m.pd)), fmt(m.nrmse), std::to_string(m.index)});
      study.report.summary.emplace_back("nrmse_" + c.name + "_" + to_string(kind), m.nrmse);
      study.cells.push_back(std::move(c));
    }
  }
  for (auto const &[kind, dict] : table) {
    if (dict) { dict_prov.push_back(dict_provenance(*dict)); }
  }
  study.report.provenance = {{"schedule_hash_irff", hex(setup.irff.hash())},
                             {"schedule_hash_irff_mt", hex(setup.irff_mt.hash())},
                             {"dictionaries", dict_prov},
                             {"snr_db", noise ? json(noise->snr_db) : json(nullptr)},
                             {"seed", noise ? json(noise->seed) : json(nullptr)}};
  return study;
}

// ---------------------------------------------------------------------------

auto sensitivity_grid(StudySetup const &setup, SensitivityConfig const &cfg, Dictionary const &dict) -> SensitivityStudy
{
  if (dict.meta.model != Model::two_pool) { throw std::invalid_argument("sensitivity_grid needs a two-pool dictionary"); }
  double const a_t2ss = dict.meta.t2ss_us, a_k = dict.meta.k_per_s;
  if (!(cfg.t2ss_lo_us <= a_t2ss && a_t2ss <= cfg.t2ss_hi_us && cfg.k_lo <= a_k && a_k <= cfg.k_hi)) {
    throw std::invalid_argument("sensitivity ranges must bracket the dictionary's assumed T2ss and k");
  }
  if (cfg.n_t2ss == 0 || cfg.n_k == 0) { throw std::invalid_argument("empty sensitivity grid"); }

  SensitivityStudy st;
  st.t2ss_axis = linear_axis(cfg.t2ss_lo_us, cfg.t2ss_hi_us, cfg.n_t2ss);
  st.k_axis = linear_axis(cfg.k_lo, cfg.k_hi, cfg.n_k);
  std::size_t const n = cfg.n_t2ss * cfg.n_k;

  // Simulate every cell plus the assumed point, then match in one batch.
  std::size_t const L = dict.length;
  std::vector<Cx>   signals((n + 1) * L);
  auto              cell_params = [&](std::size_t i) -> std::pair<double, double> {
    if (i == n) { return {a_t2ss, a_k}; }
    return {st.t2ss_axis[i / cfg.n_k], st.k_axis[i % cfg.n_k]};
  };
  parallel_for(n + 1, cfg.threads, [&](std::size_t i) {
    auto [t2ss, k] = cell_params(i);
    Sample s = cfg.truth;
    s.tissue.t2ss_us = t2ss;
    s.tissue.k_per_s = k;
    s.tissue.lineshape = dict.meta.lineshape;
    auto const f = simulate_truth(setup, dict.meta.kind, s);
    std::copy(f.begin(), f.end(), signals.begin() + static_cast<std::ptrdiff_t>(i * L));
  });
  MatchOptions mo;
  mo.threads = cfg.threads;
  mo.schedule_hash = setup.schedule_for(dict.meta.kind).hash();
  auto const matches = Matcher{dict, mo}.match_many(signals, n + 1);

  auto const &t = cfg.truth;
  auto        make_cell = [&](std::size_t i) {
    auto [t2ss, k] = cell_params(i);
    auto const &m = matches[i];
    return SensitivityCell{t2ss,          k,
                           m,             m.t1_ms - t.tissue.t1_ms,
                           m.t2_ms - t.tissue.t2_ms, m.b1 - t.b1,
                           m.f - t.tissue.f_frac};
  };
  for (std::size_t i = 0; i < n; i++) {
    st.cells.push_back(make_cell(i));
  }
  st.assumed = make_cell(n);

  auto &r = st.report;
  r.kind = "sensitivity";
  r.columns = {"t2ss_us", "k_per_s", "t1_ms", "t2_ms", "b1", "f", "err_t1_ms", "err_t2_ms", "err_b1", "err_f_pp", "nrmse"};
  auto add_row = [&](SensitivityCell const &c) {
    r.rows.push_back({fmt(c.t2ss_us), fmt(c.k_per_s), fmt(c.match.t1_ms), fmt(c.match.t2_ms), fmt(c.match.b1),
                      fmt(c.match.f), fmt(c.err_t1_ms), fmt(c.err_t2_ms), fmt(c.err_b1), fmt(100.0 * c.err_f),
                      fmt(c.match.nrmse)});
  };
  for (auto const &c : st.cells) {
    add_row(c);
  }
  auto extrema = [&](char const *name, auto get, double scale) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (auto const &c : st.cells) {
      lo = std::min(lo, get(c) * scale);
      hi = std::max(hi, get(c) * scale);
    }
    r.summary.emplace_back(std::string{"min_"} + name, lo);
    r.summary.emplace_back(std::string{"max_"} + name, hi);
  };
  extrema("err_t1_ms", [](auto const &c) { return c.err_t1_ms; }, 1.0);
  extrema("err_t2_ms", [](auto const &c) { return c.err_t2_ms; }, 1.0);
  extrema("err_b1", [](auto const &c) { return c.err_b1; }, 1.0);
  extrema("err_f_pp", [](auto const &c) { return c.err_f; }, 100.0);
  r.summary.emplace_back("assumed_err_t1_ms", st.assumed.err_t1_ms);
  r.summary.emplace_back("assumed_err_t2_ms", st.assumed.err_t2_ms);
  r.summary.emplace_back("assumed_err_b1", st.assumed.err_b1);
  r.summary.emplace_back("assumed_err_f_pp", 100.0 * st.assumed.err_f);
  r.provenance = {{"schedule_hash", hex(setup.schedule_for(dict.meta.kind).hash())},
                  {"dictionary", dict_provenance(dict)},
                  {"grid", {cfg.n_t2ss, cfg.n_k}},
                  {"t2ss_range_us", {cfg.t2ss_lo_us, cfg.t2ss_hi_us}},
                  {"k_range_per_s", {cfg.k_lo, cfg.k_hi}},
                  {"truth", {t.tissue.t1_ms, t.tissue.t2_ms, t.b1, t.tissue.f_frac}}};
  return st;
}

// ---------------------------------------------------------------------------

auto separation_study(StudySetup const &setup, SeparationConfig const &cfg, Dictionary const &dict_irff,
                      Dictionary const &dict_irff_mt) -> SeparationStudy
{
  auto same_grid = [](GridSpec const &a, GridSpec const &b) {
    return a.t1_ms == b.t1_ms && a.t2_ms == b.t2_ms && a.b1 == b.b1 && a.f == b.f;
  };
  if (!same_grid(dict_irff.grid, dict_irff_mt.grid) || dict_irff.params != dict_irff_mt.params) {
    throw std::invalid_argument("separation_study: dictionaries have different grids");
  }
  if (dict_irff.meta.kind != DictKind::two_pool_irff || dict_irff_mt.meta.kind != DictKind::two_pool_irff_mt) {
    throw std::invalid_argument("separation_study: expected two-pool IRFF and IRFF-MT dictionaries");
  }
  std::vector<std::size_t> water;
  for (std::size_t i = 0; i < dict_irff.size(); i++) {
    if (dict_irff.params[i].f == 0.0) { water.push_back(i); }
  }
  if (water.empty()) { throw std::invalid_argument("separation_study: grid has no F = 0 entries"); }

  SeparationStudy   st;
  std::size_t const L = dict_irff.length;
  std::size_t const n = cfg.n_trials;
  std::vector<Cx>   sig_a(n * L), sig_b(n * L);
  st.trials.resize(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    auto                                       rng = trial_rng(cfg.seed, i);
    std::uniform_int_distribution<std::size_t> pick{0, water.size() - 1};
    std::size_t const                          idx = water[pick(rng)];
    auto const                                &p = dict_irff.params[idx];
    Sample const s{"water", TwoPoolParams{p.t1_ms, p.t2_ms, 0.0, dict_irff.meta.k_per_s, dict_irff.meta.t2ss_us,
                                          dict_irff.meta.lineshape},
                   p.b1};
    auto a = simulate_truth(setup, DictKind::two_pool_irff, s);
    auto b = simulate_truth(setup, DictKind::two_pool_irff_mt, s);
    // common random numbers: both sequences see the same noise draws
    auto rng_a = trial_rng(cfg.seed ^ 0x5eed5eed5eedULL, i);
    auto rng_b = rng_a;
    add_noise(a, cfg.snr_db, rng_a);
    add_noise(b, cfg.snr_db, rng_b);
    std::copy(a.begin(), a.end(), sig_a.begin() + static_cast<std::ptrdiff_t>(i * L));
    std::copy(b.begin(), b.end(), sig_b.begin() + static_cast<std::ptrdiff_t>(i * L));
    st.trials[i].truth_index = idx;
  });
  MatchOptions mo;
  mo.threads = cfg.threads;
  mo.schedule_hash = setup.irff.hash();
  auto const ra = Matcher{dict_irff, mo}.match_many(sig_a, n);
  mo.schedule_hash = setup.irff_mt.hash();
  auto const rb = Matcher{dict_irff_mt, mo}.match_many(sig_b, n);

  std::size_t spurious_a = 0, spurious_b = 0;
  auto       &r = st.report;
  r.kind = "separation";
  r.columns = {"trial", "true_t1_ms", "true_t2_ms", "true_b1", "irff_f", "irff_mt_f", "irff_nrmse", "irff_mt_nrmse"};
  for (std::size_t i = 0; i < n; i++) {
    st.trials[i].irff = ra[i];
    st.trials[i].irff_mt = rb[i];
    spurious_a += ra[i].f > 0.0;
    spurious_b += rb[i].f > 0.0;
    auto const &p = dict_irff.params[st.trials[i].truth_index];
    r.rows.push_back({std::to_string(i), fmt(p.t1_ms), fmt(p.t2_ms), fmt(p.b1), fmt(ra[i].f), fmt(rb[i].f),
                      fmt(ra[i].nrmse), fmt(rb[i].nrmse)});
  }
  st.rate_irff = n ? static_cast<double>(spurious_a) / static_cast<double>(n) : 0.0;
  st.rate_irff_mt = n ? static_cast<double>(spurious_b) / static_cast<double>(n) : 0.0;
  r.summary = {{"trials", static_cast<double>(n)},
               {"snr_db", cfg.snr_db},
               {"spurious_rate_irff", st.rate_irff},
               {"spurious_rate_irff_mt", st.rate_irff_mt}};
  r.provenance = {{"seed", cfg.seed},
                  {"schedule_hash_irff", hex(setup.irff.hash())},
                  {"schedule_hash_irff_mt", hex(setup.irff_mt.hash())},
                  {"dictionaries", {dict_provenance(dict_irff), dict_provenance(dict_irff_mt)}}};
  return st;
}

// ---------------------------------------------------------------------------

auto median(std::vector<double> v) -> double
{
  std::erase_if(v, [](double x) { return std::isnan(x); });
  if (v.empty()) { return std::numeric_limits<double>::quiet_NaN(); }
  std::sort(v.begin(), v.end());
  std::size_t const m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

auto roi_stats(std::span<double const> values, std::span<int const> labels) -> std::vector<RoiStat>
{
  if (values.size() != labels.size()) { throw std::invalid_argument("roi_stats: map and label shapes differ"); }
  std::map<int, std::vector<double>> groups;
  for (std::size_t i = 0; i < values.size(); i++) {
    auto &g = groups[labels[i]];
    if (!std::isnan(values[i])) { g.push_back(values[i]); }
  }
  std::vector<RoiStat> out;
  for (auto &[label, v] : groups) {
    out.push_back({label, v.size(), median(v)});
  }
  return out;
}

auto roi_report(std::vector<MatchResult> const &maps, std::span<int const> labels) -> StudyReport
{
  if (maps.size() != labels.size()) { throw std::invalid_argument("roi_report: map and label shapes differ"); }
  auto column = [&](auto get) {
    std::vector<double> v;
    v.reserve(maps.size());
    for (auto const &m : maps) {
      v.push_back(get(m));
    }
    return v;
  };
  auto const t1 = roi_stats(column([](auto const &m) { return m.t1_ms; }), labels);
  auto const t2 = roi_stats(column([](auto const &m) { return m.t2_ms; }), labels);
  auto const b1 = roi_stats(column([](auto const &m) { return m.b1; }), labels);
  auto const f = roi_stats(column([](auto const &m) { return m.f; }), labels);
  auto const e = roi_stats(column([](auto const &m) { return m.nrmse; }), labels);

  StudyReport r;
  r.kind = "roi";
  r.columns = {"label", "voxels", "median_t1_ms", "median_t2_ms", "median_b1", "median_f_pct", "median_nrmse"};
  for (std::size_t i = 0; i < t1.size(); i++) {
    r.rows.push_back({std::to_string(t1[i].label), std::to_string(t1[i].count), fmt(t1[i].median), fmt(t2[i].median),
                      fmt(b1[i].median), fmt(100.0 * f[i].median), fmt(e[i].median)});
  }
  r.summary.emplace_back("labels", static_cast<double>(t1.size()));
  return r;
}

auto within_one_step(std::vector<double> const &axis, std::size_t matched, double truth) -> bool
{
  if (matched >= axis.size()) { return false; }
  double const lo = matched > 0 ? axis[matched - 1] : axis[matched];
  double const hi = matched + 1 < axis.size() ? axis[matched + 1] : axis[matched];
  double const tol = 1e-9 * std::max(1.0, std::abs(truth));
  return truth >= lo - tol && truth <= hi + tol;
}

} // namespace mrf
