#include "mrf/analysis.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <unistd.h>

using namespace mrf;

namespace {

double const qnan = std::numeric_limits<double>::quiet_NaN();

StudySetup const &setup()
{
  static StudySetup const s = [] {
    StudySetup r;
    auto const cfg = ScheduleConfig::irff(false, 40);
    r.irff = build_irff(cfg, false);
    r.irff_mt = build_irff(cfg, true);
    r.profile = compute_slice_profile(Waveform::windowed_sinc, 60.0, 4);
    return r;
  }();
  return s;
}

auto grid(DictKind k) -> GridSpec
{
  GridSpec g{{400.0, 648.0, 800.0, 1056.0, 1500.0}, {20.0, 29.0, 40.0, 51.0, 60.0, 80.0}, {0.9, 0.98, 1.0}, {}};
  if (model_of(k) == Model::two_pool) { g.f = {0.0, 0.05, 0.10, 0.14, 0.20}; }
  return g;
}

Dictionary const &dict(DictKind k)
{
  static Dictionary const d[3] = {
    [] {
      auto const k = DictKind::single_pool_irff;
      GenerateOptions o;
      o.kind = k;
      return generate(setup().irff, build_grid(k, grid(k)), grid(k), setup().profile, Model::single_pool, o);
    }(),
    [] {
      auto const k = DictKind::two_pool_irff;
      GenerateOptions o;
      o.kind = k;
      return generate(setup().irff, build_grid(k, grid(k)), grid(k), setup().profile, Model::two_pool, o);
    }(),
    [] {
      auto const k = DictKind::two_pool_irff_mt;
      GenerateOptions o;
      o.kind = k;
      return generate(setup().irff_mt, build_grid(k, grid(k)), grid(k), setup().profile, Model::two_pool, o);
    }(),
  };
  return d[static_cast<int>(k)];
}

auto all_dicts() -> PhantomDictionaries
{
  return {&dict(DictKind::single_pool_irff), &dict(DictKind::two_pool_irff), &dict(DictKind::two_pool_irff_mt)};
}

auto sample(std::string name, double t1, double t2, double f, double b1) -> Sample
{
  return {std::move(name), TwoPoolParams{t1, t2, f, 4.3, 12.0, Lineshape::gaussian}, b1};
}

auto axis_index(std::vector<double> const &axis, double v) -> std::size_t
{
  return static_cast<std::size_t>(std::find(axis.begin(), axis.end(), v) - axis.begin());
}

} // namespace

TEST_CASE("median")
{
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(median({qnan, 5.0}) == 5.0);
  CHECK(std::isnan(median({})));
  CHECK(std::isnan(median({qnan})));
}

TEST_CASE("roi_stats")
{
  SUBCASE("uniform map")
  {
    std::vector<double> const v(7, 3.25);
    std::vector<int> const    l{1, 2, 2, 5, 1, 5, 5};
    for (auto const &s : roi_stats(v, l)) {
      CHECK(s.median == 3.25);
    }
  }
  SUBCASE("two labels")
  {
    std::vector<double> const v{1.0, 2.0, 3.0, 10.0};
    std::vector<int> const    l{1, 1, 1, 2};
    auto const                s = roi_stats(v, l);
    REQUIRE(s.size() == 2);
    CHECK(s[0].label == 1);
    CHECK(s[0].median == 2.0);
    CHECK(s[0].count == 3);
    CHECK(s[1].label == 2);
    CHECK(s[1].median == 10.0);
  }
  SUBCASE("NaN voxels are ignored")
  {
    std::vector<double> const v{1.0, qnan, 3.0};
    std::vector<int> const    l{4, 4, 4};
    auto const                s = roi_stats(v, l);
    CHECK(s[0].median == 2.0);
    CHECK(s[0].count == 2);
  }
  SUBCASE("shape mismatch")
  {
    std::vector<double> const v{1.0};
    std::vector<int> const    l{1, 2};
    CHECK_THROWS_AS(roi_stats(v, l), std::invalid_argument);
  }
}

TEST_CASE("within_one_step")
{
  std::vector<double> const a{1.0, 2.0, 4.0, 8.0};
  CHECK(within_one_step(a, 1, 1.0));
  CHECK(within_one_step(a, 1, 4.0));
  CHECK_FALSE(within_one_step(a, 1, 4.5));
  CHECK(within_one_step(a, 0, 0.99999999999));
  CHECK_FALSE(within_one_step(a, 0, 0.5));
  CHECK(within_one_step(a, 3, 8.0));
  CHECK_FALSE(within_one_step(a, 3, 9.0));
  CHECK_FALSE(within_one_step(a, 7, 2.0));
}

TEST_CASE("noise has the requested SNR")
{
  std::vector<Cx> s(20000);
  for (std::size_t i = 0; i < s.size(); i++) {
    s[i] = std::polar(0.3 + 0.2 * std::sin(0.01 * static_cast<double>(i)), 0.001 * static_cast<double>(i));
  }
  double p = 0.0;
  for (auto v : s) {
    p += std::norm(v);
  }
  auto noisy = s;
  auto rng = trial_rng(9, 0);
  add_noise(noisy, 30.0, rng);
  double e = 0.0, re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < s.size(); i++) {
    auto const d = noisy[i] - s[i];
    e += std::norm(d);
    re += d.real() * d.real();
    im += d.imag() * d.imag();
  }
  double const snr = 10.0 * std::log10(p / e);
  CHECK(snr == doctest::Approx(30.0).epsilon(0.01));
  CHECK(re / im == doctest::Approx(1.0).epsilon(0.05));

  auto same = s;
  add_noise(same, std::numeric_limits<double>::infinity(), rng);
  CHECK(same == s);
}

TEST_CASE("trial streams are reproducible and distinct")
{
  auto a = trial_rng(5, 3), b = trial_rng(5, 3), c = trial_rng(5, 4), d = trial_rng(6, 3);
  auto const x = a();
  CHECK(x == b());
  CHECK(x != c());
  CHECK(x != d());
}

TEST_CASE("phantom report")
{
  auto const water = sample("water", 648.0, 29.0, 0.0, 0.98);
  auto const bsa = sample("bsa", 1056.0, 51.0, 0.14, 0.98);
  auto const st = phantom_report(setup(), water, bsa, all_dicts());
  CHECK(st.cells.size() == 6);
  CHECK(st.report.rows.size() == 6);

  SUBCASE("noiseless truths on the grid match their own kind exactly")
  {
    for (auto k : {DictKind::two_pool_irff, DictKind::two_pool_irff_mt}) {
      for (auto const *s : {&water, &bsa}) {
        auto const &c = st.cell(s->name, k);
        CHECK(c.match.nrmse < 1e-6);
        CHECK(c.match.t1_ms == s->tissue.t1_ms);
        CHECK(c.match.t2_ms == s->tissue.t2_ms);
        CHECK(c.match.f == s->tissue.f_frac);
      }
    }
    CHECK(st.cell("water", DictKind::single_pool_irff).match.nrmse < 1e-6);
  }
  SUBCASE("single-pool fit of an MT sample is worse")
  {
    double const single = st.report.summary_value("nrmse_bsa_single-pool-irff");
    double const two = st.report.summary_value("nrmse_bsa_two-pool-irff-mt");
    CHECK(single > two);
    CHECK(single > 1e-3);
  }
  SUBCASE("noisy water stays within one grid step")
  {
    auto const noisy = phantom_report(setup(), water, bsa, all_dicts(), NoiseSpec{40.0, 7});
    auto const &c = noisy.cell("water", DictKind::two_pool_irff_mt);
    auto const &g = dict(DictKind::two_pool_irff_mt).grid;
    CHECK(within_one_step(g.t1_ms, axis_index(g.t1_ms, c.match.t1_ms), 648.0));
    CHECK(within_one_step(g.t2_ms, axis_index(g.t2_ms, c.match.t2_ms), 29.0));
    auto const again = phantom_report(setup(), water, bsa, all_dicts(), NoiseSpec{40.0, 7});
    CHECK(again.report.rows == noisy.report.rows);
  }
  SUBCASE("wrong dictionary kind")
  {
    PhantomDictionaries swapped = all_dicts();
    std::swap(swapped.two_pool_irff, swapped.two_pool_irff_mt);
    CHECK_THROWS_AS(phantom_report(setup(), water, bsa, swapped), std::invalid_argument);
  }
  SUBCASE("CSV carries provenance")
  {
    auto const path = std::filesystem::temp_directory_path() / ("mrf_phantom_" + std::to_string(::getpid()) + ".csv");
    write_csv(st.report, path);
    std::ifstream in{path};
    std::string   first, second;
    std::getline(in, first);
    std::getline(in, second);
    CHECK(first.rfind("# study: phantom", 0) == 0);
    CHECK(second.rfind("# provenance: ", 0) == 0);
    std::filesystem::remove(path);
  }
}

TEST_CASE("sensitivity grid")
{
  auto const &d = dict(DictKind::two_pool_irff_mt);
  SensitivityConfig cfg;
  cfg.truth = sample("truth", 800.0, 60.0, 0.10, 1.0);

  SUBCASE("collapsed to the assumed point equals a self-match")
  {
    cfg.n_t2ss = cfg.n_k = 1;
    cfg.t2ss_lo_us = cfg.t2ss_hi_us = 12.0;
    cfg.k_lo = cfg.k_hi = 4.3;
    auto const st = sensitivity_grid(setup(), cfg, d);
    REQUIRE(st.cells.size() == 1);
    auto const self = match_one(simulate_truth(setup(), DictKind::two_pool_irff_mt, cfg.truth), d);
    CHECK(st.cells[0].match.index == self.index);
    CHECK(st.assumed.match.index == self.index);
    CHECK(st.cells[0].err_t1_ms == 0.0);
    CHECK(st.cells[0].err_f == 0.0);
    CHECK(st.report.summary_value("assumed_err_f_pp") == 0.0);
  }
  SUBCASE("small grid")
  {
    cfg.n_t2ss = 3;
    cfg.n_k = 2;
    auto const st = sensitivity_grid(setup(), cfg, d);
    CHECK(st.cells.size() == 6);
    CHECK(st.t2ss_axis.size() == 3);
    CHECK(st.k_axis.size() == 2);
    CHECK(st.report.rows.size() == 6);
    CHECK(st.assumed.err_t1_ms == 0.0);
    CHECK(st.report.summary_value("min_err_f_pp") <= st.report.summary_value("max_err_f_pp"));
  }
  SUBCASE("ranges must bracket the assumed point")
  {
    cfg.t2ss_lo_us = 13.0;
    CHECK_THROWS_AS(sensitivity_grid(setup(), cfg, d), std::invalid_argument);
  }
  SUBCASE("needs a two-pool dictionary")
  {
    CHECK_THROWS_AS(sensitivity_grid(setup(), cfg, dict(DictKind::single_pool_irff)), std::invalid_argument);
  }
}

TEST_CASE("water/MT separation")
{
  auto const &a = dict(DictKind::two_pool_irff);
  auto const &b = dict(DictKind::two_pool_irff_mt);
  SeparationConfig cfg;
  cfg.n_trials = 24;
  cfg.seed = 3;

  SUBCASE("noiseless and high-SNR trials give no spurious F")
  {
    for (double snr : {std::numeric_limits<double>::infinity(), 80.0}) {
      cfg.snr_db = snr;
      auto const st = separation_study(setup(), cfg, a, b);
      CHECK(st.rate_irff == 0.0);
      CHECK(st.rate_irff_mt == 0.0);
      CHECK(st.trials.size() == 24);
    }
  }
  SUBCASE("independent of the thread count")
  {
    cfg.snr_db = 25.0;
    cfg.threads = 1;
    auto const one = separation_study(setup(), cfg, a, b);
    cfg.threads = 3;
    auto const three = separation_study(setup(), cfg, a, b);
    CHECK(one.report.rows == three.report.rows);
  }
  SUBCASE("argument checks")
  {
    CHECK_THROWS_AS(separation_study(setup(), cfg, b, a), std::invalid_argument);
    CHECK_THROWS_AS(separation_study(setup(), cfg, a, dict(DictKind::single_pool_irff)), std::invalid_argument);
  }
}

TEST_CASE("synthetic two-tissue phantom recovers the F medians")
{
  auto const &d = dict(DictKind::two_pool_irff_mt);
  Sample const wm = sample("wm", 648.0, 40.0, 0.16, 1.0);
  Sample const gm = sample("gm", 1056.0, 60.0, 0.10, 1.0);
  SignalVolume v;
  v.length = d.length;
  std::vector<int> labels;
  for (std::size_t i = 0; i < 40; i++) {
    auto const &s = i % 2 ? gm : wm;
    auto        sig = simulate_truth(setup(), DictKind::two_pool_irff_mt, s);
    auto        rng = trial_rng(11, i);
    add_noise(sig, 40.0, rng);
    v.data.insert(v.data.end(), sig.begin(), sig.end());
    v.voxels++;
    labels.push_back(i % 2 ? 2 : 1);
  }
  auto const maps = match_volume(v, d);
  std::vector<double> f;
  for (auto const &m : maps) {
    f.push_back(m.f);
  }
  auto const stats = roi_stats(f, labels);
  REQUIRE(stats.size() == 2);
  auto const &axis = d.grid.f;
  auto nearest = [&](double x) {
    return static_cast<std::size_t>(std::min_element(axis.begin(), axis.end(), [&](double p, double q) {
                                       return std::abs(p - x) < std::abs(q - x);
                                     }) -
                                     axis.begin());
  };
  CHECK(within_one_step(axis, nearest(stats[0].median), 0.16));
  CHECK(within_one_step(axis, nearest(stats[1].median), 0.10));

  auto const report = roi_report(maps, labels);
  CHECK(report.rows.size() == 2);
  CHECK(report.summary_value("labels") == 2.0);
}
