// mrf: schedule building, dictionary generation, matching and studies.

#include "mrf/analysis.hpp"
#include "mrf/checksum.hpp"
#include "mrf/parallel.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#ifndef MRF_VERSION
#define MRF_VERSION "0.0.0"
#endif

namespace {

using namespace mrf;
using nlohmann::json;

enum Exit
{
  ok = 0,
  failure = 1,
  usage = 2,
  needs_confirmation = 3
};

struct UsageError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct Common
{
  std::size_t   threads = 0;
  std::uint64_t seed = 1;
  std::string   out;
};

auto elapsed_s(std::chrono::steady_clock::time_point t0) -> double
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

auto read_text(std::string const &path) -> std::string
{
  std::ifstream in{path};
  if (!in) { throw std::runtime_error("cannot open " + path); }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(std::string const &path, std::string const &text)
{
  std::ofstream out{path, std::ios::trunc};
  if (!out) { throw std::runtime_error("cannot open " + path + " for writing"); }
  out << text;
  if (!out) { throw std::runtime_error("write failed: " + path); }
}

/// Every run reports what it was given and which inputs it bound to.
class Provenance
{
public:
  Provenance(std::string command, json config)
    : block_{{"tool", "mrf"}, {"version", MRF_VERSION}, {"command", std::move(command)}}
  {
    block_["config"] = config;
    block_["config_hash"] = hex(crc64(config.dump()));
  }
  void schedule(Schedule const &s) { block_["schedule_hash"] = hex(s.hash()); }
  void dictionary(Dictionary const &d)
  {
    block_["dictionary_hash"] = hex(content_hash(d));
    block_["dictionary_schedule_hash"] = hex(d.meta.schedule_hash);
  }
  void set(std::string const &k, json v) { block_[k] = std::move(v); }
  auto json_block() const -> json const & { return block_; }
  auto comment_lines() const -> std::vector<std::string> { return {"provenance: " + block_.dump()}; }
  void write_sidecar(std::string const &out) const { write_text(out + ".provenance.json", block_.dump(2) + "\n"); }
  void print() const { std::cout << "provenance: " << block_.dump() << "\n"; }

private:
  json block_;
};

auto parse_triple(std::string const &s, char const *flag) -> std::tuple<double, double, std::size_t>
{
  std::stringstream ss{s};
  std::string       a, b, c;
  if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ',')) {
    throw UsageError(std::string{flag} + " expects lo,hi,n");
  }
  try {
    return {std::stod(a), std::stod(b), static_cast<std::size_t>(std::stoul(c))};
  } catch (std::exception const &) {
    throw UsageError(std::string{flag} + " expects lo,hi,n");
  }
}

auto parse_pair(std::string const &s, char const *flag) -> std::pair<double, double>
{
  std::stringstream ss{s};
  std::string       a, b;
  if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',')) { throw UsageError(std::string{flag} + " expects lo,hi"); }
  try {
    return {std::stod(a), std::stod(b)};
  } catch (std::exception const &) {
    throw UsageError(std::string{flag} + " expects lo,hi");
  }
}

auto schedule_from_kind(std::string const &kind, std::size_t segment_length) -> ScheduleConfig
{
  if (kind != "irff" && kind != "irff-mt") { throw UsageError("schedule kind must be irff or irff-mt"); }
  auto c = ScheduleConfig::irff(kind == "irff-mt", segment_length);
  return c;
}

auto load_schedule(std::string const &path) -> ScheduleConfig
{
  return schedule_config_from_json(json::parse(read_text(path)));
}

auto is_csv(std::string const &path, std::string const &format) -> bool
{
  if (format == "csv") { return true; }
  if (format == "binary") { return false; }
  return std::filesystem::path{path}.extension() == ".csv";
}

// schedule ---------------------------------------------------------------------

struct ScheduleArgs
{
  std::string kind = "irff";
  std::size_t segment_length = 350;
  std::string from;
};

auto run_schedule(ScheduleArgs const &a, Common const &c) -> int
{
  ScheduleConfig cfg = a.from.empty() ? schedule_from_kind(a.kind, a.segment_length) : load_schedule(a.from);
  cfg.validate();
  auto const sched = build_schedule(cfg);
  Provenance prov{"schedule", {{"kind", a.kind}, {"segment_length", a.segment_length}, {"from", a.from}}};
  prov.schedule(sched);
  std::size_t gap_slots = 0;
  for (auto const &g : cfg.gaps) {
    gap_slots += g.slots;
  }
  json summary = {{"slots", sched.slots.size()},
                  {"segments", sched.segments.size()},
                  {"readouts", sched.total_readouts},
                  {"gap_slots", gap_slots},
                  {"mt_pulses", sched.mt_pulse_count()},
                  {"tr_ms", sched.tr_ms},
                  {"duration_s", sched.tr_ms * 1e-3 * static_cast<double>(sched.slots.size())},
                  {"schedule_hash", hex(sched.hash())}};
  std::cout << "slots: " << sched.slots.size() << "\nreadouts: " << sched.total_readouts
            << "\nmt_pulses: " << sched.mt_pulse_count() << "\nschedule_hash: " << hex(sched.hash()) << "\n";
  prov.set("summary", summary);
  if (!c.out.empty()) {
    write_text(c.out, dump(cfg));
    prov.write_sidecar(c.out);
  }
  prov.print();
  return ok;
}

// dict -------------------------------------------------------------------------

struct DictArgs
{
  std::string kind = "single-pool-irff";
  std::string schedule;
  std::string grid = "desk";
  std::string grid_t1, grid_t2, grid_b1;
  std::size_t grid_f = 0;
  std::string lineshape = "gaussian";
  double      t2ss_us = 12.0;
  double      k_per_s = 4.3;
  std::size_t max_order = 0;
  std::size_t profile_bins = 16;
  bool        confirm_large = false;
  bool        quiet = false;
};

constexpr std::uint64_t large_bytes = 4ull << 30;

auto run_dict(DictArgs const &a, Common const &c) -> int
{
  if (c.out.empty()) { throw UsageError("dict needs --out"); }
  DictKind const kind = dict_kind_from_string(a.kind);
  GridSpec       g;
  if (a.grid == "desk") {
    g = GridSpec::desk(kind);
  } else if (a.grid == "paper") {
    g = GridSpec::paper(kind);
  } else {
    throw UsageError("--grid must be desk or paper");
  }
  if (!a.grid_t1.empty()) {
    auto [lo, hi, n] = parse_triple(a.grid_t1, "--grid-t1");
    g.t1_ms = log_axis(lo, hi, n);
  }
  if (!a.grid_t2.empty()) {
    auto [lo, hi, n] = parse_triple(a.grid_t2, "--grid-t2");
    g.t2_ms = log_axis(lo, hi, n);
  }
  if (!a.grid_b1.empty()) {
    auto [lo, hi, n] = parse_triple(a.grid_b1, "--grid-b1");
    g.b1 = linear_axis(lo, hi, n);
  }
  if (a.grid_f) {
    if (model_of(kind) == Model::single_pool) { throw UsageError("--grid-f does not apply to single-pool dictionaries"); }
    g.f = fraction_axis(a.grid_f);
  }

  ScheduleConfig cfg = a.schedule.empty() ? ScheduleConfig::irff(uses_mt_pulses(kind)) : load_schedule(a.schedule);
  auto const     sched = build_schedule(cfg);
  if ((sched.mt_pulse_count() > 0) != uses_mt_pulses(kind)) {
    throw UsageError("schedule " + std::string{sched.mt_pulse_count() ? "has" : "lacks"} + " MT pulses but kind is " +
                     a.kind);
  }
  auto const tuples = build_grid(kind, g);
  auto const bytes = memory_estimate_bytes(tuples.size(), sched.total_readouts);
  std::cout << "entries: " << tuples.size() << " (raw grid " << g.raw_size() << ")\n"
            << "memory_estimate_gb: " << static_cast<double>(bytes) / 1e9 << "\n";
  if ((a.grid == "paper" || bytes > large_bytes) && !a.confirm_large) {
    std::cerr << "error: this dictionary needs about " << static_cast<double>(bytes) / 1e9
              << " GB; rerun with --confirm-large to proceed\n";
    return needs_confirmation;
  }

  GenerateOptions o;
  o.threads = c.threads;
  o.kind = kind;
  o.lineshape = lineshape_from_string(a.lineshape);
  o.t2ss_us = a.t2ss_us;
  o.k_per_s = a.k_per_s;
  o.sim.max_order = a.max_order;
  if (!a.quiet) {
    o.progress = [](std::size_t done, std::size_t total) {
      if (done % 1000 == 0 || done == total) { std::cerr << "\r" << done << "/" << total << std::flush; }
    };
  }
  auto const profile = compute_slice_profile(sched.excitation_waveform, 60.0, a.profile_bins);
  auto const t0 = std::chrono::steady_clock::now();
  auto const d = generate(sched, tuples, g, profile, model_of(kind), o);
  double const gen_s = elapsed_s(t0);
  if (!a.quiet) { std::cerr << "\n"; }
  save(d, c.out);

  Provenance prov{"dict",
                  {{"kind", a.kind},
                   {"schedule", a.schedule},
                   {"grid", a.grid},
                   {"grid_t1", a.grid_t1},
                   {"grid_t2", a.grid_t2},
                   {"grid_b1", a.grid_b1},
                   {"grid_f", a.grid_f},
                   {"lineshape", a.lineshape},
                   {"t2ss_us", a.t2ss_us},
                   {"k_per_s", a.k_per_s},
                   {"max_order", a.max_order},
                   {"profile_bins", a.profile_bins}}};
  prov.schedule(sched);
  prov.dictionary(d);
  prov.set("threads", resolve_threads(c.threads));
  prov.set("generation_s", gen_s);
  auto side = json::parse(metadata_json(d));
  side["provenance"] = prov.json_block();
  write_text(c.out + ".json", side.dump(2) + "\n");
  std::cout << "generation_s: " << gen_s << "\ndictionary_hash: " << hex(content_hash(d)) << "\n";
  prov.print();
  return ok;
}

// simulate ---------------------------------------------------------------------

struct SimulateArgs
{
  std::string kind = "two-pool-irff-mt";
  std::string schedule;
  double      t1 = 1000, t2 = 100, b1 = 1.0, f = 0.0;
  double      t2ss_us = 12.0, k_per_s = 4.3;
  std::string lineshape = "gaussian";
  std::size_t voxels = 1;
  std::size_t profile_bins = 16;
  std::size_t max_order = 0;
  double      snr_db = 0.0; // 0 disables noise
  std::string format;
};

auto run_simulate(SimulateArgs const &a, Common const &c) -> int
{
  if (c.out.empty()) { throw UsageError("simulate needs --out"); }
  DictKind const kind = dict_kind_from_string(a.kind);
  ScheduleConfig cfg = a.schedule.empty() ? ScheduleConfig::irff(uses_mt_pulses(kind)) : load_schedule(a.schedule);
  auto const     sched = build_schedule(cfg);
  auto const     profile = compute_slice_profile(sched.excitation_waveform, 60.0, a.profile_bins);
  TwoPoolParams  tissue{a.t1, a.t2, a.f, a.k_per_s, a.t2ss_us, lineshape_from_string(a.lineshape)};
  SimOptions     so;
  so.max_order = a.max_order;
  auto const     clean = simulate_fingerprint(sched, tissue, a.b1, profile, model_of(kind), so);

  SignalVolume v;
  v.voxels = a.voxels;
  v.length = clean.size();
  for (std::size_t i = 0; i < a.voxels; i++) {
    auto s = clean;
    if (a.snr_db > 0.0) {
      auto rng = trial_rng(c.seed, i);
      add_noise(s, a.snr_db, rng);
    }
    v.data.insert(v.data.end(), s.begin(), s.end());
    v.ids.push_back(std::to_string(i));
  }
  Provenance prov{"simulate",
                  {{"kind", a.kind}, {"t1_ms", a.t1}, {"t2_ms", a.t2}, {"b1", a.b1}, {"f", a.f}, {"t2ss_us", a.t2ss_us},
                   {"k_per_s", a.k_per_s}, {"lineshape", a.lineshape}, {"voxels", a.voxels}, {"profile_bins", a.profile_bins},
                   {"max_order", a.max_order}, {"snr_db", a.snr_db},
                   {"seed", c.seed}}};
  prov.schedule(sched);
  if (is_csv(c.out, a.format)) {
    write_volume_csv(v, c.out, prov.comment_lines());
  } else {
    write_volume_binary(v, c.out);
    prov.write_sidecar(c.out);
  }
  prov.print();
  return ok;
}

// match ------------------------------------------------------------------------

struct MatchArgs
{
  std::string dict;
  std::string in;
  std::string schedule;
  std::string mode = "complex";
  std::string format;
};

auto run_match(MatchArgs const &a, Common const &c) -> int
{
  if (a.dict.empty() || a.in.empty() || c.out.empty()) { throw UsageError("match needs --dict, --in and --out"); }
  auto const   d = load(a.dict);
  auto const   v = read_volume(a.in);
  MatchOptions o;
  o.mode = match_mode_from_string(a.mode);
  o.threads = c.threads;
  Provenance prov{"match", {{"dict", a.dict}, {"in", a.in}, {"schedule", a.schedule}, {"mode", a.mode}}};
  if (!a.schedule.empty()) {
    auto const sched = build_schedule(load_schedule(a.schedule));
    o.schedule_hash = sched.hash();
    prov.schedule(sched);
  }
  prov.dictionary(d);
  auto const t0 = std::chrono::steady_clock::now();
  auto const maps = match_volume(v, d, o);
  double const match_s = elapsed_s(t0);
  std::size_t  failed = 0;
  for (auto const &m : maps) {
    failed += !m.valid;
  }
  prov.set("voxels", v.voxels);
  prov.set("failed_voxels", failed);
  prov.set("match_s", match_s);
  if (is_csv(c.out, a.format)) {
    write_maps_csv(maps, v.ids, c.out, prov.comment_lines());
  } else {
    write_maps_binary(maps, c.out);
    prov.write_sidecar(c.out);
  }
  std::cout << "voxels: " << v.voxels << "\nfailed_voxels: " << failed << "\nmatch_s: " << match_s << "\n";
  prov.print();
  return ok;
}

// study ------------------------------------------------------------------------

struct StudyArgs
{
  std::string dict, dict_single, dict_irff, dict_irff_mt;
  double      snr_db = 30.0;
  bool        noise = false;
  std::size_t trials = 500;
  std::size_t grid_n = 32;
  std::string t2ss_range = "5,20";
  std::string k_range = "1,10";
  std::string maps, labels;
  std::string schedule_irff, schedule_irff_mt;
  double      truth_t1 = 800, truth_t2 = 60, truth_b1 = 1.0, truth_f = 0.10;
};

// Truths are simulated with the schedules given on the command line (built-in
// IRFF/IRFF-MT by default) and the slice profile and order cap the dictionary
// was generated with.
auto study_setup(StudyArgs const &a, Dictionary const &d) -> StudySetup
{
  StudySetup s;
  s.irff = build_schedule(a.schedule_irff.empty() ? ScheduleConfig::irff(false) : load_schedule(a.schedule_irff));
  s.irff_mt = build_schedule(a.schedule_irff_mt.empty() ? ScheduleConfig::irff(true) : load_schedule(a.schedule_irff_mt));
  auto const settings = json::parse(d.meta.settings.empty() ? "{}" : d.meta.settings);
  std::size_t const bins = settings.value("slice_bins", std::size_t{16});
  s.profile = compute_slice_profile(s.irff.excitation_waveform, 60.0, bins);
  s.sim.max_order = settings.value("max_order", std::size_t{0});
  return s;
}

auto read_labels(std::string const &path) -> std::vector<int>
{
  std::ifstream    in{path};
  if (!in) { throw std::runtime_error("cannot open " + path); }
  std::vector<int> out;
  std::string      line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') { continue; }
    auto const pos = line.find_last_of(',');
    auto const field = pos == std::string::npos ? line : line.substr(pos + 1);
    try {
      out.push_back(std::stoi(field));
    } catch (std::exception const &) {
      if (out.empty()) { continue; } // header
      throw std::runtime_error("bad label line: " + line);
    }
  }
  return out;
}

auto run_study(std::string const &which, StudyArgs const &a, Common const &c) -> int
{
  if (c.out.empty()) { throw UsageError("study needs --out"); }
  json cfg = {{"study", which},
              {"seed", c.seed},
              {"schedule_irff", a.schedule_irff},
              {"schedule_irff_mt", a.schedule_irff_mt}};
  StudyReport report;
  auto const  t0 = std::chrono::steady_clock::now();
  if (which == "phantom") {
    if (a.dict_single.empty() || a.dict_irff.empty() || a.dict_irff_mt.empty()) {
      throw UsageError("phantom needs --dict-single, --dict-irff and --dict-irff-mt");
    }
    auto const single = load(a.dict_single);
    auto const irff = load(a.dict_irff);
    auto const irff_mt = load(a.dict_irff_mt);
    auto const setup = study_setup(a, irff_mt);
    Sample const water{"water", TwoPoolParams{648.0, 29.0, 0.0, irff.meta.k_per_s, irff.meta.t2ss_us, irff.meta.lineshape}, 0.98};
    Sample const bsa{"bsa", TwoPoolParams{1056.0, 51.0, 0.14, irff.meta.k_per_s, irff.meta.t2ss_us, irff.meta.lineshape}, 0.98};
    std::optional<NoiseSpec> noise;
    if (a.noise) { noise = NoiseSpec{a.snr_db, c.seed}; }
    report = phantom_report(setup, water, bsa, {&single, &irff, &irff_mt}, noise).report;
    cfg["snr_db"] = a.noise ? json(a.snr_db) : json(nullptr);
  } else if (which == "sensitivity") {
    if (a.dict.empty()) { throw UsageError("sensitivity needs --dict"); }
    auto const        d = load(a.dict);
    SensitivityConfig sc;
    sc.n_t2ss = sc.n_k = a.grid_n;
    std::tie(sc.t2ss_lo_us, sc.t2ss_hi_us) = parse_pair(a.t2ss_range, "--t2ss-range");
    std::tie(sc.k_lo, sc.k_hi) = parse_pair(a.k_range, "--k-range");
    sc.truth = {"truth", TwoPoolParams{a.truth_t1, a.truth_t2, a.truth_f, d.meta.k_per_s, d.meta.t2ss_us, d.meta.lineshape},
                a.truth_b1};
    sc.threads = c.threads;
    report = sensitivity_grid(study_setup(a, d), sc, d).report;
    cfg.update({{"grid", a.grid_n}, {"t2ss_range", a.t2ss_range}, {"k_range", a.k_range}});
  } else if (which == "separation") {
    if (a.dict_irff.empty() || a.dict_irff_mt.empty()) { throw UsageError("separation needs --dict-irff and --dict-irff-mt"); }
    auto const       irff = load(a.dict_irff);
    auto const       irff_mt = load(a.dict_irff_mt);
    SeparationConfig sc{a.trials, a.snr_db, c.seed, c.threads};
    report = separation_study(study_setup(a, irff_mt), sc, irff, irff_mt).report;
    cfg.update({{"trials", a.trials}, {"snr_db", a.snr_db}});
  } else if (which == "roi") {
    if (a.maps.empty() || a.labels.empty()) { throw UsageError("roi needs --maps and --labels"); }
    auto const maps = read_maps(a.maps);
    auto const labels = read_labels(a.labels);
    report = roi_report(maps, labels);
    cfg.update({{"maps", a.maps}, {"labels", a.labels}});
  } else {
    throw UsageError("unknown study: " + which);
  }
  Provenance prov{"study", cfg};
  prov.set("study", report.provenance);
  prov.set("elapsed_s", elapsed_s(t0));
  report.provenance = prov.json_block();
  write_csv(report, c.out);
  for (auto const &[k, v] : report.summary) {
    std::cout << k << ": " << v << "\n";
  }
  prov.print();
  return ok;
}

void add_common(CLI::App *sub, Common &c, bool seed)
{
  sub->add_option("--out", c.out, "Output path");
  sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
  if (seed) { sub->add_option("--seed", c.seed, "Random seed"); }
}

void report_error(char const *kind, std::string const &message)
{
  std::cerr << json{{"error", message}, {"kind", kind}}.dump() << "\n";
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"MR fingerprinting simulation, dictionary and matching tool"};
  app.set_version_flag("--version", MRF_VERSION);
  app.set_config("--config", "", "TOML/INI configuration file; command-line flags take precedence");
  app.require_subcommand(1);
  Common common;

  ScheduleArgs sa;
  auto        *sched = app.add_subcommand("schedule", "Write an IRFF or IRFF-MT schedule document");
  sched->add_option("--kind", sa.kind, "irff | irff-mt")->check(CLI::IsMember({"irff", "irff-mt"}));
  sched->add_option("--segment-length", sa.segment_length, "Pulses per segment");
  sched->add_option("--schedule", sa.from, "Re-emit an existing schedule document")->check(CLI::ExistingFile);
  add_common(sched, common, false);

  DictArgs da;
  auto    *dict = app.add_subcommand("dict", "Generate a dictionary");
  dict->add_option("--kind", da.kind, "single-pool-irff | two-pool-irff | two-pool-irff-mt")
    ->check(CLI::IsMember({"single-pool-irff", "two-pool-irff", "two-pool-irff-mt"}));
  dict->add_option("--schedule", da.schedule, "Schedule document (default: built-in IRFF/IRFF-MT)")->check(CLI::ExistingFile);
  dict->add_option("--grid", da.grid, "desk | paper")->check(CLI::IsMember({"desk", "paper"}));
  dict->add_option("--grid-t1", da.grid_t1, "T1 axis lo,hi,n in ms (log spaced)");
  dict->add_option("--grid-t2", da.grid_t2, "T2 axis lo,hi,n in ms (log spaced)");
  dict->add_option("--grid-b1", da.grid_b1, "B1 axis lo,hi,n (linear)");
  dict->add_option("--grid-f", da.grid_f, "Number of F values ({0} plus log spaced 0.5%..30%)");
  dict->add_option("--lineshape", da.lineshape, "gaussian | super_lorentzian")
    ->check(CLI::IsMember({"gaussian", "super_lorentzian"}));
  dict->add_option("--t2ss-us", da.t2ss_us, "Semi-solid T2 in microseconds");
  dict->add_option("--k", da.k_per_s, "Exchange rate in 1/s");
  dict->add_option("--max-order", da.max_order, "EPG order cap (0 = automatic)");
  dict->add_option("--profile-bins", da.profile_bins, "Slice-profile bins");
  dict->add_flag("--confirm-large", da.confirm_large, "Allow dictionaries above the memory guard");
  dict->add_flag("--quiet", da.quiet, "No progress output");
  add_common(dict, common, false);

  SimulateArgs ma_sim;
  auto        *sim = app.add_subcommand("simulate", "Simulate fingerprints for one tissue into a signal volume");
  sim->add_option("--kind", ma_sim.kind, "Dictionary kind whose schedule and model to use")
    ->check(CLI::IsMember({"single-pool-irff", "two-pool-irff", "two-pool-irff-mt"}));
  sim->add_option("--schedule", ma_sim.schedule, "Schedule document")->check(CLI::ExistingFile);
  sim->add_option("--t1", ma_sim.t1, "T1 in ms");
  sim->add_option("--t2", ma_sim.t2, "T2 in ms");
  sim->add_option("--b1", ma_sim.b1, "B1 scale");
  sim->add_option("--f", ma_sim.f, "Semi-solid fraction");
  sim->add_option("--t2ss-us", ma_sim.t2ss_us, "Semi-solid T2 in microseconds");
  sim->add_option("--k", ma_sim.k_per_s, "Exchange rate in 1/s");
  sim->add_option("--lineshape", ma_sim.lineshape, "gaussian | super_lorentzian");
  sim->add_option("--voxels", ma_sim.voxels, "Number of voxels (independent noise)");
  sim->add_option("--profile-bins", ma_sim.profile_bins, "Slice-profile bins");
  sim->add_option("--max-order", ma_sim.max_order, "EPG order cap (0 = automatic)");
  sim->add_option("--snr", ma_sim.snr_db, "Time-series SNR in dB (0 = noiseless)");
  sim->add_option("--format", ma_sim.format, "csv | binary (default: by extension)");
  add_common(sim, common, true);

  MatchArgs mm;
  auto     *match = app.add_subcommand("match", "Match a signal volume against a dictionary");
  match->add_option("--dict", mm.dict, "Dictionary file")->check(CLI::ExistingFile);
  match->add_option("--in", mm.in, "Signal volume (CSV or binary)")->check(CLI::ExistingFile);
  match->add_option("--schedule", mm.schedule, "Schedule the signals were acquired with")->check(CLI::ExistingFile);
  match->add_option("--mode", mm.mode, "complex | magnitude")->check(CLI::IsMember({"complex", "magnitude"}));
  match->add_option("--format", mm.format, "csv | binary (default: by extension)");
  add_common(match, common, false);

  StudyArgs   st;
  std::string which;
  auto       *study = app.add_subcommand("study", "Run an analysis study");
  study->add_option("study", which, "phantom | sensitivity | separation | roi")->required();
  study->add_option("--dict", st.dict, "Two-pool IRFF-MT dictionary (sensitivity)");
  study->add_option("--dict-single", st.dict_single, "Single-pool IRFF dictionary");
  study->add_option("--dict-irff", st.dict_irff, "Two-pool IRFF dictionary");
  study->add_option("--dict-irff-mt", st.dict_irff_mt, "Two-pool IRFF-MT dictionary");
  study->add_option("--snr", st.snr_db, "Time-series SNR in dB");
  study->add_flag("--noise", st.noise, "Add noise in the phantom study");
  study->add_option("--trials", st.trials, "Separation trials");
  study->add_option("--grid-size", st.grid_n, "Sensitivity grid points per axis");
  study->add_option("--t2ss-range", st.t2ss_range, "Sensitivity T2ss range lo,hi in us");
  study->add_option("--k-range", st.k_range, "Sensitivity k range lo,hi in 1/s");
  study->add_option("--truth-t1", st.truth_t1, "Sensitivity truth T1 in ms");
  study->add_option("--truth-t2", st.truth_t2, "Sensitivity truth T2 in ms");
  study->add_option("--truth-b1", st.truth_b1, "Sensitivity truth B1");
  study->add_option("--truth-f", st.truth_f, "Sensitivity truth F");
  study->add_option("--maps", st.maps, "Maps written by `mrf match` (roi)");
  study->add_option("--labels", st.labels, "Label per voxel, one per line (roi)");
  study->add_option("--schedule-irff", st.schedule_irff, "IRFF schedule document (default: built-in)")
    ->check(CLI::ExistingFile);
  study->add_option("--schedule-irff-mt", st.schedule_irff_mt, "IRFF-MT schedule document (default: built-in)")
    ->check(CLI::ExistingFile);
  add_common(study, common, true);

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const &e) {
    return app.exit(e) == 0 ? ok : usage;
  }

  try {
    if (*sched) { return run_schedule(sa, common); }
    if (*dict) { return run_dict(da, common); }
    if (*sim) { return run_simulate(ma_sim, common); }
    if (*match) { return run_match(mm, common); }
    if (*study) { return run_study(which, st, common); }
  } catch (UsageError const &e) {
    report_error("usage", e.what());
    return usage;
  } catch (FormatError const &e) {
    report_error("format", e.what());
    return failure;
  } catch (std::invalid_argument const &e) {
    report_error("invalid_argument", e.what());
    return failure;
  } catch (std::exception const &e) {
    report_error("runtime", e.what());
    return failure;
  }
  return usage;
}
