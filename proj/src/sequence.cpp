#include "mrf/sequence.hpp"

#include "mrf/checksum.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numbers>
#include <numeric>
#include <tuple>
#include <set>
#include <stdexcept>

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace mrf {

using nlohmann::json;

namespace {

constexpr double deg = std::numbers::pi / 180.0;

void check(bool ok, std::string const &msg)
{
  if (!ok) { throw std::invalid_argument("schedule: " + msg); }
}

} // namespace

auto to_string(Waveform w) -> std::string
{
  switch (w) {
  case Waveform::hard: return "hard";
  case Waveform::gaussian: return "gaussian";
  case Waveform::windowed_sinc: return "windowed_sinc";
  }
  return "?";
}

auto waveform_from_string(std::string const &s) -> Waveform
{
  if (s == "hard") { return Waveform::hard; }
  if (s == "gaussian") { return Waveform::gaussian; }
  if (s == "windowed_sinc") { return Waveform::windowed_sinc; }
  throw std::invalid_argument("unsupported waveform: " + s);
}

auto sample_waveform(Waveform w, std::size_t n) -> std::vector<double>
{
  std::vector<double> b(n);
  for (std::size_t i = 0; i < n; i++) {
    double const t = (static_cast<double>(i) + 0.5) / static_cast<double>(n) - 0.5; // [-0.5, 0.5]
    switch (w) {
    case Waveform::hard: b[i] = 1.0; break;
    case Waveform::gaussian: {
      double const sigma = 1.0 / 6.0;
      b[i] = std::exp(-0.5 * t * t / (sigma * sigma));
    } break;
    case Waveform::windowed_sinc: {
      double const x = 4.0 * t; // two zero crossings either side
      double const sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      double const hamming = 0.54 + 0.46 * std::cos(2.0 * std::numbers::pi * t);
      b[i] = sinc * hamming;
    } break;
    }
  }
  return b;
}

auto waveform_bandwidth_hz(Waveform w, double duration_ms) -> double
{
  double const tau = duration_ms * 1e-3;
  switch (w) {
  case Waveform::hard: return 1.0 / tau;
  case Waveform::gaussian: return 2.0 * std::sqrt(2.0 * std::log(2.0)) / (2.0 * std::numbers::pi * tau / 6.0);
  case Waveform::windowed_sinc: return 4.0 / tau;
  }
  return 1.0 / tau;
}

// ---------------------------------------------------------------------------

auto SegmentConfig::flips() const -> std::vector<double>
{
  if (flips_deg) { return *flips_deg; }
  if (!generator) { throw std::invalid_argument("schedule: segment needs flips_deg or generator"); }
  auto const         &g = *generator;
  std::vector<double> f(g.count);
  for (std::size_t i = 0; i < g.count; i++) {
    if (g.shape == "half_sine") {
      f[i] = g.max_deg * std::sin(std::numbers::pi * static_cast<double>(i + 1) / static_cast<double>(g.count + 1));
    } else if (g.shape == "constant") {
      f[i] = g.max_deg;
    } else {
      throw std::invalid_argument("schedule: unknown generator shape " + g.shape);
    }
  }
  return f;
}

auto ScheduleConfig::irff(bool with_mt_pulses, std::size_t segment_length) -> ScheduleConfig
{
  ScheduleConfig c;
  double const   maxima[4] = {30.0, 60.0, 30.0, 60.0};
  for (int i = 0; i < 4; i++) {
    SegmentConfig s;
    s.type = i < 2 ? SegmentType::fisp : SegmentType::flash;
    s.generator = FlipGenerator{"half_sine", maxima[i], segment_length};
    s.phase_increment_deg = i < 2 ? 0.0 : 50.0;
    c.segments.push_back(s);
  }
  for (int i = 0; i < 3; i++) {
    GapConfig g;
    g.slots = 50;
    if (with_mt_pulses && i < 2) { g.mt_pulse = MtPulseConfig{}; }
    c.gaps.push_back(g);
  }
  return c;
}

void ScheduleConfig::validate() const
{
  check(std::isfinite(tr_ms) && tr_ms > 0.0, "tr_ms must be positive");
  check(inversion_duration_ms > 0.0, "inversion duration must be positive");
  check(inversion_efficiency >= 0.0 && inversion_efficiency <= 1.0, "inversion efficiency outside [0, 1]");
  check(excitation_duration_ms > 0.0 && excitation_duration_ms <= tr_ms, "excitation duration must be in (0, TR]");
  check(!segments.empty(), "at least one segment required");
  check(gaps.size() + 1 == segments.size(), "need exactly one gap between consecutive segments");
  for (auto const &s : segments) {
    check(s.flips_deg.has_value() != s.generator.has_value(), "segment needs exactly one of flips_deg or generator");
    if (s.generator) {
      check(s.generator->count >= 1, "segment length must be >= 1");
      check(s.generator->max_deg > 0.0 && s.generator->max_deg <= 90.0, "maximum flip must be in (0, 90]");
    }
    auto const f = s.flips();
    check(!f.empty(), "segment length must be >= 1");
    for (double a : f) {
      check(std::isfinite(a) && a >= 0.0 && a <= 90.0, "flip angles must be in [0, 90]");
    }
    check(std::isfinite(s.phase_increment_deg), "phase increment must be finite");
  }
  for (auto const &g : gaps) {
    if (g.mt_pulse) {
      check(g.mt_pulse->offset_hz != 0.0, "MT pulses must be off resonance");
      check(g.mt_pulse->duration_ms > 0.0 && g.mt_pulse->duration_ms <= tr_ms, "MT pulse duration must be in (0, TR]");
      check(g.mt_pulse->flip_deg >= 0.0, "MT flip must be >= 0");
    }
  }
}

namespace {

void reject_unknown(json const &j, std::set<std::string> const &allowed, std::string const &where)
{
  if (!j.is_object()) { throw std::invalid_argument("schedule: " + where + " must be an object"); }
  for (auto const &[k, v] : j.items()) {
    if (!allowed.contains(k)) { throw std::invalid_argument("schedule: unknown field '" + k + "' in " + where); }
  }
}

auto segment_type_string(SegmentType t) -> std::string { return t == SegmentType::fisp ? "fisp" : "flash"; }

} // namespace

auto to_json(ScheduleConfig const &c) -> json
{
  json j;
  j["tr_ms"] = c.tr_ms;
  j["inversion"] = {{"duration_ms", c.inversion_duration_ms}, {"efficiency", c.inversion_efficiency}};
  j["excitation"] = {{"waveform", to_string(c.excitation_waveform)}, {"duration_ms", c.excitation_duration_ms}};
  j["segments"] = json::array();
  for (auto const &s : c.segments) {
    json js;
    js["type"] = segment_type_string(s.type);
    if (s.flips_deg) { js["flips_deg"] = *s.flips_deg; }
    if (s.generator) {
      js["generator"] = {{"shape", s.generator->shape}, {"max_deg", s.generator->max_deg}, {"count", s.generator->count}};
    }
    js["phase_increment_deg"] = s.phase_increment_deg;
    j["segments"].push_back(js);
  }
  j["gaps"] = json::array();
  for (auto const &g : c.gaps) {
    json jg;
    jg["slots"] = g.slots;
    if (g.mt_pulse) {
      jg["mt_pulse"] = {{"flip_deg", g.mt_pulse->flip_deg},
                        {"duration_ms", g.mt_pulse->duration_ms},
                        {"offset_hz", g.mt_pulse->offset_hz},
                        {"waveform", to_string(g.mt_pulse->waveform)}};
    } else {
      jg["mt_pulse"] = nullptr;
    }
    j["gaps"].push_back(jg);
  }
  return j;
}

auto schedule_config_from_json(json const &j) -> ScheduleConfig
{
  reject_unknown(j, {"tr_ms", "inversion", "segments", "gaps", "excitation"}, "document");
  ScheduleConfig c;
  c.segments.clear();
  c.gaps.clear();
  c.tr_ms = j.at("tr_ms").get<double>();
  if (j.contains("inversion")) {
    auto const &ji = j.at("inversion");
    reject_unknown(ji, {"duration_ms", "efficiency"}, "inversion");
    c.inversion_duration_ms = ji.value("duration_ms", c.inversion_duration_ms);
    c.inversion_efficiency = ji.value("efficiency", c.inversion_efficiency);
  }
  if (j.contains("excitation")) {
    auto const &je = j.at("excitation");
    reject_unknown(je, {"waveform", "duration_ms"}, "excitation");
    if (je.contains("waveform")) { c.excitation_waveform = waveform_from_string(je.at("waveform").get<std::string>()); }
    c.excitation_duration_ms = je.value("duration_ms", c.excitation_duration_ms);
  }
  for (auto const &js : j.at("segments")) {
    reject_unknown(js, {"type", "flips_deg", "generator", "phase_increment_deg"}, "segment");
    SegmentConfig s;
    auto const    type = js.at("type").get<std::string>();
    if (type == "fisp") {
      s.type = SegmentType::fisp;
    } else if (type == "flash") {
      s.type = SegmentType::flash;
    } else {
      throw std::invalid_argument("schedule: unknown segment type " + type);
    }
    if (js.contains("flips_deg")) { s.flips_deg = js.at("flips_deg").get<std::vector<double>>(); }
    if (js.contains("generator")) {
      auto const &jg = js.at("generator");
      reject_unknown(jg, {"shape", "max_deg", "count"}, "generator");
      s.generator = FlipGenerator{jg.value("shape", std::string{"half_sine"}), jg.at("max_deg").get<double>(),
                                  jg.at("count").get<std::size_t>()};
    }
    s.phase_increment_deg = js.value("phase_increment_deg", s.type == SegmentType::flash ? 50.0 : 0.0);
    c.segments.push_back(std::move(s));
  }
  for (auto const &jg : j.at("gaps")) {
    reject_unknown(jg, {"slots", "mt_pulse"}, "gap");
    GapConfig g;
    g.slots = jg.at("slots").get<std::size_t>();
    if (jg.contains("mt_pulse") && !jg.at("mt_pulse").is_null()) {
      auto const &jm = jg.at("mt_pulse");
      reject_unknown(jm, {"flip_deg", "duration_ms", "offset_hz", "waveform"}, "mt_pulse");
      MtPulseConfig m;
      m.flip_deg = jm.value("flip_deg", m.flip_deg);
      m.duration_ms = jm.value("duration_ms", m.duration_ms);
      m.offset_hz = jm.value("offset_hz", m.offset_hz);
      if (jm.contains("waveform")) { m.waveform = waveform_from_string(jm.at("waveform").get<std::string>()); }
      g.mt_pulse = m;
    }
    c.gaps.push_back(g);
  }
  c.validate();
  return c;
}

auto dump(ScheduleConfig const &c) -> std::string { return to_json(c).dump(2) + "\n"; }

// ---------------------------------------------------------------------------

auto rf_spoil_phase(std::size_t n, double increment_deg) -> double
{
  double const raw = increment_deg * static_cast<double>(n) * static_cast<double>(n + 1) / 2.0;
  double       r = std::fmod(raw, 360.0);
  if (r < 0.0) { r += 360.0; }
  return r;
}

auto build_schedule(ScheduleConfig const &config) -> Schedule
{
  config.validate();
  Schedule s;
  s.tr_ms = config.tr_ms;
  s.inversion = InversionSpec{config.inversion_efficiency, config.inversion_duration_ms, std::numbers::pi};
  s.excitation_waveform = config.excitation_waveform;
  s.excitation_duration_ms = config.excitation_duration_ms;

  PulseEvent inv;
  inv.kind = PulseKind::inversion;
  inv.flip_deg = 180.0;
  inv.duration_ms = config.inversion_duration_ms;
  inv.waveform = Waveform::hard;
  s.slots.push_back(Slot{inv, 0});

  for (std::size_t is = 0; is < config.segments.size(); is++) {
    auto const &seg = config.segments[is];
    auto const  flips = seg.flips();
    s.segments.push_back(SegmentRange{seg.type, s.slots.size(), flips.size()});
    for (std::size_t n = 0; n < flips.size(); n++) {
      PulseEvent p;
      p.kind = PulseKind::excitation;
      p.flip_deg = flips[n];
      p.phase_deg = rf_spoil_phase(n, seg.phase_increment_deg);
      p.duration_ms = config.excitation_duration_ms;
      p.offset_hz = 0.0;
      p.waveform = config.excitation_waveform;
      p.readout = true;
      p.demod_phase_deg = p.phase_deg;
      s.slots.push_back(Slot{p, 1});
      s.total_readouts++;
    }
    if (is < config.gaps.size()) {
      auto const &gap = config.gaps[is];
      for (std::size_t g = 0; g < gap.slots; g++) {
        Slot slot;
        if (gap.mt_pulse) {
          PulseEvent p;
          p.kind = PulseKind::mt_offres;
          p.flip_deg = gap.mt_pulse->flip_deg;
          p.duration_ms = gap.mt_pulse->duration_ms;
          p.offset_hz = gap.mt_pulse->offset_hz;
          p.waveform = gap.mt_pulse->waveform;
          slot.pulse = p;
        }
        s.slots.push_back(slot);
      }
    }
  }
  return s;
}

auto build_irff(ScheduleConfig config, bool with_mt_pulses) -> Schedule
{
  for (std::size_t i = 0; i < config.gaps.size(); i++) {
    if (with_mt_pulses && i < 2) {
      config.gaps[i].slots = 50;
      config.gaps[i].mt_pulse = MtPulseConfig{};
    } else {
      config.gaps[i].mt_pulse.reset();
    }
  }
  return build_schedule(config);
}

auto Schedule::mt_pulse_count() const -> std::size_t
{
  return static_cast<std::size_t>(std::count_if(slots.begin(), slots.end(), [](Slot const &s) {
    return s.pulse && s.pulse->kind == PulseKind::mt_offres;
  }));
}

auto Schedule::longest_segment() const -> std::size_t
{
  std::size_t n = 0;
  for (auto const &s : segments) {
    n = std::max(n, s.count);
  }
  return n;
}

namespace {

struct Writer
{
  std::vector<std::uint8_t> bytes;

  template <typename T> void put(T v)
  {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    bytes.insert(bytes.end(), buf, buf + sizeof(T));
  }
};

} // namespace

auto Schedule::serialize() const -> std::vector<std::uint8_t>
{
  Writer w;
  w.put(tr_ms);
  w.put(inversion.efficiency);
  w.put(inversion.duration_ms);
  w.put(inversion.equivalent_flip_rad);
  w.put(static_cast<std::uint8_t>(excitation_waveform));
  w.put(excitation_duration_ms);
  w.put(static_cast<std::uint64_t>(slots.size()));
  for (auto const &s : slots) {
    w.put(static_cast<std::int32_t>(s.shift));
    w.put(static_cast<std::uint8_t>(s.pulse.has_value()));
    if (s.pulse) {
      auto const &p = *s.pulse;
      w.put(static_cast<std::uint8_t>(p.kind));
      w.put(p.flip_deg);
      w.put(p.phase_deg);
      w.put(p.duration_ms);
      w.put(p.offset_hz);
      w.put(static_cast<std::uint8_t>(p.waveform));
      w.put(static_cast<std::uint8_t>(p.readout));
      w.put(p.demod_phase_deg);
    }
  }
  return w.bytes;
}

auto Schedule::hash() const -> std::uint64_t { return crc64(serialize()); }

// ---------------------------------------------------------------------------

auto compute_slice_profile(Waveform w, double nominal_flip_deg, std::size_t n_bins) -> SliceProfile
{
  if (!(nominal_flip_deg > 0.0 && nominal_flip_deg < 180.0)) {
    throw std::invalid_argument("slice profile: nominal flip must be in (0, 180)");
  }
  if (n_bins == 0) { throw std::invalid_argument("slice profile: need at least one bin"); }
  SliceProfile profile;
  double const weight = 1.0 / static_cast<double>(n_bins);
  if (w == Waveform::hard) {
    profile.bins.assign(n_bins, SliceBin{Cx{1.0, 0.0}, weight});
    return profile;
  }

  // Work in units of the pulse duration (τ = 1); offsets scale with 1/τ.
  constexpr std::size_t steps = 512;
  auto const            b = sample_waveform(w, steps);
  double const          alpha = nominal_flip_deg * deg;
  double const          area = std::accumulate(b.begin(), b.end(), 0.0) / steps;
  double const          dt = 1.0 / steps;
  double const          bw = waveform_bandwidth_hz(w, 1e3); // cycles per τ

  for (std::size_t j = 0; j < n_bins; j++) {
    double const offset = (static_cast<double>(j) + 0.5) / static_cast<double>(n_bins) * bw;
    double const dw = 2.0 * std::numbers::pi * offset;
    double       mx = 0.0, my = 0.0, mz = 1.0;
    for (std::size_t i = 0; i < steps; i++) {
      // rotation about (w1, 0, dw), right-handed
      double const w1 = alpha * b[i] / area;
      double const mag = std::hypot(w1, dw);
      if (mag == 0.0) { continue; }
      double const ux = w1 / mag, uz = dw / mag;
      double const th = mag * dt;
      double const c = std::cos(th), s = std::sin(th);
      double const dot = ux * mx + uz * mz;
      double const cx = -uz * my;          // (u × m).x = uy mz - uz my
      double const cy = uz * mx - ux * mz; // (u × m).y = uz mx - ux mz
      double const cz = ux * my;           // (u × m).z = ux my - uy mx
      double const nx = mx * c + cx * s + ux * dot * (1 - c);
      double const ny = my * c + cy * s;
      double const nz = mz * c + cz * s + uz * dot * (1 - c);
      mx = nx;
      my = ny;
      mz = nz;
    }
    // slice-select rephasing: undo half the pulse's precession
    Cx const     mxy = Cx{mx, my} * std::polar(1.0, -dw * 0.5);
    double const flip = std::atan2(std::abs(mxy), mz);
    double const phase = std::arg(mxy * Cx{0.0, 1.0}); // relative to -i at the centre
    profile.bins.push_back(SliceBin{std::polar(flip / alpha, phase), weight});
  }
  return profile;
}

auto to_string(Model m) -> std::string { return m == Model::single_pool ? "single_pool" : "two_pool"; }

auto model_from_string(std::string const &s) -> Model
{
  if (s == "single_pool" || s == "single") { return Model::single_pool; }
  if (s == "two_pool" || s == "two") { return Model::two_pool; }
  throw std::invalid_argument("unknown model: " + s);
}

auto default_max_order(Schedule const &s) -> std::size_t
{
  return std::clamp<std::size_t>(s.longest_segment(), 1, 256);
}

namespace {

// Deep dephasing orders decay into the subnormal range, where arithmetic is
// two orders of magnitude slower. Flush them to zero while simulating.
class FlushSubnormals
{
public:
#if defined(__SSE2__)
  FlushSubnormals()
    : saved_{_mm_getcsr()}
  {
    _mm_setcsr(saved_ | 0x8040); // FTZ | DAZ
  }
  ~FlushSubnormals() { _mm_setcsr(saved_); }

private:
  unsigned saved_;
#endif
};

struct SlotPlan
{
  enum Kind : std::uint8_t
  {
    inversion,
    excitation,
    gap,
    gap_mt
  } kind;
  double flip_rad;  // b1-scaled
  double phase_rad;
  double demod_rad;
  double wt;        // bound-pool saturation
  int    shift;
  bool   readout;
};

} // namespace

auto simulate_fingerprint(Schedule const &schedule,
                          TwoPoolParams const &tissue,
                          double b1_scale,
                          SliceProfile const &profile,
                          Model model,
                          SimOptions const &opts) -> std::vector<Cx>
{
  if (!(b1_scale >= 0.5 && b1_scale <= 1.5)) { throw std::invalid_argument("B1 scale outside [0.5, 1.5]"); }
  if (profile.bins.empty()) { throw std::invalid_argument("empty slice profile"); }
  bool const two_pool = model == Model::two_pool;
  if (two_pool) {
    validate(tissue);
  } else {
    validate(tissue.relaxation());
  }

  std::size_t const max_order = opts.max_order ? opts.max_order : default_max_order(schedule);
  FlushSubnormals   ftz;

  // Per-slot plan shared by all bins.
  std::vector<SlotPlan> plan;
  plan.reserve(schedule.slots.size());
  double const          g0 = two_pool ? absorption_lineshape(tissue.t2ss_us, 0.0, tissue.lineshape) : 0.0;
  double const          exc_power =
    two_pool ? waveform_power_factor(sample_waveform(schedule.excitation_waveform), schedule.excitation_duration_ms) : 0.0;
  std::map<std::tuple<double, double, int>, double> mt_cache; // (offset, duration, waveform) -> π G P
  double inversion_wt = two_pool ? inversion_saturation(schedule.inversion, tissue, b1_scale).wt : 0.0;

  for (auto const &slot : schedule.slots) {
    SlotPlan p{SlotPlan::gap, 0.0, 0.0, 0.0, 0.0, slot.shift, false};
    if (slot.pulse) {
      auto const &e = *slot.pulse;
      double const flip = b1_scale * e.flip_deg * deg;
      switch (e.kind) {
      case PulseKind::inversion:
        p.kind = SlotPlan::inversion;
        p.wt = inversion_wt;
        break;
      case PulseKind::excitation:
        p.kind = SlotPlan::excitation;
        p.flip_rad = flip;
        p.phase_rad = e.phase_deg * deg;
        p.demod_rad = e.demod_phase_deg * deg;
        p.readout = e.readout;
        p.wt = two_pool ? std::numbers::pi * g0 * flip * flip * exc_power : 0.0;
        break;
      case PulseKind::mt_offres:
        p.kind = SlotPlan::gap_mt;
        if (two_pool) {
          auto const key = std::make_tuple(e.offset_hz, e.duration_ms, static_cast<int>(e.waveform));
          auto       it = mt_cache.find(key);
          if (it == mt_cache.end()) {
            double const g = absorption_lineshape(tissue.t2ss_us, e.offset_hz, tissue.lineshape);
            double const pw = waveform_power_factor(sample_waveform(e.waveform), e.duration_ms);
            it = mt_cache.emplace(key, std::numbers::pi * g * pw).first;
          }
          p.wt = it->second * flip * flip;
        }
        break;
      }
    }
    plan.push_back(p);
  }

  RelaxFactors const    relax_tr{schedule.tr_ms, tissue.relaxation()};
  ExchangeFactors const exchange_tr{schedule.tr_ms, tissue};
  double const          efficiency = schedule.inversion.efficiency;

  std::vector<Cx> out(schedule.total_readouts);
  for (auto const &bin : profile.bins) {
    double const scale = std::abs(bin.scale);
    double const extra_phase = std::arg(bin.scale);

    TwoPoolSpinConfiguration s{max_order, two_pool ? tissue.f_frac : 0.0};
    std::size_t              r = 0;
    for (auto const &p : plan) {
      switch (p.kind) {
      case SlotPlan::inversion:
        apply_inversion_inplace(s, efficiency, SaturationSpec{p.wt});
        break;
      case SlotPlan::excitation:
        rf_rotate_inplace(s.free, RfMatrix{p.flip_rad * scale, p.phase_rad + extra_phase});
        if (two_pool) { saturate_bound_inplace(s, p.wt); }
        if (p.readout) { out[r++] += bin.weight * readout_signal(s.free, p.demod_rad); }
        break;
      case SlotPlan::gap:
      case SlotPlan::gap_mt: break;
      }
      if (two_pool) {
        relax_exchange_inplace(s, exchange_tr);
      } else {
        relax_inplace(s.free, relax_tr, 1.0);
      }
      if (p.kind == SlotPlan::gap_mt && two_pool) { saturate_bound_inplace(s, p.wt); }
      // the bound pool has no transverse states and is not shifted
      if (p.shift) { grad_shift_inplace(s.free, p.shift); }
      if (opts.prune_tol > 0.0 && !two_pool) { prune_inplace(s.free, relax_tr.e2, opts.prune_tol); }
    }
  }
  return out;
}

} // namespace mrf
