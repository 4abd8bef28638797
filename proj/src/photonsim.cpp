#include "hbt/photonsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include <boost/random/exponential_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "hbt/errors.hpp"

namespace hbt {

namespace {

constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

double uniform01(Engine& engine) { return boost::random::uniform_01<double>{}(engine); }

double standard_normal(Engine& engine) {
  return boost::random::normal_distribution<double>{}(engine);
}

Tick ticks_or_throw(Seconds t, const char* what) {
  if (t.value() < 0.0) {
    throw ConfigError(std::string(what) + " must be non-negative");
  }
  return to_ticks(t);
}

void check_fraction(double f, const char* what) {
  if (!(f >= 0.0 && f <= 1.0)) {
    throw ConfigError(std::string(what) + " must lie in [0, 1], got " + std::to_string(f));
  }
}

}  // namespace

Engine make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Engine(seq);
}

// --- configuration ---------------------------------------------------------

DetectorSpec DetectorSpec::silicon_apd() {
  DetectorSpec d;
  d.efficiency = 0.5;
  d.jitter_fwhm = picoseconds(40.0);
  d.dead_time = nanoseconds(50.0);
  d.dark_rate = per_second(100.0);
  d.saturation_rate = per_second(1e7);
  return d;
}

void DetectorSpec::validate() const {
  check_fraction(efficiency, "detector efficiency");
  if (!(jitter_fwhm.value() >= 0.0) || !(dead_time.value() >= 0.0) ||
      !(dark_rate.value() >= 0.0) || !(saturation_rate.value() >= 0.0)) {
    throw ConfigError("detector jitter, dead time, dark rate and saturation rate must be non-negative");
  }
}

Seconds ScenarioConfig::effective_field_step() const {
  if (field_step.value() > 0.0) {
    return field_step;
  }
  return source.coherence_time / 100.0;
}

void ScenarioConfig::validate() const {
  source.validate();
  if (!(source.coherence_time.value() > 0.0)) {
    throw ConfigError("coherence time must be positive");
  }
  check_fraction(split_ref, "split_ref");
  check_fraction(split_probe, "split_probe");
  check_fraction(probe_round_trip_transmission, "probe_round_trip_transmission");
  if (split_ref + split_probe > 1.0 + 1e-12) {
    throw ConfigError("split_ref + split_probe must not exceed 1");
  }
  if (!(distance.value() >= 0.0)) {
    throw ConfigError("target distance must be non-negative");
  }
  if (!(medium.refractive_index >= 1.0)) {
    throw ConfigError("refractive index must be >= 1");
  }
  if (!(ambient_rate_probe.value() >= 0.0) || !(ambient_rate_ref.value() >= 0.0)) {
    throw ConfigError("ambient rates must be non-negative");
  }
  if (!(duration.value() >= 0.0)) {
    throw ConfigError("duration must be non-negative");
  }
  if (field_step.value() < 0.0) {
    throw ConfigError("field step must be non-negative");
  }
  if (effective_field_step() > source.coherence_time / 50.0) {
    throw ConfigError("field step must not exceed coherence_time / 50");
  }
  detector_ref.validate();
  detector_probe.validate();

  const double rate = source.photon_rate.value();
  const double incident_ref =
      rate * split_ref * detector_ref.efficiency + ambient_rate_ref.value() + detector_ref.dark_rate.value();
  const double incident_probe = rate * split_probe * probe_round_trip_transmission * detector_probe.efficiency +
                                ambient_rate_probe.value() + detector_probe.dark_rate.value();
  if (incident_ref > detector_ref.saturation_rate.value()) {
    throw ConfigError("reference detector saturated: incident rate " + std::to_string(incident_ref) +
                      " /s exceeds " + std::to_string(detector_ref.saturation_rate.value()) + " /s");
  }
  if (incident_probe > detector_probe.saturation_rate.value()) {
    throw ConfigError("probe detector saturated: incident rate " + std::to_string(incident_probe) +
                      " /s exceeds " + std::to_string(detector_probe.saturation_rate.value()) + " /s");
  }
  // Ensures the delayed probe window stays representable.
  (void)(to_ticks(duration) + to_ticks(delay_from_range(distance, medium)));
}

// --- thermal field -----------------------------------------------------------

ThermalField::ThermalField(Seconds coherence_time, Seconds step, Engine& engine)
    : engine_(&engine), ratio_(step / coherence_time) {
  constexpr double kTabulatedLag = 40.0;
  constexpr std::size_t kMaxTable = std::size_t{1} << 16;
  const auto size = static_cast<std::size_t>(
      std::min(std::ceil(kTabulatedLag / ratio_) + 1.0, static_cast<double>(kMaxTable)));
  decay_.resize(size);
  innovation_.resize(size);
  for (std::size_t m = 0; m < size; ++m) {
    const double lag = static_cast<double>(m) * ratio_;
    decay_[m] = std::exp(-lag);
    innovation_[m] = std::sqrt(-std::expm1(-2.0 * lag));
  }
  x_ = standard_normal(engine);
  y_ = standard_normal(engine);
}

void ThermalField::advance() { advance(1); }

void ThermalField::advance(std::int64_t steps) {
  double a;
  double s;
  if (static_cast<std::uint64_t>(steps) < decay_.size()) {
    a = decay_[static_cast<std::size_t>(steps)];
    s = innovation_[static_cast<std::size_t>(steps)];
  } else {
    const double lag = static_cast<double>(steps) * ratio_;
    a = std::exp(-lag);
    s = std::sqrt(-std::expm1(-2.0 * lag));
  }
  x_ = a * x_ + s * standard_normal(*engine_);
  y_ = a * y_ + s * standard_normal(*engine_);
  index_ += steps;
}

IntensityTrace simulate_field_intensity(Seconds coherence_time, Seconds step, std::size_t n_steps,
                                        std::uint64_t seed) {
  if (!(coherence_time.value() > 0.0) || !(step.value() > 0.0)) {
    throw ConfigError("coherence time and field step must be positive");
  }
  if (step > coherence_time / 50.0) {
    throw ConfigError("field step too coarse: must not exceed coherence_time / 50");
  }
  if (n_steps == 0) {
    throw ConfigError("field trace needs at least one step");
  }
  Engine engine = make_engine(seed, 0);
  ThermalField field(coherence_time, step, engine);
  IntensityTrace trace{step, {}};
  trace.samples.reserve(n_steps);
  trace.samples.push_back(field.intensity());
  for (std::size_t k = 1; k < n_steps; ++k) {
    field.advance();
    trace.samples.push_back(field.intensity());
  }
  return trace;
}

EventStream generate_arrivals(const IntensityTrace& trace, Rate mean_rate, std::uint64_t seed,
                              std::uint8_t channel) {
  if (!(mean_rate.value() >= 0.0)) {
    throw ConfigError("mean rate must be non-negative");
  }
  EventStream out;
  out.channel = channel;
  out.duration = to_ticks(trace.duration());
  if (mean_rate.value() == 0.0) {
    return out;
  }
  Engine engine = make_engine(seed, 1);
  const double step_ps = trace.step.value() * 1e12;
  const double per_unit_intensity = mean_rate * trace.step;
  std::vector<std::int64_t> group;
  for (std::size_t k = 0; k < trace.samples.size(); ++k) {
    const double mean = per_unit_intensity * trace.samples[k];
    if (mean <= 0.0) {
      continue;
    }
    const int n = boost::random::poisson_distribution<int, double>(mean)(engine);
    if (n == 0) {
      continue;
    }
    group.clear();
    for (int i = 0; i < n; ++i) {
      const double t = (static_cast<double>(k) + uniform01(engine)) * step_ps;
      group.push_back(std::min(static_cast<std::int64_t>(t), out.duration.count));
    }
    std::sort(group.begin(), group.end());
    for (auto t : group) {
      out.times.push_back(Tick{t});
    }
  }
  return out;
}

ThermalArrivalGenerator::ThermalArrivalGenerator(Seconds coherence_time, Seconds step,
                                                 Rate mean_rate, std::uint64_t seed)
    : coherence_time_(coherence_time), step_(step), mean_rate_(mean_rate), seed_(seed) {
  if (!(coherence_time.value() > 0.0) || !(step.value() > 0.0)) {
    throw ConfigError("coherence time and field step must be positive");
  }
  if (step > coherence_time / 50.0) {
    throw ConfigError("field step too coarse: must not exceed coherence_time / 50");
  }
  if (!(mean_rate.value() >= 0.0)) {
    throw ConfigError("mean rate must be non-negative");
  }
}

void ThermalArrivalGenerator::generate(Tick duration, const std::function<void(Tick)>& sink) const {
  if (mean_rate_.value() <= 0.0 || duration.count <= 0) {
    return;
  }
  Engine engine = make_engine(seed_, 0);
  ThermalField field(coherence_time_, step_, engine);
  boost::random::exponential_distribution<double> gap(kCandidateBound * mean_rate_.value() * 1e-12);
  const double step_ps = step_.value() * 1e12;
  const double end_ps = static_cast<double>(duration.count);
  double t = 0.0;
  for (;;) {
    t += gap(engine);
    if (t >= end_ps) {
      break;
    }
    const auto k = static_cast<std::int64_t>(t / step_ps);
    if (k != field.step_index()) {
      field.advance(k - field.step_index());
    }
    if (uniform01(engine) * kCandidateBound < field.intensity()) {
      sink(Tick{static_cast<std::int64_t>(t)});
    }
  }
}

EventStream generate_thermal_arrivals(Seconds coherence_time, Seconds step, Rate mean_rate,
                                      Seconds duration, std::uint64_t seed, std::uint8_t channel) {
  EventStream out;
  out.channel = channel;
  out.duration = ticks_or_throw(duration, "duration");
  out.times.reserve(static_cast<std::size_t>(mean_rate * duration * 1.01) + 64);
  ThermalArrivalGenerator(coherence_time, step, mean_rate, seed)
      .generate(out.duration, [&](Tick t) { out.times.push_back(t); });
  return out;
}

// --- optical path ----------------------------------------------------------

std::vector<EventStream> split_events(const EventStream& stream, std::span<const double> fractions,
                                      std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    check_fraction(f, "split fraction");
    total += f;
  }
  if (total > 1.0 + 1e-12) {
    throw ConfigError("split fractions sum to " + std::to_string(total) + " > 1");
  }
  std::vector<EventStream> out(fractions.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].channel = static_cast<std::uint8_t>(i);
    out[i].duration = stream.duration;
    out[i].origin = stream.origin;
  }
  Engine engine = make_engine(seed, 2);
  for (Tick t : stream.times) {
    double u = uniform01(engine);
    for (std::size_t i = 0; i < fractions.size(); ++i) {
      if (u < fractions[i]) {
        out[i].times.push_back(t);
        break;
      }
      u -= fractions[i];
    }
  }
  return out;
}

EventStream delay_events(const EventStream& stream, Seconds delay) {
  const Tick shift = ticks_or_throw(delay, "delay");
  EventStream out = stream;
  out.duration = stream.duration + shift;
  for (Tick& t : out.times) {
    t += shift;
  }
  return out;
}

EventStream crop_events(const EventStream& stream, Tick begin, Tick length) {
  EventStream out;
  out.channel = stream.channel;
  out.origin = stream.origin;
  out.duration = length;
  const Tick end = begin + length;
  auto first = std::lower_bound(stream.times.begin(), stream.times.end(), begin);
  auto last = std::lower_bound(first, stream.times.end(), end);
  out.times.reserve(static_cast<std::size_t>(last - first));
  for (auto it = first; it != last; ++it) {
    out.times.push_back(*it - begin);
  }
  return out;
}

// --- detector ----------------------------------------------------------------

EventStream thin_events(const EventStream& stream, double keep_probability, Engine& engine) {
  check_fraction(keep_probability, "keep probability");
  EventStream out;
  out.channel = stream.channel;
  out.origin = stream.origin;
  out.duration = stream.duration;
  if (keep_probability == 1.0) {
    out.times = stream.times;
    return out;
  }
  out.times.reserve(static_cast<std::size_t>(static_cast<double>(stream.size()) * keep_probability * 1.01) + 16);
  for (Tick t : stream.times) {
    if (uniform01(engine) < keep_probability) {
      out.times.push_back(t);
    }
  }
  return out;
}

EventStream add_background(const EventStream& stream, Rate rate, Engine& engine) {
  if (!(rate.value() >= 0.0)) {
    throw ConfigError("background rate must be non-negative");
  }
  if (rate.value() == 0.0 || stream.duration.count <= 0) {
    return stream;
  }
  std::vector<Tick> background;
  background.reserve(static_cast<std::size_t>(rate * stream.duration_seconds() * 1.01) + 16);
  boost::random::exponential_distribution<double> gap(rate.value() * 1e-12);
  const double end_ps = static_cast<double>(stream.duration.count);
  for (double t = gap(engine); t < end_ps; t += gap(engine)) {
    background.push_back(Tick{static_cast<std::int64_t>(t)});
  }
  EventStream out;
  out.channel = stream.channel;
  out.origin = stream.origin;
  out.duration = stream.duration;
  out.times.resize(stream.size() + background.size());
  std::merge(stream.times.begin(), stream.times.end(), background.begin(), background.end(),
             out.times.begin());
  return out;
}

EventStream apply_dead_time(const EventStream& stream, Seconds dead_time) {
  const Tick dead = ticks_or_throw(dead_time, "dead time");
  if (dead.count == 0) {
    return stream;
  }
  EventStream out;
  out.channel = stream.channel;
  out.origin = stream.origin;
  out.duration = stream.duration;
  out.times.reserve(stream.size());
  for (Tick t : stream.times) {
    if (out.times.empty() || (t - out.times.back()) >= dead) {
      out.times.push_back(t);
    }
  }
  return out;
}

EventStream apply_jitter(const EventStream& stream, Seconds jitter_fwhm, Engine& engine) {
  if (!(jitter_fwhm.value() >= 0.0)) {
    throw ConfigError("jitter must be non-negative");
  }
  if (jitter_fwhm.value() == 0.0) {
    return stream;
  }
  const double sigma_ps = jitter_fwhm.value() * 1e12 / kFwhmPerSigma;
  EventStream out;
  out.channel = stream.channel;
  out.origin = stream.origin;
  out.duration = stream.duration;
  out.times.reserve(stream.size());
  for (Tick t : stream.times) {
    const auto shift = static_cast<std::int64_t>(std::llround(sigma_ps * standard_normal(engine)));
    const Tick moved = t + Tick{shift};
    if (moved.count >= 0 && moved <= stream.duration) {
      out.times.push_back(moved);
    }
  }
  std::sort(out.times.begin(), out.times.end());
  return out;
}

namespace {

// Background, dead time and jitter; efficiency handled by the caller.
EventStream detector_response(const EventStream& stream, const DetectorSpec& spec, Rate ambient_rate,
                              Engine& engine) {
  EventStream s = add_background(stream, ambient_rate + spec.dark_rate, engine);
  s = apply_dead_time(s, spec.dead_time);
  return apply_jitter(s, spec.jitter_fwhm, engine);
}

}  // namespace

EventStream apply_detector(const EventStream& stream, const DetectorSpec& spec, Rate ambient_rate,
                           Seconds duration, std::uint64_t seed) {
  spec.validate();
  stream.check_invariants();
  Engine engine = make_engine(seed, 3);
  EventStream s = thin_events(stream, spec.efficiency, engine);
  s.duration = ticks_or_throw(duration, "duration");
  if (!s.times.empty() && s.times.back() > s.duration) {
    s.times.erase(std::upper_bound(s.times.begin(), s.times.end(), s.duration), s.times.end());
  }
  return detector_response(s, spec, ambient_rate, engine);
}

// --- scenario ----------------------------------------------------------------

double ScenarioTruth::signal_fraction_ref() const {
  const double total = signal_rate_ref.value() + background_rate_ref.value();
  return total > 0.0 ? signal_rate_ref.value() / total : 0.0;
}

double ScenarioTruth::signal_fraction_probe() const {
  const double total = signal_rate_probe.value() + background_rate_probe.value();
  return total > 0.0 ? signal_rate_probe.value() / total : 0.0;
}

double ScenarioTruth::expected_amplitude() const {
  return signal_fraction_ref() * signal_fraction_probe();
}

ScenarioResult simulate_ranging_scenario(const ScenarioConfig& config) {
  config.validate();

  ScenarioResult result;
  ScenarioTruth& truth = result.truth;
  truth.delay = to_ticks(delay_from_range(config.distance, config.medium));
  truth.coherence_time = config.source.coherence_time;
  truth.field_step = config.effective_field_step();
  truth.duration = config.duration;
  truth.distance = config.distance;
  truth.refractive_index = config.medium.refractive_index;
  truth.seed = config.seed;

  // Beam splitting, probe-path loss and detector efficiency are independent
  // Bernoulli thinnings of the source, so they compose into one routing
  // step over a source generated at the surviving rate.
  const double rate = config.source.photon_rate.value();
  truth.signal_rate_ref = per_second(rate * config.split_ref * config.detector_ref.efficiency);
  truth.signal_rate_probe = per_second(rate * config.split_probe * config.probe_round_trip_transmission *
                                       config.detector_probe.efficiency);
  truth.background_rate_ref = config.ambient_rate_ref + config.detector_ref.dark_rate;
  truth.background_rate_probe = config.ambient_rate_probe + config.detector_probe.dark_rate;

  const Tick length = to_ticks(config.duration);
  const Rate surviving = truth.signal_rate_ref + truth.signal_rate_probe;
  const double p_ref = surviving.value() > 0.0 ? truth.signal_rate_ref / surviving : 0.0;

  EventStream ref;
  ref.channel = 0;
  ref.duration = length;
  EventStream probe;
  probe.channel = 1;
  probe.duration = length;
  const double expected = surviving * config.duration;
  ref.times.reserve(static_cast<std::size_t>(expected * p_ref * 1.01) + 64);
  probe.times.reserve(static_cast<std::size_t>(expected * (1.0 - p_ref) * 1.01) + 64);

  // The source runs over [0, T + tau0) and the recorded window is
  // [tau0, T + tau0), re-origined to zero. A reference photon emitted at s is
  // recorded at s - tau0; a probe photon arrives at s + tau0 and is recorded
  // at s.
  Engine routing = make_engine(config.seed, 1);
  boost::random::uniform_01<double> route;
  const Tick delay = truth.delay;
  ThermalArrivalGenerator(config.source.coherence_time, truth.field_step, surviving, config.seed)
      .generate(length + delay, [&](Tick s) {
        if (route(routing) < p_ref) {
          if (s >= delay) {
            ref.times.push_back(s - delay);
          }
        } else if (s < length) {
          probe.times.push_back(s);
        }
      });

  Engine engine_ref = make_engine(config.seed, 2);
  Engine engine_probe = make_engine(config.seed, 3);
#pragma omp parallel sections
  {
#pragma omp section
    result.reference = detector_response(ref, config.detector_ref, config.ambient_rate_ref, engine_ref);
#pragma omp section
    result.probe = detector_response(probe, config.detector_probe, config.ambient_rate_probe, engine_probe);
  }
  truth.detected_ref = result.reference.size();
  truth.detected_probe = result.probe.size();
  return result;
}

}  // namespace hbt
