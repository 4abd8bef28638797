#pragma once

// Synthetic detector timestamp streams for the thermal-light ranging
// experiment: a doubly stochastic Poisson process driven by a thermal
// (complex Gaussian) field, beam splitting, propagation delay and detector
// imperfections.

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <boost/random/mersenne_twister.hpp>

#include "hbt/event_stream.hpp"
#include "hbt/quantities.hpp"

namespace hbt {

using Engine = boost::random::mt19937_64;

/// Independent, reproducible engine for sub-stream `stream` of a run seed.
Engine make_engine(std::uint64_t seed, std::uint64_t stream);

struct DetectorSpec {
  double efficiency = 1.0;
  Seconds jitter_fwhm{0.0};
  Seconds dead_time{0.0};
  Rate dark_rate{0.0};
  Rate saturation_rate{std::numeric_limits<double>::infinity()};

  /// Perfect detector: unit efficiency, no jitter, dead time or dark counts.
  static DetectorSpec ideal() { return {}; }
  /// Actively quenched silicon APD: 50 % efficiency, 40 ps FWHM jitter,
  /// 50 ns non-paralyzable dead time, 100 /s dark counts, 1e7 /s saturation.
  static DetectorSpec silicon_apd();

  void validate() const;
};

struct ScenarioConfig {
  SourceSpec source;
  Meters distance{0.0};
  Medium medium;
  double split_ref = 0.04;
  double split_probe = 0.92;
  double probe_round_trip_transmission = 1.0;
  Rate ambient_rate_probe{0.0};
  Rate ambient_rate_ref{0.0};
  DetectorSpec detector_ref;
  DetectorSpec detector_probe;
  Seconds duration{1.0};
  std::uint64_t seed = 1;
  /// Zero selects the default of coherence_time / 100.
  Seconds field_step{0.0};

  Seconds effective_field_step() const;
  /// Throws ConfigError on any violated invariant, including a detector
  /// whose expected incident rate exceeds its saturation rate.
  void validate() const;
};

/// Latent normalized intensity of the thermal field on a uniform grid.
struct IntensityTrace {
  Seconds step;
  std::vector<double> samples;

  Seconds duration() const { return step * static_cast<double>(samples.size()); }
};

/// Two independent stationary Gauss-Markov quadratures with field
/// correlation exp(-|tau|/tau_c), stepped exactly on a grid; intensity
/// (x^2 + y^2) / 2 has unit mean.
class ThermalField {
public:
  ThermalField(Seconds coherence_time, Seconds step, Engine& engine);

  double intensity() const { return 0.5 * (x_ * x_ + y_ * y_); }
  std::int64_t step_index() const { return index_; }

  void advance();
  /// Exact jump over `steps` grid steps.
  void advance(std::int64_t steps);

private:
  Engine* engine_;
  double ratio_;  // step / coherence_time
  // decay_[m] = exp(-m * ratio_), innovation_[m] = sqrt(1 - decay_[m]^2),
  // tabulated for lags up to 40 coherence times.
  std::vector<double> decay_;
  std::vector<double> innovation_;
  double x_ = 0.0;
  double y_ = 0.0;
  std::int64_t index_ = 0;
};

/// Throws ConfigError when step > coherence_time / 50 or n_steps == 0.
IntensityTrace simulate_field_intensity(Seconds coherence_time, Seconds step, std::size_t n_steps,
                                        std::uint64_t seed);

/// Doubly stochastic Poisson sampling of a materialized trace: per step a
/// Poisson count with mean rate * I_k * step, placed uniformly in the step.
EventStream generate_arrivals(const IntensityTrace& trace, Rate mean_rate, std::uint64_t seed,
                              std::uint8_t channel = 0);

/// Same process as simulate_field_intensity + generate_arrivals, but the
/// field is only evaluated at the grid steps that hold candidate events, so
/// long acquisitions never materialize the trace. Candidates are drawn at
/// kCandidateBound * rate and kept with probability I_k / kCandidateBound.
class ThermalArrivalGenerator {
public:
  static constexpr double kCandidateBound = 16.0;

  ThermalArrivalGenerator(Seconds coherence_time, Seconds step, Rate mean_rate, std::uint64_t seed);

  /// Calls sink(Tick) for every arrival in [0, duration), in time order.
  void generate(Tick duration, const std::function<void(Tick)>& sink) const;

private:
  Seconds coherence_time_;
  Seconds step_;
  Rate mean_rate_;
  std::uint64_t seed_;
};

EventStream generate_thermal_arrivals(Seconds coherence_time, Seconds step, Rate mean_rate,
                                      Seconds duration, std::uint64_t seed,
                                      std::uint8_t channel = 0);

/// Route every event independently to output i with probability
/// fractions[i]; the remainder is discarded. Output i gets channel id i.
std::vector<EventStream> split_events(const EventStream& stream, std::span<const double> fractions,
                                      std::uint64_t seed);

/// Shift every timestamp by round(delay); the duration grows by the same
/// amount so the stream stays within [0, duration].
EventStream delay_events(const EventStream& stream, Seconds delay);

/// Keep events in [begin, begin + length) and re-origin them at begin.
EventStream crop_events(const EventStream& stream, Tick begin, Tick length);

// Detector stages, in the order apply_detector runs them.
EventStream thin_events(const EventStream& stream, double keep_probability, Engine& engine);
EventStream add_background(const EventStream& stream, Rate rate, Engine& engine);
EventStream apply_dead_time(const EventStream& stream, Seconds dead_time);
EventStream apply_jitter(const EventStream& stream, Seconds jitter_fwhm, Engine& engine);

/// Efficiency thinning, ambient + dark background, non-paralyzable dead
/// time, Gaussian jitter, then re-sort and clip to [0, duration].
EventStream apply_detector(const EventStream& stream, const DetectorSpec& spec, Rate ambient_rate,
                           Seconds duration, std::uint64_t seed);

/// Ground truth of a simulated ranging run.
struct ScenarioTruth {
  Tick delay;
  Seconds coherence_time;
  Seconds field_step;
  Seconds duration;
  Meters distance;
  double refractive_index = 1.0;
  std::uint64_t seed = 0;
  /// Signal photon rates reaching each detector after efficiency.
  Rate signal_rate_ref;
  Rate signal_rate_probe;
  /// Ambient + dark rates per detector.
  Rate background_rate_ref;
  Rate background_rate_probe;
  std::size_t detected_ref = 0;
  std::size_t detected_probe = 0;

  double signal_fraction_ref() const;
  double signal_fraction_probe() const;
  /// Expected cross-correlation bunching amplitude for perfect timing:
  /// the product of the two signal fractions.
  double expected_amplitude() const;
};

struct ScenarioResult {
  EventStream reference;
  EventStream probe;
  ScenarioTruth truth;
};

ScenarioResult simulate_ranging_scenario(const ScenarioConfig& config);

}  // namespace hbt
