#include "hbt/quantities.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "hbt/errors.hpp"

namespace hbt {

Tick operator+(Tick a, Tick b) {
  std::int64_t out = 0;
  if (__builtin_add_overflow(a.count, b.count, &out)) {
    throw OverflowError("tick addition overflow: " + std::to_string(a.count) + " + " +
                        std::to_string(b.count));
  }
  return Tick{out};
}

Tick operator-(Tick a, Tick b) {
  std::int64_t out = 0;
  if (__builtin_sub_overflow(a.count, b.count, &out)) {
    throw OverflowError("tick subtraction overflow: " + std::to_string(a.count) + " - " +
                        std::to_string(b.count));
  }
  return Tick{out};
}

Tick to_ticks(Seconds t) {
  const double ps = std::round(t.value() * static_cast<double>(Tick::per_second));
  // 2^63 is exactly representable; anything at or beyond it does not fit.
  constexpr double limit = 9223372036854775808.0;
  if (!std::isfinite(ps) || ps >= limit || ps < -limit) {
    throw OverflowError("time " + std::to_string(t.value()) + " s not representable in ticks");
  }
  return Tick{static_cast<std::int64_t>(ps)};
}

Medium Medium::with_index(double n) {
  if (!(n >= 1.0)) {
    throw DomainError("refractive index must be >= 1, got " + std::to_string(n));
  }
  return Medium{n};
}

Seconds coherence_time_from_linewidth(Hertz linewidth) {
  if (!(linewidth.value() > 0.0)) {
    throw DomainError("linewidth must be positive");
  }
  return Seconds(1.0 / linewidth.value());
}

Hertz linewidth_from_coherence_time(Seconds coherence_time) {
  if (!(coherence_time.value() > 0.0)) {
    throw DomainError("coherence time must be positive");
  }
  return Hertz(1.0 / coherence_time.value());
}

Hertz linewidth_from_wavelength_spread(Meters wavelength, Meters spread) {
  if (!(wavelength.value() > 0.0)) {
    throw DomainError("wavelength must be positive");
  }
  if (!(spread.value() >= 0.0)) {
    throw DomainError("wavelength spread must be non-negative");
  }
  return Hertz(constants::speed_of_light * spread.value() /
               (wavelength.value() * wavelength.value()));
}

Rate photon_rate_from_power(Watts power, Meters wavelength) {
  if (!(wavelength.value() > 0.0)) {
    throw DomainError("wavelength must be positive");
  }
  if (!(power.value() >= 0.0)) {
    throw DomainError("optical power must be non-negative");
  }
  return Rate(power.value() * wavelength.value() /
              (constants::planck * constants::speed_of_light));
}

Meters range_from_delay(Seconds delay, Medium medium) {
  return Meters(constants::speed_of_light * delay.value() / (2.0 * medium.refractive_index));
}

Seconds delay_from_range(Meters distance, Medium medium) {
  return Seconds(2.0 * distance.value() * medium.refractive_index / constants::speed_of_light);
}

double g2_model(Seconds tau, const G2Params& p) {
  if (!(p.coherence_time.value() > 0.0)) {
    throw DomainError("coherence time must be positive");
  }
  if (!(p.amplitude >= 0.0)) {
    throw DomainError("bunching amplitude must be non-negative");
  }
  const double u = std::abs(tau.value() - p.delay.value());
  return p.baseline + p.amplitude * std::exp(-2.0 * u / p.coherence_time.value());
}

SourceSpec SourceSpec::from_coherence_time(Meters wavelength, Seconds coherence_time,
                                           Rate photon_rate) {
  SourceSpec s;
  s.wavelength = wavelength;
  s.coherence_time = coherence_time;
  s.linewidth = linewidth_from_coherence_time(coherence_time);
  s.photon_rate = photon_rate;
  s.validate();
  return s;
}

SourceSpec SourceSpec::from_linewidth(Meters wavelength, Hertz linewidth, Rate photon_rate) {
  SourceSpec s;
  s.wavelength = wavelength;
  s.linewidth = linewidth;
  s.coherence_time = coherence_time_from_linewidth(linewidth);
  s.photon_rate = photon_rate;
  s.validate();
  return s;
}

SourceSpec SourceSpec::from_spread_and_power(Meters wavelength, Meters spread, Watts power) {
  SourceSpec s;
  s.wavelength = wavelength;
  s.wavelength_spread = spread;
  s.linewidth = linewidth_from_wavelength_spread(wavelength, spread);
  s.coherence_time = coherence_time_from_linewidth(s.linewidth);
  s.power = power;
  s.photon_rate = photon_rate_from_power(power, wavelength);
  s.validate();
  return s;
}

void SourceSpec::validate() const {
  if (!(wavelength.value() > 0.0)) {
    throw ConfigError("source wavelength must be positive");
  }
  if (!(linewidth.value() > 0.0)) {
    throw ConfigError("source linewidth must be positive");
  }
  if (std::abs(linewidth.value() * coherence_time.value() - 1.0) > 1e-12) {
    throw ConfigError("source linewidth and coherence time are inconsistent");
  }
  if (!(photon_rate.value() >= 0.0)) {
    throw ConfigError("source photon rate must be non-negative");
  }
  if (power) {
    const double expected = photon_rate_from_power(*power, wavelength).value();
    if (std::abs(photon_rate.value() - expected) > 1e-9 * std::abs(expected)) {
      throw ConfigError("source photon rate does not match its optical power");
    }
  }
}

}  // namespace hbt
