#pragma once

// Physical constants, unit-tagged quantities, the picosecond tick time base,
// and the spectral / radiometric / time-of-flight conversions.

#include <compare>
#include <cstdint>
#include <optional>

namespace hbt {

/// A double tagged with a physical dimension. Only same-dimension
/// arithmetic compiles; dividing two like quantities yields a plain ratio.
template <class Dim>
class Quantity {
public:
  constexpr Quantity() = default;
  constexpr explicit Quantity(double v) : value_(v) {}

  constexpr double value() const { return value_; }

  constexpr Quantity operator-() const { return Quantity(-value_); }
  constexpr Quantity& operator+=(Quantity o) { value_ += o.value_; return *this; }
  constexpr Quantity& operator-=(Quantity o) { value_ -= o.value_; return *this; }

  friend constexpr Quantity operator+(Quantity a, Quantity b) { return Quantity(a.value_ + b.value_); }
  friend constexpr Quantity operator-(Quantity a, Quantity b) { return Quantity(a.value_ - b.value_); }
  friend constexpr Quantity operator*(Quantity a, double s) { return Quantity(a.value_ * s); }
  friend constexpr Quantity operator*(double s, Quantity a) { return Quantity(a.value_ * s); }
  friend constexpr Quantity operator/(Quantity a, double s) { return Quantity(a.value_ / s); }
  friend constexpr double operator/(Quantity a, Quantity b) { return a.value_ / b.value_; }
  friend constexpr auto operator<=>(Quantity, Quantity) = default;

private:
  double value_ = 0.0;
};

namespace dim {
struct Time {};
struct Length {};
struct Frequency {};
struct Power {};
struct EventRate {};
}  // namespace dim

using Seconds = Quantity<dim::Time>;
using Meters = Quantity<dim::Length>;
using Hertz = Quantity<dim::Frequency>;
using Watts = Quantity<dim::Power>;
/// Events per second. Kept distinct from Hertz (optical frequency).
using Rate = Quantity<dim::EventRate>;

constexpr Seconds seconds(double v) { return Seconds(v); }
constexpr Seconds milliseconds(double v) { return Seconds(v * 1e-3); }
constexpr Seconds nanoseconds(double v) { return Seconds(v * 1e-9); }
constexpr Seconds picoseconds(double v) { return Seconds(v * 1e-12); }
constexpr Meters meters(double v) { return Meters(v); }
constexpr Meters millimeters(double v) { return Meters(v * 1e-3); }
constexpr Meters nanometers(double v) { return Meters(v * 1e-9); }
constexpr Hertz hertz(double v) { return Hertz(v); }
constexpr Hertz megahertz(double v) { return Hertz(v * 1e6); }
constexpr Hertz gigahertz(double v) { return Hertz(v * 1e9); }
constexpr Watts watts(double v) { return Watts(v); }
constexpr Rate per_second(double v) { return Rate(v); }

/// Expected event count of a rate over an interval.
constexpr double operator*(Rate r, Seconds t) { return r.value() * t.value(); }
constexpr double operator*(Seconds t, Rate r) { return r.value() * t.value(); }

namespace constants {
/// Speed of light in vacuum, m/s (exact, SI 2019).
inline constexpr double speed_of_light = 299'792'458.0;
/// Planck constant, J*s (exact, SI 2019).
inline constexpr double planck = 6.62607015e-34;
}  // namespace constants

/// Integer picosecond count. Arithmetic is overflow-checked and throws
/// OverflowError instead of wrapping.
struct Tick {
  std::int64_t count = 0;

  static constexpr std::int64_t per_second = 1'000'000'000'000;

  friend constexpr auto operator<=>(Tick, Tick) = default;

  friend Tick operator+(Tick a, Tick b);
  friend Tick operator-(Tick a, Tick b);
  Tick& operator+=(Tick o) { return *this = *this + o; }
  Tick& operator-=(Tick o) { return *this = *this - o; }
};

/// Nearest tick; throws OverflowError when |t| exceeds the int64 span.
Tick to_ticks(Seconds t);
constexpr Seconds to_seconds(Tick t) {
  return Seconds(static_cast<double>(t.count) * 1e-12);
}

struct Medium {
  double refractive_index = 1.0;

  /// Throws DomainError if n < 1.
  static Medium with_index(double n);
  static Medium vacuum() { return Medium{}; }
};

/// Narrowband thermal source. Linewidth and coherence time are kept
/// consistent (linewidth * coherence_time == 1); photon rate follows the
/// power when a power is given.
struct SourceSpec {
  Meters wavelength;
  std::optional<Meters> wavelength_spread;
  Hertz linewidth;
  Seconds coherence_time;
  std::optional<Watts> power;
  Rate photon_rate;

  static SourceSpec from_coherence_time(Meters wavelength, Seconds coherence_time, Rate photon_rate);
  static SourceSpec from_linewidth(Meters wavelength, Hertz linewidth, Rate photon_rate);
  /// Linewidth derived from the wavelength spread, rate from optical power.
  static SourceSpec from_spread_and_power(Meters wavelength, Meters spread, Watts power);

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
};

/// 1 / linewidth. Throws DomainError for linewidth <= 0.
Seconds coherence_time_from_linewidth(Hertz linewidth);
/// 1 / coherence time. Throws DomainError for coherence time <= 0.
Hertz linewidth_from_coherence_time(Seconds coherence_time);

/// c * spread / wavelength^2.
Hertz linewidth_from_wavelength_spread(Meters wavelength, Meters spread);

/// Photon flux P * lambda / (h c).
Rate photon_rate_from_power(Watts power, Meters wavelength);

/// One-way distance for a round-trip delay: c * delay / (2 n). Negative
/// delays give negative ranges.
Meters range_from_delay(Seconds delay, Medium medium = {});
/// Round-trip delay 2 d n / c.
Seconds delay_from_range(Meters distance, Medium medium = {});

/// Bunching model B + A exp(-2 |tau - delay| / coherence).
struct G2Params {
  double baseline = 1.0;
  double amplitude = 1.0;
  Seconds delay;
  Seconds coherence_time;
};

/// Throws DomainError for coherence time <= 0 or negative amplitude.
double g2_model(Seconds tau, const G2Params& p);

}  // namespace hbt
