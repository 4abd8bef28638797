#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hbt/quantities.hpp"

namespace hbt {

enum class StreamOrigin : std::uint8_t { Simulated, Loaded };

/// Photon-detection timestamps of one channel, in picosecond ticks.
/// Times are nondecreasing and lie in [0, duration].
struct EventStream {
  std::uint8_t channel = 0;
  std::vector<Tick> times;
  Tick duration{0};
  StreamOrigin origin = StreamOrigin::Simulated;

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
  Seconds duration_seconds() const { return to_seconds(duration); }

  bool is_sorted() const;
  /// Throws PreconditionError when unsorted or outside [0, duration].
  void check_invariants() const;
};

bool is_nondecreasing(std::span<const Tick> times);

}  // namespace hbt
