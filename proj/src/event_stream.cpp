#include "hbt/event_stream.hpp"

#include <algorithm>
#include <string>

#include "hbt/errors.hpp"

namespace hbt {

bool is_nondecreasing(std::span<const Tick> times) {
  return std::is_sorted(times.begin(), times.end());
}

bool EventStream::is_sorted() const { return is_nondecreasing(times); }

void EventStream::check_invariants() const {
  if (!is_sorted()) {
    throw PreconditionError("channel " + std::to_string(channel) + ": timestamps not sorted");
  }
  if (!times.empty() && (times.front().count < 0 || times.back() > duration)) {
    throw PreconditionError("channel " + std::to_string(channel) +
                            ": timestamps outside [0, duration]");
  }
}

}  // namespace hbt
