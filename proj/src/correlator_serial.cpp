#include <algorithm>
#include <string>

#include "hbt/correlator.hpp"
#include "hbt/errors.hpp"

namespace hbt {

CorrelationConfig CorrelationConfig::make(Tick bin_width, Tick window_min, Tick window_max) {
  CorrelationConfig c{bin_width, window_min, window_max};
  c.validate();
  return c;
}

CorrelationConfig CorrelationConfig::symmetric(Tick bin_width, Tick half_width) {
  return make(bin_width, Tick{-half_width.count}, half_width);
}

void CorrelationConfig::validate() const {
  if (bin_width.count <= 0) {
    throw ConfigError("bin width must be positive");
  }
  if (window_max <= window_min) {
    throw ConfigError("correlation window must have window_max > window_min");
  }
  const Tick span = window_max - window_min;
  if (span.count % bin_width.count != 0) {
    throw ConfigError("window span " + std::to_string(span.count) +
                      " ps is not a multiple of the bin width " + std::to_string(bin_width.count) + " ps");
  }
  if (static_cast<std::uint64_t>(span.count / bin_width.count) > kMaxBins) {
    throw ConfigError("correlation window needs more than 2^24 bins");
  }
}

std::size_t CorrelationConfig::bin_count() const {
  return static_cast<std::size_t>((window_max.count - window_min.count) / bin_width.count);
}

double CorrelationConfig::bin_center_ps(std::size_t k) const {
  return static_cast<double>(window_min.count) +
         (static_cast<double>(k) + 0.5) * static_cast<double>(bin_width.count);
}

CorrelationHistogram CorrelationHistogram::empty(const CorrelationConfig& config) {
  config.validate();
  CorrelationHistogram h;
  h.config = config;
  h.counts.assign(config.bin_count(), 0);
  return h;
}

std::uint64_t CorrelationHistogram::total_pairs() const {
  std::uint64_t total = 0;
  for (auto c : counts) {
    total += c;
  }
  return total;
}

void accumulate_pairs(std::span<const Tick> a, std::span<const Tick> b,
                      const CorrelationConfig& config, std::span<std::uint64_t> counts) {
  if (a.empty() || b.empty()) {
    return;
  }
  const std::int64_t lo_edge = config.window_min.count;
  const std::int64_t hi_edge = config.window_max.count;
  const std::int64_t width = config.bin_width.count;
  // Timestamps are non-negative, so b - a never overflows.
  std::size_t lo = static_cast<std::size_t>(
      std::lower_bound(b.begin(), b.end(), a.front(), [&](Tick tb, Tick ta) {
        return tb.count - ta.count < lo_edge;
      }) - b.begin());
  const std::size_t nb = b.size();
  for (const Tick ta : a) {
    const std::int64_t t = ta.count;
    while (lo < nb && b[lo].count - t < lo_edge) {
      ++lo;
    }
    for (std::size_t j = lo; j < nb; ++j) {
      const std::int64_t diff = b[j].count - t;
      if (diff >= hi_edge) {
        break;
      }
      ++counts[static_cast<std::size_t>((diff - lo_edge) / width)];
    }
  }
}

namespace {

void require_sorted(const EventStream& s, const char* name) {
  if (!s.is_sorted()) {
    throw PreconditionError(std::string("stream ") + name + " is not sorted");
  }
  if (!s.empty() && s.times.front().count < 0) {
    throw PreconditionError(std::string("stream ") + name + " has negative timestamps");
  }
}

}  // namespace

CorrelationHistogram cross_correlate_serial(const EventStream& a, const EventStream& b,
                                            const CorrelationConfig& config) {
  require_sorted(a, "a");
  require_sorted(b, "b");
  CorrelationHistogram h = CorrelationHistogram::empty(config);
  h.n_a = a.size();
  h.n_b = b.size();
  h.duration = std::max(a.duration, b.duration);
  accumulate_pairs(a.times, b.times, config, h.counts);
  return h;
}

CorrelationHistogram auto_correlate(const EventStream& a, const CorrelationConfig& config) {
  require_sorted(a, "a");
  CorrelationHistogram h = CorrelationHistogram::empty(config);
  h.n_a = a.size();
  h.n_b = a.size();
  h.duration = a.duration;
  const std::int64_t lo_edge = config.window_min.count;
  const std::int64_t hi_edge = config.window_max.count;
  const std::int64_t width = config.bin_width.count;
  const auto& t = a.times;
  std::size_t lo = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    while (lo < t.size() && t[lo].count - t[i].count < lo_edge) {
      ++lo;
    }
    for (std::size_t j = std::max(lo, i + 1); j < t.size(); ++j) {
      const std::int64_t diff = t[j].count - t[i].count;
      if (diff >= hi_edge) {
        break;
      }
      if (diff >= lo_edge) {
        ++h.counts[static_cast<std::size_t>((diff - lo_edge) / width)];
      }
    }
  }
  return h;
}

CorrelationHistogram merge_histograms(const CorrelationHistogram& h1, const CorrelationHistogram& h2) {
  if (!(h1.config == h2.config) || h1.counts.size() != h2.counts.size()) {
    throw ConfigError("cannot merge histograms with different bin configurations");
  }
  CorrelationHistogram out = h1;
  for (std::size_t k = 0; k < out.counts.size(); ++k) {
    out.counts[k] += h2.counts[k];
  }
  out.n_a += h2.n_a;
  out.n_b += h2.n_b;
  out.duration += h2.duration;
  return out;
}

CorrelationHistogram cross_correlate_chunked(const EventStream& a, const EventStream& b,
                                             const CorrelationConfig& config, Tick chunk) {
  require_sorted(a, "a");
  require_sorted(b, "b");
  if (chunk.count <= 0) {
    throw ConfigError("chunk length must be positive");
  }
  const Tick total = std::max(a.duration, b.duration);
  const std::int64_t n_chunks = std::max<std::int64_t>(1, (total.count + chunk.count - 1) / chunk.count);

  CorrelationHistogram merged = CorrelationHistogram::empty(config);
  auto a_it = a.times.begin();
  auto b_it = b.times.begin();
  std::int64_t c = 0;
  while (c < n_chunks && (a_it != a.times.end() || b_it != b.times.end())) {
    // Chunks without events contribute nothing; jump to the next occupied one.
    const std::int64_t next_a = a_it != a.times.end() ? a_it->count / chunk.count : n_chunks;
    const std::int64_t next_b = b_it != b.times.end() ? b_it->count / chunk.count : n_chunks;
    c = std::max(c, std::min({next_a, next_b, n_chunks - 1}));
    const bool last = c + 1 == n_chunks;
    const Tick end{(c + 1) * chunk.count};
    // The last chunk is open-ended so events at exactly t == duration land somewhere.
    auto a_end = last ? a.times.end() : std::lower_bound(a_it, a.times.end(), end);
    auto b_end = last ? b.times.end() : std::lower_bound(b_it, b.times.end(), end);
    merged.n_a += static_cast<std::uint64_t>(a_end - a_it);
    merged.n_b += static_cast<std::uint64_t>(b_end - b_it);
    // Pairs are keyed on the a event; b is searched over the whole stream,
    // which covers the window overlap into neighbouring chunks.
    accumulate_pairs({a_it, a_end}, b.times, config, merged.counts);
    a_it = a_end;
    b_it = b_end;
    ++c;
  }
  // Chunk durations partition the acquisition.
  merged.duration = total;
  return merged;
}

}  // namespace hbt
