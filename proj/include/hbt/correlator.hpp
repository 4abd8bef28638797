#pragma once

// Coincidence histogram of time differences t_b - t_a between two sorted
// timestamp streams. All ordered pairs inside the window are counted.
//
// Two implementations share one contract: cross_correlate_serial is the
// single-threaded two-cursor sweep kept as the reference, cross_correlate
// partitions stream a across OpenMP threads. Counts are integers, so any
// partitioning gives bit-identical histograms.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "hbt/event_stream.hpp"
#include "hbt/quantities.hpp"

namespace hbt {

/// Bins [window_min + k w, window_min + (k+1) w) for k < bin_count().
struct CorrelationConfig {
  static constexpr std::size_t kMaxBins = std::size_t{1} << 24;

  Tick bin_width{1};
  Tick window_min{0};
  Tick window_max{1};

  /// Validated construction; throws ConfigError.
  static CorrelationConfig make(Tick bin_width, Tick window_min, Tick window_max);
  /// Symmetric window [-half_width, half_width).
  static CorrelationConfig symmetric(Tick bin_width, Tick half_width);

  void validate() const;
  std::size_t bin_count() const;
  /// Center of bin k in picoseconds (half-integer for odd bin widths).
  double bin_center_ps(std::size_t k) const;

  friend bool operator==(const CorrelationConfig&, const CorrelationConfig&) = default;
};

struct CorrelationHistogram {
  CorrelationConfig config;
  std::vector<std::uint64_t> counts;
  std::uint64_t n_a = 0;
  std::uint64_t n_b = 0;
  Tick duration{0};

  /// Zero counts and totals for a given configuration.
  static CorrelationHistogram empty(const CorrelationConfig& config);

  std::uint64_t total_pairs() const;
  friend bool operator==(const CorrelationHistogram&, const CorrelationHistogram&) = default;
};

/// OpenMP-parallel correlation. `threads` == 0 uses the OpenMP default.
CorrelationHistogram cross_correlate(const EventStream& a, const EventStream& b,
                                     const CorrelationConfig& config, int threads = 0);

/// Single-threaded reference sweep, O(N_a + N_b + pairs).
CorrelationHistogram cross_correlate_serial(const EventStream& a, const EventStream& b,
                                            const CorrelationConfig& config);

/// Correlation of a stream with itself over pairs j > i only, so the
/// self-pair is never counted while distinct simultaneous events are.
CorrelationHistogram auto_correlate(const EventStream& a, const CorrelationConfig& config);

/// Splits the acquisition into time chunks of `chunk` ticks, correlates each
/// chunk of stream a against the overlapping part of stream b, and merges.
/// Per-chunk totals and durations partition the full ones.
CorrelationHistogram cross_correlate_chunked(const EventStream& a, const EventStream& b,
                                             const CorrelationConfig& config, Tick chunk);

/// Element-wise sum of counts, totals and durations. Throws ConfigError on
/// mismatched configurations.
CorrelationHistogram merge_histograms(const CorrelationHistogram& h1, const CorrelationHistogram& h2);

/// Adds pairs of one block of stream a into `counts`. Exposed for the
/// benchmark and the kernels; `b` must be the full (sorted) stream b.
void accumulate_pairs(std::span<const Tick> a, std::span<const Tick> b,
                      const CorrelationConfig& config, std::span<std::uint64_t> counts);

struct G2Point {
  Seconds tau;
  double g2 = 0.0;
  double sigma = 0.0;
};

struct G2Curve {
  Seconds bin_width;
  std::vector<G2Point> points;
};

/// g2_k = C_k T / (n_a n_b w); sigma_k = sqrt(max(C_k, 1)) T / (n_a n_b w).
/// Throws ConfigError when a total or the duration is zero.
G2Curve normalize_g2(const CorrelationHistogram& h);

/// `tau_ps,counts,g2,sigma`, one row per bin, LF line endings. tau_ps is the
/// bin center.
void write_histogram_csv(const CorrelationHistogram& h, std::ostream& out);

/// Parses the CSV export back into a curve. The bin width is the spacing of
/// the tau column. Throws FormatError with the line number on bad input.
G2Curve read_g2_csv(std::istream& in);

}  // namespace hbt
