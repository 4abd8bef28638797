#include <algorithm>

#include <omp.h>

#include "hbt/correlator.hpp"
#include "hbt/errors.hpp"

namespace hbt {

namespace {

// Below this many events per stream the thread start-up costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 14;

}  // namespace

CorrelationHistogram cross_correlate(const EventStream& a, const EventStream& b,
                                     const CorrelationConfig& config, int threads) {
  if (!a.is_sorted() || !b.is_sorted()) {
    throw PreconditionError("cross_correlate requires sorted streams");
  }
  if ((!a.empty() && a.times.front().count < 0) || (!b.empty() && b.times.front().count < 0)) {
    throw PreconditionError("cross_correlate requires non-negative timestamps");
  }
  CorrelationHistogram h = CorrelationHistogram::empty(config);
  h.n_a = a.size();
  h.n_b = b.size();
  h.duration = std::max(a.duration, b.duration);

  const int n_threads = threads > 0 ? threads : omp_get_max_threads();
  if (n_threads == 1 || a.size() < kParallelThreshold) {
    accumulate_pairs(a.times, b.times, config, h.counts);
    return h;
  }

  // Several blocks per thread keeps the load balanced when pair density
  // varies along the acquisition.
  const std::size_t n_blocks = static_cast<std::size_t>(n_threads) * 4;
  const std::size_t block = (a.size() + n_blocks - 1) / n_blocks;
  const std::size_t n_bins = h.counts.size();
  const std::span<const Tick> all_a(a.times);

#pragma omp parallel num_threads(n_threads)
  {
    std::vector<std::uint64_t> local(n_bins, 0);
#pragma omp for schedule(dynamic, 1)
    for (std::size_t k = 0; k < n_blocks; ++k) {
      const std::size_t first = std::min(k * block, all_a.size());
      const std::size_t last = std::min(first + block, all_a.size());
      if (first < last) {
        accumulate_pairs(all_a.subspan(first, last - first), b.times, config, local);
      }
    }
#pragma omp critical(hbt_histogram_reduce)
    for (std::size_t i = 0; i < n_bins; ++i) {
      h.counts[i] += local[i];
    }
  }
  return h;
}

}  // namespace hbt
