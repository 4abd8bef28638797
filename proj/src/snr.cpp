#include <cmath>
#include <limits>
#include <sstream>

#include "hbt/errors.hpp"
#include "hbt/estimator.hpp"

namespace hbt {

double snr_predict(Rate rate, double visibility_squared, Seconds coherence_time, Seconds integration) {
  if (rate.value() < 0.0 || visibility_squared < 0.0 || coherence_time.value() < 0.0 ||
      integration.value() < 0.0) {
    throw DomainError("snr_predict inputs must be non-negative");
  }
  return rate.value() * visibility_squared * std::sqrt(coherence_time.value() * integration.value());
}

SnrReport snr_measure(const G2Curve& curve, const FitResult& fit, Rate rate, Seconds integration) {
  if (!fit.converged) {
    throw FitError("SNR measurement needs a converged fit");
  }
  const double half = 0.5 * curve.bin_width.value();
  const double exclusion = 5.0 * fit.coherence_time.value();
  const G2Params params = fit.params();

  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;
  for (const auto& pt : curve.points) {
    if (std::abs(pt.tau.value() - fit.delay.value()) <= exclusion) {
      continue;
    }
    const double model = bin_integrated_g2(pt.tau - Seconds(half), pt.tau + Seconds(half), params).value;
    const double r = pt.g2 - model;
    sum += r;
    sum_sq += r * r;
    ++n;
  }
  if (n < 20) {
    throw FitError("SNR measurement needs at least 20 bins beyond 5 coherence times of the peak, got " +
                   std::to_string(n));
  }
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(sum_sq - static_cast<double>(n) * mean * mean, 0.0) / static_cast<double>(n - 1);
  const double stddev = std::sqrt(var);

  SnrReport report;
  report.rate = rate;
  report.integration = integration;
  report.off_peak_bins = n;
  report.predicted_snr = snr_predict(rate, fit.amplitude, fit.coherence_time, integration);
  // Scatter at the level of rounding in the fit counts as noiseless.
  if (stddev > 1e-9 * std::max(fit.amplitude, 1.0)) {
    report.measured_snr = fit.amplitude / stddev;
  } else {
    report.measured_snr = std::numeric_limits<double>::infinity();
    report.measured_finite = false;
  }
  return report;
}

SnrReport snr_measure(const CorrelationHistogram& h, const FitResult& fit) {
  const Seconds duration = to_seconds(h.duration);
  if (!(duration.value() > 0.0)) {
    throw ConfigError("histogram has zero acquisition time");
  }
  const double rate = std::sqrt(static_cast<double>(h.n_a) * static_cast<double>(h.n_b)) / duration.value();
  return snr_measure(normalize_g2(h), fit, per_second(rate), duration);
}

nlohmann::ordered_json to_json(const FitResult& fit) {
  nlohmann::ordered_json j;
  j["baseline"] = fit.baseline;
  j["baseline_sigma"] = fit.baseline_sigma;
  j["amplitude"] = fit.amplitude;
  j["amplitude_sigma"] = fit.amplitude_sigma;
  j["delay_s"] = fit.delay.value();
  j["delay_sigma_s"] = fit.delay_sigma.value();
  j["coherence_time_s"] = fit.coherence_time.value();
  j["coherence_time_sigma_s"] = fit.coherence_time_sigma.value();
  j["peak_g2"] = fit.peak_g2();
  j["chi2"] = fit.chi2;
  j["reduced_chi2"] = fit.reduced_chi2;
  j["n_points"] = fit.n_points;
  j["n_free_params"] = fit.n_free_params;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["bin_width_s"] = fit.bin_width.value();
  return j;
}

nlohmann::ordered_json to_json(const SnrReport& report) {
  nlohmann::ordered_json j;
  j["predicted_snr"] = report.predicted_snr;
  // JSON has no infinity.
  j["measured_snr"] = report.measured_finite ? nlohmann::ordered_json(report.measured_snr) : nullptr;
  j["measured_finite"] = report.measured_finite;
  j["rate_per_s"] = report.rate.value();
  j["integration_s"] = report.integration.value();
  j["off_peak_bins"] = report.off_peak_bins;
  return j;
}

nlohmann::ordered_json to_json(const RangeEstimate& range) {
  nlohmann::ordered_json j;
  j["distance_m"] = range.distance.value();
  j["distance_sigma_m"] = range.sigma.value();
  return j;
}

std::string to_key_value(const FitResult& fit) {
  std::ostringstream out;
  out.precision(17);
  const nlohmann::ordered_json doc = to_json(fit);
  for (const auto& [key, value] : doc.items()) {
    out << key << '=' << value.dump() << '\n';
  }
  return out.str();
}

}  // namespace hbt
