#pragma once

// Bunching-peak fit, time-of-flight range and signal-to-noise analysis.

#include <cstddef>
#include <string>

#include <json.hpp>

#include "hbt/correlator.hpp"
#include "hbt/quantities.hpp"

namespace hbt {

struct FitOptions {
  int max_iterations = 200;
  /// Convergence threshold on the relative chi^2 change of an accepted step.
  double tolerance = 1e-10;
};

struct FitResult {
  double baseline = 0.0;
  /// Squared visibility V^2 of the bunching peak.
  double amplitude = 0.0;
  Seconds delay;
  Seconds coherence_time;

  double baseline_sigma = 0.0;
  double amplitude_sigma = 0.0;
  Seconds delay_sigma;
  Seconds coherence_time_sigma;

  double chi2 = 0.0;
  double reduced_chi2 = 0.0;
  std::size_t n_points = 0;
  std::size_t n_free_params = 4;
  bool converged = false;
  int iterations = 0;
  Seconds bin_width;

  G2Params params() const { return {baseline, amplitude, delay, coherence_time}; }
  /// Value a bin of the fitted width centered on the peak would read:
  /// B + A * bin_attenuation(bin_width, coherence_time).
  double peak_g2() const;
};

/// Average of the bunching model over [lo, hi) and its partial derivatives,
/// from the closed-form integral of the double-sided exponential.
struct BinModel {
  double value = 0.0;
  double d_baseline = 1.0;
  double d_amplitude = 0.0;
  double d_delay = 0.0;
  double d_coherence = 0.0;
};
BinModel bin_integrated_g2(Seconds lo, Seconds hi, const G2Params& p);

/// Moment-based starting point: median baseline, smoothed maximum for the
/// delay and amplitude, half width at half maximum for the coherence time.
/// No uncertainties are set. Throws FitError for fewer than 8 points.
FitResult initial_guess(const G2Curve& curve);

/// Weighted least squares of the bin-integrated model by damped Gauss-Newton
/// with step halving. Returns converged == false after max_iterations.
/// Throws FitError for bad input or a degenerate fit (collapsed width, no
/// peak, singular curvature).
FitResult fit_g2(const G2Curve& curve, const FitOptions& options = {});

struct RangeEstimate {
  Meters distance;
  Meters sigma;
};

/// d = c tau0 / (2n) with linearly propagated uncertainty. Throws FitError
/// for an unconverged fit.
RangeEstimate estimate_range(const FitResult& fit, Medium medium = {});

/// Mean of exp(-2|tau|/tau_c) over a bin of width w centered on the peak:
/// (tau_c / w)(1 - exp(-w / tau_c)).
double bin_attenuation(Seconds bin_width, Seconds coherence_time);

/// r V^2 sqrt(tau_c dT). Throws DomainError for negative inputs.
double snr_predict(Rate rate, double visibility_squared, Seconds coherence_time, Seconds integration);

struct SnrReport {
  double predicted_snr = 0.0;
  /// Infinite when the off-peak residual scatter is below 1e-9 of the
  /// amplitude (noiseless input); see measured_finite.
  double measured_snr = 0.0;
  bool measured_finite = true;
  Rate rate;
  Seconds integration;
  std::size_t off_peak_bins = 0;
};

/// Fitted amplitude over the standard deviation of residuals in the
/// off-peak region |tau - tau0| > 5 tau_c, paired with snr_predict for the
/// given detected rate and integration time. Throws FitError for an
/// unconverged fit or fewer than 20 off-peak bins.
SnrReport snr_measure(const G2Curve& curve, const FitResult& fit, Rate rate, Seconds integration);
/// Rate is the geometric mean of the channel rates, integration the duration.
SnrReport snr_measure(const CorrelationHistogram& h, const FitResult& fit);

nlohmann::ordered_json to_json(const FitResult& fit);
nlohmann::ordered_json to_json(const SnrReport& report);
nlohmann::ordered_json to_json(const RangeEstimate& range);
/// `key=value` lines with the same keys as the JSON document.
std::string to_key_value(const FitResult& fit);

}  // namespace hbt
