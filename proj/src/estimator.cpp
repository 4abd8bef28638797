#include "hbt/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "hbt/errors.hpp"

namespace hbt {

namespace {

// Internal fit coordinates: time in bin widths, relative to the first bin center.
struct Params {
  double baseline;
  double amplitude;
  double delay;
  double coherence;
};

struct Kernel {
  double value;
  double d_delay;
  double d_coherence;
};

// Odd antiderivative S(x) = sign(x) (1 - e^{-k|x|}) / k of e^{-k|x|}, and dS/dk.
inline void antiderivative(double x, double k, double& s, double& ds_dk) {
  const double u = std::abs(x);
  const double e = std::exp(-k * u);
  const double f = -std::expm1(-k * u) / k;
  const double df_dk = u * e / k - f / k;
  const double sign = x < 0.0 ? -1.0 : 1.0;
  s = sign * f;
  ds_dk = sign * df_dk;
}

// Mean of e^{-2|t - t0|/tc} over [lo, hi) with derivatives in t0 and tc.
Kernel bin_kernel(double lo, double hi, double t0, double tc) {
  const double k = 2.0 / tc;
  double s_hi, dk_hi, s_lo, dk_lo;
  antiderivative(hi - t0, k, s_hi, dk_hi);
  antiderivative(lo - t0, k, s_lo, dk_lo);
  const double width = hi - lo;
  Kernel out;
  out.value = (s_hi - s_lo) / width;
  out.d_delay = (std::exp(-k * std::abs(lo - t0)) - std::exp(-k * std::abs(hi - t0))) / width;
  out.d_coherence = (dk_hi - dk_lo) / width * (-k / tc);
  return out;
}

struct Problem {
  std::vector<double> centers;  // bin widths
  std::vector<double> values;
  std::vector<double> weights;  // 1 / sigma^2
  double floor_coherence = 0.01;
};

double chi2_of(const Problem& pr, const Params& p) {
  double chi2 = 0.0;
  for (std::size_t i = 0; i < pr.centers.size(); ++i) {
    const Kernel k = bin_kernel(pr.centers[i] - 0.5, pr.centers[i] + 0.5, p.delay, p.coherence);
    const double r = pr.values[i] - (p.baseline + p.amplitude * k.value);
    chi2 += pr.weights[i] * r * r;
  }
  return chi2;
}

void normal_equations(const Problem& pr, const Params& p, Eigen::Matrix4d& n, Eigen::Vector4d& g) {
  n.setZero();
  g.setZero();
  for (std::size_t i = 0; i < pr.centers.size(); ++i) {
    const Kernel k = bin_kernel(pr.centers[i] - 0.5, pr.centers[i] + 0.5, p.delay, p.coherence);
    const double r = pr.values[i] - (p.baseline + p.amplitude * k.value);
    const Eigen::Vector4d j(1.0, k.value, p.amplitude * k.d_delay, p.amplitude * k.d_coherence);
    n.noalias() += pr.weights[i] * j * j.transpose();
    g.noalias() += pr.weights[i] * r * j;
  }
}

Params clamp(Params p, double floor_coherence) {
  p.amplitude = std::max(p.amplitude, 0.0);
  p.coherence = std::max(p.coherence, floor_coherence);
  return p;
}

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

void check_curve(const G2Curve& curve) {
  if (curve.points.size() < 8) {
    throw FitError("fit needs at least 8 points, got " + std::to_string(curve.points.size()));
  }
  if (!(curve.bin_width.value() > 0.0)) {
    throw FitError("bin width must be positive");
  }
}

}  // namespace

BinModel bin_integrated_g2(Seconds lo, Seconds hi, const G2Params& p) {
  if (!(p.coherence_time.value() > 0.0)) {
    throw DomainError("coherence time must be positive");
  }
  if (!(hi > lo)) {
    throw DomainError("bin must have positive width");
  }
  const Kernel k = bin_kernel(lo.value(), hi.value(), p.delay.value(), p.coherence_time.value());
  BinModel m;
  m.value = p.baseline + p.amplitude * k.value;
  m.d_amplitude = k.value;
  m.d_delay = p.amplitude * k.d_delay;
  m.d_coherence = p.amplitude * k.d_coherence;
  return m;
}

double bin_attenuation(Seconds bin_width, Seconds coherence_time) {
  if (!(bin_width.value() > 0.0) || !(coherence_time.value() > 0.0)) {
    throw DomainError("bin width and coherence time must be positive");
  }
  const double x = bin_width / coherence_time;
  return -std::expm1(-x) / x;
}

double FitResult::peak_g2() const {
  return baseline + amplitude * bin_attenuation(bin_width, coherence_time);
}

FitResult initial_guess(const G2Curve& curve) {
  check_curve(curve);
  const auto& pts = curve.points;
  const std::size_t n = pts.size();
  const double w = curve.bin_width.value();

  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = pts[i].g2;
  }
  const double baseline = median(values);

  std::vector<double> smooth(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= 2 ? i - 2 : 0;
    const std::size_t hi = std::min(n - 1, i + 2);
    double sum = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) {
      sum += values[j];
    }
    smooth[i] = sum / static_cast<double>(hi - lo + 1);
  }
  const auto peak = static_cast<std::size_t>(std::max_element(smooth.begin(), smooth.end()) - smooth.begin());
  const double amplitude = std::max(smooth[peak] - baseline, 0.01);
  const double half = baseline + 0.5 * amplitude;

  // Distance in bins from the peak to the half-maximum crossing, linearly
  // interpolated; runs off the end of the curve count as reaching the edge.
  auto crossing = [&](int dir) {
    std::size_t i = peak;
    for (;;) {
      const bool at_edge = dir < 0 ? i == 0 : i + 1 == n;
      if (at_edge) {
        return static_cast<double>(dir < 0 ? peak : n - 1 - peak);
      }
      const std::size_t next = dir < 0 ? i - 1 : i + 1;
      if (smooth[next] <= half) {
        const double frac = (smooth[i] - half) / (smooth[i] - smooth[next]);
        const double steps = static_cast<double>(dir < 0 ? peak - i : i - peak);
        return steps + std::clamp(frac, 0.0, 1.0);
      }
      i = next;
    }
  };
  const double hwhm_bins = 0.5 * (crossing(-1) + crossing(+1));
  const double coherence = std::max(2.0 * hwhm_bins / std::log(2.0), 1.0) * w;

  FitResult guess;
  guess.baseline = baseline;
  guess.amplitude = amplitude;
  guess.delay = pts[peak].tau;
  guess.coherence_time = Seconds(coherence);
  guess.n_points = n;
  guess.bin_width = curve.bin_width;
  return guess;
}

FitResult fit_g2(const G2Curve& curve, const FitOptions& options) {
  check_curve(curve);
  const double w = curve.bin_width.value();
  const double origin = curve.points.front().tau.value();

  Problem pr;
  pr.centers.reserve(curve.points.size());
  for (const auto& pt : curve.points) {
    if (!(pt.sigma > 0.0) || !std::isfinite(pt.g2)) {
      throw FitError("every point needs a finite value and a positive sigma");
    }
    pr.centers.push_back((pt.tau.value() - origin) / w);
    pr.values.push_back(pt.g2);
    pr.weights.push_back(1.0 / (pt.sigma * pt.sigma));
  }

  const FitResult guess = initial_guess(curve);
  Params p{guess.baseline, guess.amplitude, (guess.delay.value() - origin) / w,
           guess.coherence_time.value() / w};
  double chi2 = chi2_of(pr, p);

  const double tiny = 1e-28 * static_cast<double>(pr.centers.size());
  bool converged = false;
  int iteration = 0;
  Eigen::Matrix4d normal;
  Eigen::Vector4d gradient;
  while (iteration < options.max_iterations) {
    ++iteration;
    if (chi2 <= tiny) {
      converged = true;
      break;
    }
    normal_equations(pr, p, normal, gradient);
    // A trace-scaled ridge keeps the step defined when a column vanishes.
    Eigen::Matrix4d damped = normal;
    damped.diagonal().array() += 1e-12 * normal.diagonal().array().abs().maxCoeff();
    const Eigen::Vector4d step = damped.ldlt().solve(gradient);

    double scale = 1.0;
    bool accepted = false;
    Params trial{};
    double trial_chi2 = 0.0;
    for (int halving = 0; halving < 40; ++halving, scale *= 0.5) {
      trial = clamp({p.baseline + scale * step[0], p.amplitude + scale * step[1],
                     p.delay + scale * step[2], p.coherence + scale * step[3]},
                    pr.floor_coherence);
      trial_chi2 = chi2_of(pr, trial);
      if (trial_chi2 <= chi2) {
        accepted = true;
        break;
      }
    }
    // Levenberg-Marquardt fallback: rotate the step toward steepest descent.
    for (double lambda = 1e-3; !accepted && lambda <= 1e6; lambda *= 10.0) {
      Eigen::Matrix4d lm = normal;
      lm.diagonal() += lambda * normal.diagonal().cwiseAbs();
      const Eigen::Vector4d s = lm.ldlt().solve(gradient);
      trial = clamp({p.baseline + s[0], p.amplitude + s[1], p.delay + s[2], p.coherence + s[3]},
                    pr.floor_coherence);
      trial_chi2 = chi2_of(pr, trial);
      accepted = trial_chi2 <= chi2;
    }
    if (!accepted) {
      // No descent direction left: at the minimum to floating-point resolution.
      converged = true;
      break;
    }
    const double change = (chi2 - trial_chi2) / std::max(chi2, tiny);
    p = trial;
    chi2 = trial_chi2;
    if (change < options.tolerance) {
      converged = true;
      break;
    }
  }

  if (p.coherence <= pr.floor_coherence * (1.0 + 1e-9)) {
    throw FitError("degenerate fit: coherence time collapsed to the floor");
  }
  if (p.amplitude <= 0.0) {
    throw FitError("degenerate fit: no bunching peak (amplitude is zero)");
  }

  normal_equations(pr, p, normal, gradient);
  Eigen::FullPivLU<Eigen::Matrix4d> lu(normal);
  if (!lu.isInvertible()) {
    throw FitError("degenerate fit: singular curvature matrix");
  }
  const Eigen::Matrix4d cov = lu.inverse();

  FitResult out;
  out.baseline = p.baseline;
  out.amplitude = p.amplitude;
  out.delay = Seconds(origin + p.delay * w);
  out.coherence_time = Seconds(p.coherence * w);
  out.baseline_sigma = std::sqrt(std::max(cov(0, 0), 0.0));
  out.amplitude_sigma = std::sqrt(std::max(cov(1, 1), 0.0));
  out.delay_sigma = Seconds(std::sqrt(std::max(cov(2, 2), 0.0)) * w);
  out.coherence_time_sigma = Seconds(std::sqrt(std::max(cov(3, 3), 0.0)) * w);
  out.chi2 = chi2;
  out.n_points = pr.centers.size();
  out.n_free_params = 4;
  out.reduced_chi2 = out.n_points > 4 ? chi2 / static_cast<double>(out.n_points - 4) : 0.0;
  out.converged = converged;
  out.iterations = iteration;
  out.bin_width = curve.bin_width;
  return out;
}

RangeEstimate estimate_range(const FitResult& fit, Medium medium) {
  if (!fit.converged) {
    throw FitError("cannot estimate a range from an unconverged fit");
  }
  return {range_from_delay(fit.delay, medium),
          Meters(constants::speed_of_light * fit.delay_sigma.value() / (2.0 * medium.refractive_index))};
}

}  // namespace hbt
