#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "approx.hpp"
#include "hbt/errors.hpp"
#include "hbt/estimator.hpp"
#include "oracles.hpp"

using namespace hbt;

namespace {

// Composite Simpson average of g2_model over [lo, hi), split at the kink.
double quadrature_average(double lo, double hi, const G2Params& p) {
  auto simpson = [&](double a, double b) {
    const int n = 2000;
    const double h = (b - a) / n;
    double acc = g2_model(seconds(a), p) + g2_model(seconds(b), p);
    for (int i = 1; i < n; ++i) {
      acc += (i % 2 ? 4.0 : 2.0) * g2_model(seconds(a + i * h), p);
    }
    return acc * h / 3.0;
  };
  const double t0 = p.delay.value();
  double total = 0.0;
  if (t0 > lo && t0 < hi) {
    total = simpson(lo, t0) + simpson(t0, hi);
  } else {
    total = simpson(lo, hi);
  }
  return total / (hi - lo);
}

// Bins [start + k w, start + (k+1) w) holding exact bin averages.
G2Curve noiseless_curve(const G2Params& p, double w, double start, int n) {
  G2Curve c;
  c.bin_width = seconds(w);
  for (int k = 0; k < n; ++k) {
    const double lo = start + k * w;
    c.points.push_back({seconds(lo + 0.5 * w), quadrature_average(lo, lo + w, p), 1e-3});
  }
  return c;
}

// Poisson counts around `per_bin` times the bin average, normalized back.
G2Curve poisson_curve(std::mt19937_64& rng, const G2Params& p, double w, double start, int n, double per_bin) {
  G2Curve c;
  c.bin_width = seconds(w);
  for (int k = 0; k < n; ++k) {
    const double lo = start + k * w;
    const double mean = per_bin * bin_integrated_g2(seconds(lo), seconds(lo + w), p).value;
    const auto counts = static_cast<double>(std::poisson_distribution<std::int64_t>(mean)(rng));
    c.points.push_back({seconds(lo + 0.5 * w), counts / per_bin, std::sqrt(std::max(counts, 1.0)) / per_bin});
  }
  return c;
}

// Parameters of the short-range figure: 40 ps bins over +-10 ns.
const G2Params kShortRange{1.0, 0.6, nanoseconds(0.606), nanoseconds(1.03)};

}  // namespace

TEST_CASE("bin model value matches numerical quadrature") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const G2Params p{0.5 + u(rng), 2.0 * u(rng), nanoseconds(20 * u(rng) - 10), nanoseconds(0.2 + 30 * u(rng))};
    const double lo = (40 * u(rng) - 20) * 1e-9;
    const double hi = lo + (0.01 + 5 * u(rng)) * 1e-9;
    CHECK(bin_integrated_g2(seconds(lo), seconds(hi), p).value ==
          approx(quadrature_average(lo, hi, p)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(bin_integrated_g2(seconds(0), seconds(1e-9), {1, 1, seconds(0), seconds(0)}), DomainError);
  CHECK_THROWS_AS(bin_integrated_g2(seconds(1e-9), seconds(1e-9), kShortRange), DomainError);
}

TEST_CASE("analytic Jacobian matches central differences") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  while (checked < 100) {
    const G2Params p{0.5 + u(rng), 0.1 + 2.0 * u(rng), nanoseconds(20 * u(rng) - 10), nanoseconds(0.5 + 30 * u(rng))};
    const double w = (0.02 + 2 * u(rng)) * 1e-9;
    const double lo = (40 * u(rng) - 20) * 1e-9;
    const double hi = lo + w;
    // Stay more than one bin away from the kink.
    if (p.delay.value() > lo - w && p.delay.value() < hi + w) {
      continue;
    }
    ++checked;
    const BinModel m = bin_integrated_g2(seconds(lo), seconds(hi), p);
    auto value_with = [&](int which) {
      return [&, which](double x) {
        G2Params q = p;
        switch (which) {
          case 0: q.baseline = x; break;
          case 1: q.amplitude = x; break;
          case 2: q.delay = seconds(x); break;
          default: q.coherence_time = seconds(x); break;
        }
        return bin_integrated_g2(seconds(lo), seconds(hi), q).value;
      };
    };
    const double fd_b = oracle::central_difference(value_with(0), p.baseline, 1e-4);
    // Linear in A, so a large step is exact and beats cancellation.
    const double fd_a = oracle::central_difference(value_with(1), p.amplitude, 0.5);
    const double fd_d = oracle::central_difference(value_with(2), p.delay.value(), 1e-14);
    const double fd_c = oracle::central_difference(value_with(3), p.coherence_time.value(), p.coherence_time.value() * 1e-5);
    CHECK(m.d_baseline == approx(fd_b).epsilon(1e-6));
    CHECK(m.d_amplitude == approx(fd_a).epsilon(1e-6));
    // Derivatives smaller than the finite-difference floor are compared absolutely.
    const double scale_d = p.amplitude / p.coherence_time.value();
    CHECK(std::abs(m.d_delay - fd_d) <= 1e-6 * std::max(std::abs(fd_d), 1e-3 * scale_d));
    CHECK(std::abs(m.d_coherence - fd_c) <= 1e-6 * std::max(std::abs(fd_c), 1e-3 * scale_d));
  }
}

TEST_CASE("noiseless model samples are recovered to 1e-6") {
  const G2Params truth{1.0, 1.0, nanoseconds(5), nanoseconds(10)};
  const auto curve = noiseless_curve(truth, 0.5e-9, -100e-9, 400);
  const FitResult fit = fit_g2(curve);
  REQUIRE(fit.converged);
  CHECK(fit.baseline == approx(1.0).epsilon(1e-6));
  CHECK(fit.amplitude == approx(1.0).epsilon(1e-6));
  CHECK(fit.delay.value() == approx(5e-9).epsilon(1e-6));
  CHECK(fit.coherence_time.value() == approx(10e-9).epsilon(1e-6));
  CHECK(fit.n_points == 400);
  CHECK(fit.n_free_params == 4);
  CHECK(fit.reduced_chi2 >= 0.0);
  CHECK(fit.bin_width.value() == approx(0.5e-9));
}

TEST_CASE("fit result invariants hold on noisy data") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto curve = poisson_curve(rng, kShortRange, 40e-12, -10e-9, 500, 2000);
    const FitResult fit = fit_g2(curve);
    CHECK(fit.converged);
    CHECK(fit.coherence_time.value() > 0.0);
    CHECK(fit.amplitude >= 0.0);
    CHECK(fit.baseline_sigma >= 0.0);
    CHECK(fit.amplitude_sigma >= 0.0);
    CHECK(fit.delay_sigma.value() >= 0.0);
    CHECK(fit.coherence_time_sigma.value() >= 0.0);
    CHECK(fit.reduced_chi2 == approx(fit.chi2 / (fit.n_points - 4)));
  }
}

TEST_CASE("Poisson-noised histograms at short-range statistics") {
  std::mt19937_64 rng(4);
  // Per-bin level giving roughly the quoted 3% uncertainty on tau_c.
  for (int i = 0; i < 10; ++i) {
    CAPTURE(i);
    const auto curve = poisson_curve(rng, kShortRange, 40e-12, -10e-9, 500, 4000);
    const FitResult guess = initial_guess(curve);
    CHECK(std::abs(guess.delay.value() - 0.606e-9) <= 2 * 40e-12);
    const FitResult fit = fit_g2(curve);
    REQUIRE(fit.converged);
    CHECK(fit.coherence_time.value() == approx(1.03e-9).epsilon(0.10));
    CHECK(std::abs(fit.delay.value() - 0.606e-9) <= 0.03e-9);
    CHECK(fit.reduced_chi2 >= 0.8);
    CHECK(fit.reduced_chi2 <= 1.3);
  }
}

TEST_CASE("global time translation shifts only the delay") {
  std::mt19937_64 rng(5);
  auto curve = poisson_curve(rng, kShortRange, 40e-12, -10e-9, 500, 4000);
  const FitResult base = fit_g2(curve);
  for (double shift : {-3.3e-9, 40e-12, 7.77e-9, 1e-6}) {
    CAPTURE(shift);
    G2Curve moved = curve;
    for (auto& pt : moved.points) {
      pt.tau = pt.tau + seconds(shift);
    }
    const FitResult fit = fit_g2(moved);
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.delay.value() - base.delay.value() - shift) < 1e-6 * 40e-12);
    CHECK(fit.baseline == approx(base.baseline).epsilon(1e-6));
    CHECK(fit.amplitude == approx(base.amplitude).epsilon(1e-6));
    CHECK(fit.coherence_time.value() == approx(base.coherence_time.value()).epsilon(1e-6));
    CHECK(fit.chi2 == approx(base.chi2).epsilon(1e-6));
  }
}

TEST_CASE("scaling the excess scales only the amplitude") {
  std::mt19937_64 rng(6);
  const auto curve = poisson_curve(rng, kShortRange, 40e-12, -10e-9, 500, 4000);
  const FitResult base = fit_g2(curve);
  for (double s : {0.25, 0.5, 3.0}) {
    CAPTURE(s);
    G2Curve scaled = curve;
    for (auto& pt : scaled.points) {
      pt.g2 = 1.0 + s * (pt.g2 - 1.0);
      pt.sigma *= s;
    }
    const FitResult fit = fit_g2(scaled);
    REQUIRE(fit.converged);
    CHECK(fit.amplitude == approx(s * base.amplitude).epsilon(1e-6));
    CHECK(fit.baseline - 1.0 == approx(s * (base.baseline - 1.0)).epsilon(1e-4));
    CHECK(fit.delay.value() == approx(base.delay.value()).epsilon(1e-6));
    CHECK(fit.coherence_time.value() == approx(base.coherence_time.value()).epsilon(1e-6));
  }
}

TEST_CASE("initial guess") {
  const G2Params truth{1.0, 1.0, seconds(0), nanoseconds(10)};
  const auto curve = noiseless_curve(truth, 0.5e-9, -100e-9, 400);
  const FitResult g = initial_guess(curve);
  CHECK(g.baseline == approx(1.0).epsilon(0.2));
  CHECK(g.amplitude == approx(1.0).epsilon(0.2));
  CHECK(std::abs(g.delay.value()) <= 0.5e-9);
  CHECK(g.coherence_time.value() == approx(10e-9).epsilon(0.2));
  CHECK(g.amplitude_sigma == 0.0);

  G2Curve flat;
  flat.bin_width = nanoseconds(1);
  for (int k = 0; k < 50; ++k) {
    flat.points.push_back({nanoseconds(k + 0.5), 1.0, 0.01});
  }
  const FitResult f = initial_guess(flat);
  CHECK(f.amplitude == approx(0.01));
  CHECK(f.coherence_time.value() == approx(1e-9));
  CHECK(f.baseline == 1.0);
  CHECK_THROWS_AS(fit_g2(flat), FitError);

  G2Curve tiny = flat;
  tiny.points.resize(7);
  CHECK_THROWS_AS(initial_guess(tiny), FitError);
  CHECK_THROWS_AS(fit_g2(tiny), FitError);
}

TEST_CASE("fit input errors and non-convergence") {
  std::mt19937_64 rng(7);
  auto curve = poisson_curve(rng, kShortRange, 40e-12, -10e-9, 500, 4000);
  G2Curve bad = curve;
  bad.points[3].sigma = 0.0;
  CHECK_THROWS_AS(fit_g2(bad), FitError);
  bad = curve;
  bad.points[3].g2 = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_g2(bad), FitError);

  const FitResult one = fit_g2(curve, {.max_iterations = 1, .tolerance = 1e-10});
  CHECK_FALSE(one.converged);
  CHECK(one.iterations == 1);
  CHECK_THROWS_AS(estimate_range(one), FitError);
  CHECK_THROWS_AS(snr_measure(curve, one, per_second(1e6), seconds(1)), FitError);
}

TEST_CASE("range from delay") {
  FitResult fit;
  fit.converged = true;
  fit.delay = nanoseconds(0.606);
  fit.delay_sigma = nanoseconds(0.008);
  RangeEstimate r = estimate_range(fit);
  CHECK(r.distance.value() == approx(0.0908).epsilon(2e-3));
  CHECK(r.sigma.value() == approx(0.0012).epsilon(0.01));

  fit.delay = seconds(0);
  CHECK(estimate_range(fit).distance.value() == 0.0);

  fit.delay = nanoseconds(6439.73);
  fit.delay_sigma = nanoseconds(0.13);
  r = estimate_range(fit);
  CHECK(std::abs(r.distance.value() - 965.29) < 0.005);
  CHECK(r.sigma.value() == approx(0.02).epsilon(0.03));

  // Linear in the delay uncertainty.
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  const double unit = 299'792'458.0 / 2.0 * 1e-9;
  for (int i = 0; i < 100; ++i) {
    const double s = u(rng);
    fit.delay_sigma = nanoseconds(s);
    CHECK(estimate_range(fit).sigma.value() == approx(s * unit).epsilon(1e-14));
    CHECK(estimate_range(fit, Medium::with_index(1.5)).sigma.value() ==
          approx(s * unit / 1.5).epsilon(1e-14));
  }
}

TEST_CASE("bin attenuation") {
  CHECK(bin_attenuation(seconds(1e-18), nanoseconds(1)) == approx(1.0).epsilon(1e-9));
  CHECK(bin_attenuation(nanoseconds(2), nanoseconds(23.2)) == approx(0.958).epsilon(5e-4));
  CHECK(bin_attenuation(nanoseconds(5), nanoseconds(5)) == approx(1.0 - std::exp(-1.0)).epsilon(1e-14));
  double prev = 1.0;
  for (int k = 1; k < 200; ++k) {
    const double a = bin_attenuation(seconds(std::pow(10.0, -4.0 + 0.04 * k) * 1e-9), nanoseconds(1));
    CHECK(a < prev);
    CHECK(a > 0.0);
    prev = a;
  }
  // Same value as averaging the peak bin of the model directly.
  const G2Params p{1.0, 1.0, seconds(0), nanoseconds(23.2)};
  CHECK(bin_integrated_g2(nanoseconds(-1), nanoseconds(1), p).value - 1.0 ==
        approx(bin_attenuation(nanoseconds(2), nanoseconds(23.2))).epsilon(1e-12));
  CHECK_THROWS_AS(bin_attenuation(seconds(0), nanoseconds(1)), DomainError);
}

TEST_CASE("predicted SNR") {
  CHECK(snr_predict(per_second(1e7), 0.6, nanoseconds(23), milliseconds(1)) == approx(28.77).epsilon(1e-3));
  CHECK(snr_predict(per_second(1e7), 0.6, nanoseconds(23), seconds(0)) == 0.0);
  const double one = snr_predict(per_second(3e6), 0.4, nanoseconds(5), milliseconds(3));
  CHECK(snr_predict(per_second(3e6), 0.4, nanoseconds(5), milliseconds(12)) == approx(2.0 * one).epsilon(1e-14));
  CHECK_THROWS_AS(snr_predict(per_second(-1), 0.6, nanoseconds(23), milliseconds(1)), DomainError);
  CHECK_THROWS_AS(snr_predict(per_second(1), 0.6, nanoseconds(23), milliseconds(-1)), DomainError);
}

TEST_CASE("measured SNR") {
  const G2Params truth{1.0, 0.6, seconds(0), nanoseconds(23)};
  // Exact bin averages from the same model the fit uses.
  G2Curve exact;
  exact.bin_width = nanoseconds(10);
  for (int k = 0; k < 200; ++k) {
    const double lo = -1000e-9 + k * 10e-9;
    exact.points.push_back({seconds(lo + 5e-9), bin_integrated_g2(seconds(lo), seconds(lo + 10e-9), truth).value, 1e-3});
  }
  const FitResult fit = fit_g2(exact);
  REQUIRE(fit.converged);
  const SnrReport r = snr_measure(exact, fit, per_second(1e7), milliseconds(1));
  CHECK_FALSE(r.measured_finite);
  CHECK(std::isinf(r.measured_snr));
  CHECK(r.predicted_snr == approx(snr_predict(per_second(1e7), fit.amplitude, fit.coherence_time, milliseconds(1))));
  CHECK(r.off_peak_bins > 150);
  CHECK(to_json(r)["measured_snr"].is_null());

  // Noisy residuals: amplitude over their scatter.
  std::mt19937_64 rng(9);
  const auto noisy = poisson_curve(rng, truth, 10e-9, -1000e-9, 200, 1e4);
  const FitResult nf = fit_g2(noisy);
  const SnrReport nr = snr_measure(noisy, nf, per_second(1e7), milliseconds(1));
  CHECK(nr.measured_finite);
  CHECK(nr.measured_snr == approx(nf.amplitude / 0.01).epsilon(0.2));

  G2Curve narrow = exact;
  narrow.points.erase(narrow.points.begin(), narrow.points.begin() + 80);
  narrow.points.resize(40);
  const FitResult nfit = fit_g2(narrow);
  CHECK_THROWS_AS(snr_measure(narrow, nfit, per_second(1e7), milliseconds(1)), FitError);
}

TEST_CASE("JSON and key-value export carry the same fields") {
  std::mt19937_64 rng(10);
  const auto curve = poisson_curve(rng, kShortRange, 40e-12, -10e-9, 500, 4000);
  const FitResult fit = fit_g2(curve);
  const auto j = to_json(fit);
  for (const char* key : {"baseline", "amplitude", "delay_s", "delay_sigma_s", "coherence_time_s",
                          "coherence_time_sigma_s", "reduced_chi2", "n_points", "n_free_params", "converged"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["n_points"] == 500);
  const std::string kv = to_key_value(fit);
  std::size_t lines = 0;
  for (char c : kv) {
    lines += c == '\n';
  }
  CHECK(lines == j.size());
  CHECK(kv.find("n_free_params=4\n") != std::string::npos);
  CHECK(kv.find("converged=true\n") != std::string::npos);
}
