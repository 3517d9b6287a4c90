#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "sharediff/diffusion.hpp"
#include "sharediff/errors.hpp"

using namespace sharediff;

namespace {

// Least-squares fit of eps on x_t over Monte-Carlo draws; returns the fitted
// value and its standard error at `x_query`.
struct RegressionEstimate {
  double value;
  double stderr_;
};

RegressionEstimate regress_epsilon(double mu, double s, double alpha_bar, double x_query,
                                   int samples, std::uint64_t seed) {
  RandomStream rng(seed, 99);
  std::vector<double> xs(samples), es(samples);
  double mx = 0, me = 0;
  for (int i = 0; i < samples; ++i) {
    const double x0 = mu + s * rng.normal();
    const double eps = rng.normal();
    xs[i] = std::sqrt(alpha_bar) * x0 + std::sqrt(1 - alpha_bar) * eps;
    es[i] = eps;
    mx += xs[i];
    me += eps;
  }
  mx /= samples;
  me /= samples;
  double sxx = 0, sxe = 0;
  for (int i = 0; i < samples; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxe += (xs[i] - mx) * (es[i] - me);
  }
  const double slope = sxe / sxx;
  const double intercept = me - slope * mx;
  double rss = 0;
  for (int i = 0; i < samples; ++i) {
    const double r = es[i] - intercept - slope * xs[i];
    rss += r * r;
  }
  const double sigma2 = rss / (samples - 2);
  const double se = std::sqrt(sigma2 * (1.0 / samples + (x_query - mx) * (x_query - mx) / sxx));
  return {intercept + slope * x_query, se};
}

}  // namespace

TEST_CASE("schedules start clean and decrease strictly") {
  for (auto curve : {ScheduleCurve::kCosine, ScheduleCurve::kLinearBeta}) {
    for (int K : {1, 2, 10, 40, 1000}) {
      for (auto variant : {SamplerVariant::kDeterministic, SamplerVariant::kAncestral}) {
        const auto s = make_schedule(K, variant, curve);
        REQUIRE(s.alpha_bar.size() == static_cast<std::size_t>(K) + 1);
        CHECK(s.alpha_bar[0] == 1.0);
        for (int t = 1; t <= K; ++t) {
          CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
          CHECK(s.alpha_bar[t] > 0.0);
          CHECK(std::isfinite(s.a[t]));
          CHECK(std::isfinite(s.b[t]));
          CHECK(std::isfinite(s.sigma[t]));
          if (variant == SamplerVariant::kDeterministic) CHECK(s.sigma[t] == 0.0);
        }
      }
    }
  }
  CHECK_THROWS_AS(make_schedule(0, SamplerVariant::kDeterministic, ScheduleCurve::kCosine),
                  UsageError);
}

TEST_CASE("linear-beta over 1000 steps ends near pure noise") {
  // Independent cumulative product of 1 - beta with beta on [1e-4, 0.02].
  double ab = 1.0;
  for (int t = 0; t < 1000; ++t) ab *= 1.0 - (1e-4 + (0.02 - 1e-4) * t / 999.0);
  CHECK(ab < 5e-5);
  const auto s = make_schedule(1000, SamplerVariant::kDeterministic, ScheduleCurve::kLinearBeta);
  CHECK(s.alpha_bar[1000] == doctest::Approx(ab).epsilon(1e-9));
}

TEST_CASE("cosine schedule follows its closed form") {
  const int K = 40;
  const auto s = make_schedule(K, SamplerVariant::kAncestral, ScheduleCurve::kCosine);
  auto f = [](double u) {
    const double c = std::cos((u + 0.008) / 1.008 * std::numbers::pi / 2);
    return c * c;
  };
  for (int t = 1; t < K; ++t) {
    CHECK(s.alpha_bar[t] == doctest::Approx(f(double(t) / K) / f(0)).epsilon(1e-12));
    const double beta = 1 - s.alpha_bar[t] / s.alpha_bar[t - 1];
    CHECK(s.a[t] == doctest::Approx(1 / std::sqrt(1 - beta)));
    CHECK(s.b[t] == doctest::Approx(beta / (std::sqrt(1 - beta) * std::sqrt(1 - s.alpha_bar[t]))));
    CHECK(s.sigma[t] * s.sigma[t] ==
          doctest::Approx(beta * (1 - s.alpha_bar[t - 1]) / (1 - s.alpha_bar[t])));
  }
  CHECK(s.beta[K] == 0.999);
}

TEST_CASE("noise_forward examples") {
  const std::vector<double> x0{4, 0}, eps{0, 2};
  CHECK(noise_forward(x0, 1.0, eps) == x0);
  CHECK(noise_forward(x0, 0.0, eps) == eps);
  const auto x = noise_forward(x0, 0.25, eps);
  CHECK(x[0] == doctest::Approx(2.0));
  CHECK(x[1] == doctest::Approx(std::sqrt(3.0)));
  CHECK_THROWS_AS(noise_forward(x0, 0.5, std::vector<double>{1}), UsageError);
}

TEST_CASE("analytic epsilon for a standard normal target") {
  const auto world = ToyWorld::identity(3, 1.0);
  const Embedding origin({0, 0, 0});
  // The zero condition is allowed here: it only sets the target mean.
  const std::vector<double> x{0.3, -1.2, 2.0};
  for (double ab : {0.9, 0.5, 0.1}) {
    const auto eps = analytic_epsilon(world, x, ab, Embedding({0, 0, 0}));
    for (std::size_t i = 0; i < 3; ++i) CHECK(eps[i] == doctest::Approx(std::sqrt(1 - ab) * x[i]));
  }
  CHECK_THROWS_AS(analytic_epsilon(world, x, 1.0, origin), UsageError);
  CHECK_THROWS_AS(analytic_epsilon(world, x, 0.0, origin), UsageError);
}

TEST_CASE("point-mass posterior ignores the state") {
  std::vector<double> out(2);
  const std::vector<double> mu{0.5, -0.25};
  posterior_x0(std::vector<double>{10, -7}, 0.5, mu, 1e-9, out);
  CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(-0.25).epsilon(1e-12));
}

TEST_CASE("analytic epsilon matches a Monte-Carlo regression") {
  const double mu = 0.7, s = 0.4;
  const auto world = ToyWorld::identity(1, s);
  for (double ab : {0.9, 0.5, 0.1}) {
    for (double xq : {-1.0, 0.2, 1.5}) {
      const auto est = regress_epsilon(mu, s, ab, xq, 100000, 17);
      const double analytic = analytic_epsilon(world, std::vector<double>{xq}, ab, Embedding({mu}))[0];
      CHECK(std::abs(analytic - est.value) <= 3 * est.stderr_);
    }
  }
}

TEST_CASE("deterministic step toward a point mass contracts") {
  const auto world = ToyWorld::identity(2, 1e-9);
  const auto sched = make_schedule(20, SamplerVariant::kDeterministic, ScheduleCurve::kCosine);
  const Embedding cond({0.6, 0.8});
  std::vector<double> x{3.0, -2.0};
  auto dist = [&](const std::vector<double>& v) { return std::hypot(v[0] - 0.6, v[1] - 0.8); };
  for (int t = 20; t >= 1; --t) {
    const auto next = denoise_step(x, t, cond, sched, world, nullptr);
    CHECK(dist(next) < dist(x));
    // The step is c x + (1 - c) q with c = sqrt(1 - ab_{t-1}) / sqrt(1 - ab_t) in
    // [0, 1) and q a positive multiple of the target: x moves along a segment
    // toward the target's ray.
    const double c = std::sqrt(1 - sched.alpha_bar[t - 1]) / std::sqrt(1 - sched.alpha_bar[t]);
    CHECK(c >= 0.0);
    CHECK(c < 1.0);
    const double q0 = (next[0] - c * x[0]) / (1 - c), q1 = (next[1] - c * x[1]) / (1 - c);
    CHECK(q0 * 0.8 - q1 * 0.6 == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
    CHECK(q0 * 0.6 + q1 * 0.8 > 0.0);
    x = next;
  }
  CHECK(dist(x) <= 1e-6);
}

TEST_CASE("ancestral update without noise is the mean update") {
  const auto world = ToyWorld::identity(3, 0.3);
  const auto sched = make_schedule(10, SamplerVariant::kAncestral, ScheduleCurve::kCosine);
  auto zero = sched;
  std::fill(zero.sigma.begin(), zero.sigma.end(), 0.0);
  const Embedding cond({0.1, 0.2, 0.3});
  const std::vector<double> x{1, -1, 0.5};
  for (int t = 1; t <= 10; ++t) {
    const auto out = denoise_step(x, t, cond, zero, world, nullptr);
    const double ab = sched.alpha_bar[t];
    const auto eps = analytic_epsilon(world, x, ab, cond);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(out[i] == doctest::Approx(sched.a[t] * x[i] - sched.b[t] * eps[i]).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(denoise_step(x, 5, cond, sched, world, nullptr), UsageError);
  CHECK_THROWS_AS(denoise_step(x, 0, cond, sched, world, nullptr), UsageError);
}

TEST_CASE("point-mass chains converge to the target mean") {
  // The last step returns the posterior mean, which collapses onto mu.
  const auto world = ToyWorld::identity(4, 1e-12);
  const auto sched = make_schedule(40, SamplerVariant::kDeterministic, ScheduleCurve::kCosine);
  const Embedding cond({0.1, -0.4, 0.9, 0.0});
  std::vector<double> x = initial_noise(3, 0, 4);
  for (int k = 1; k <= 40; ++k) x = denoise_step(x, diffusion_time(k, 40), cond, sched, world, nullptr);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(x[i] - cond[i]) <= 1e-10);
}

TEST_CASE("sampler calibration over many fresh noises") {
  const double s = 0.1;
  const auto world = ToyWorld::identity(2, s);
  const auto sched = make_schedule(1000, SamplerVariant::kDeterministic, ScheduleCurve::kCosine);
  const Embedding cond({0.3, -0.5});
  const int runs = 1000;
  std::vector<double> sum(2, 0.0), sum2(2, 0.0);
  const auto mu = world.target_mean(cond);
  std::vector<double> next(2);
  for (int r = 0; r < runs; ++r) {
    auto x = initial_noise(11, r, 2);
    for (int t = 1000; t >= 1; --t) {
      denoise_step(x, t, mu, s, sched, nullptr, next);
      std::swap(x, next);
    }
    for (std::size_t i = 0; i < 2; ++i) {
      sum[i] += x[i];
      sum2[i] += x[i] * x[i];
    }
  }
  for (std::size_t i = 0; i < 2; ++i) {
    const double mean = sum[i] / runs;
    const double var = sum2[i] / runs - mean * mean;
    CHECK(std::abs(mean - mu[i]) <= 3 * s / std::sqrt(runs));
    CHECK(std::abs(var - s * s) <= 0.15 * s * s);
  }
}

TEST_CASE("seeded condition maps") {
  const auto a = ToyWorld::seeded(3, 5, 0.2, 8);
  const auto b = ToyWorld::seeded(3, 5, 0.2, 8);
  CHECK(std::equal(a.condition_map().begin(), a.condition_map().end(), b.condition_map().begin()));
  for (std::size_t r = 0; r < 3; ++r) {
    double n = 0;
    for (std::size_t j = 0; j < 5; ++j) n += a.condition_map()[r * 5 + j] * a.condition_map()[r * 5 + j];
    CHECK(n == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(a.target_mean(Embedding({1, 0, 0, 0, 0}))[1] == a.condition_map()[5]);
  CHECK_THROWS_AS(a.target_mean(Embedding({1, 0})), UsageError);
  CHECK_THROWS_AS(ToyWorld::identity(2, 0.0), UsageError);
}
