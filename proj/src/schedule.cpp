#include <algorithm>
#include <cmath>
#include <numbers>

#include "sharediff/diffusion.hpp"
#include "sharediff/errors.hpp"

namespace sharediff {
namespace {

constexpr double kMaxBeta = 0.999;

double cosine_curve(double u) {
  const double c = std::cos((u + 0.008) / 1.008 * std::numbers::pi / 2.0);
  return c * c;
}

}  // namespace

NoiseSchedule make_schedule(int K, SamplerVariant variant, ScheduleCurve curve) {
  if (K < 1) throw UsageError("schedule needs K >= 1");
  NoiseSchedule s;
  s.K = K;
  s.variant = variant;
  s.curve = curve;
  const auto n = static_cast<std::size_t>(K) + 1;
  s.alpha_bar.assign(n, 1.0);
  s.beta.assign(n, 0.0);
  s.a.assign(n, 0.0);
  s.b.assign(n, 0.0);
  s.sigma.assign(n, 0.0);

  if (curve == ScheduleCurve::kCosine) {
    const double f0 = cosine_curve(0.0);
    double prev = 1.0;
    for (int t = 1; t <= K; ++t) {
      const double cur = cosine_curve(static_cast<double>(t) / K) / f0;
      s.beta[t] = std::min(1.0 - cur / prev, kMaxBeta);
      prev = cur;
    }
  } else {
    const double scale = 1000.0 / K;
    const double start = scale * 1e-4;
    const double end = scale * 0.02;
    for (int t = 1; t <= K; ++t) {
      const double beta = K == 1 ? end : start + (end - start) * (t - 1) / (K - 1);
      s.beta[t] = std::min(beta, kMaxBeta);
    }
  }

  for (int t = 1; t <= K; ++t) {
    s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.beta[t]);
    const double keep = std::sqrt(1.0 - s.beta[t]);
    s.a[t] = 1.0 / keep;
    s.b[t] = s.beta[t] / (keep * std::sqrt(1.0 - s.alpha_bar[t]));
    if (variant == SamplerVariant::kAncestral) {
      s.sigma[t] = std::sqrt(s.beta[t] * (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]));
    }
  }
  return s;
}

std::vector<double> noise_forward(std::span<const double> x0, double alpha_bar,
                                  std::span<const double> epsilon) {
  if (x0.size() != epsilon.size()) throw UsageError("noise_forward: dimension mismatch");
  const double signal = std::sqrt(alpha_bar);
  const double noise = std::sqrt(1.0 - alpha_bar);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = signal * x0[i] + noise * epsilon[i];
  return out;
}

}  // namespace sharediff
