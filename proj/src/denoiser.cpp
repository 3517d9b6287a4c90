#include <cmath>

#include "sharediff/diffusion.hpp"
#include "sharediff/errors.hpp"

namespace sharediff {

ToyWorld::ToyWorld(std::size_t m, std::size_t d, double s, bool identity, std::uint64_t seed)
    : m_(m), d_(d), s_(s), identity_(identity), map_seed_(seed) {
  if (m == 0 || d == 0) throw UsageError("world dimensions must be >= 1");
  if (!(s > 0.0) || !std::isfinite(s)) throw UsageError("target_std must be finite and > 0");
}

ToyWorld ToyWorld::identity(std::size_t dimension, double target_std) {
  ToyWorld w(dimension, dimension, target_std, true, 0);
  w.map_.assign(dimension * dimension, 0.0);
  for (std::size_t i = 0; i < dimension; ++i) w.map_[i * dimension + i] = 1.0;
  return w;
}

ToyWorld ToyWorld::seeded(std::size_t data_dimension, std::size_t embedding_dimension,
                          double target_std, std::uint64_t map_seed) {
  ToyWorld w(data_dimension, embedding_dimension, target_std, false, map_seed);
  w.map_.resize(data_dimension * embedding_dimension);
  for (std::size_t r = 0; r < data_dimension; ++r) {
    auto stream = make_stream(map_seed, StreamTag::kConditionMap, {r});
    const Embedding row = random_unit_vector(embedding_dimension, stream);
    std::copy(row.values().begin(), row.values().end(),
              w.map_.begin() + static_cast<std::ptrdiff_t>(r * embedding_dimension));
  }
  return w;
}

std::vector<double> ToyWorld::target_mean(std::span<const double> condition) const {
  if (condition.size() != d_) {
    throw UsageError("condition has dimension " + std::to_string(condition.size()) +
                     ", world expects " + std::to_string(d_));
  }
  std::vector<double> mu(m_, 0.0);
  for (std::size_t r = 0; r < m_; ++r) {
    mu[r] = dot(std::span<const double>(map_).subspan(r * d_, d_), condition);
  }
  return mu;
}

void posterior_x0(std::span<const double> x, double alpha_bar, std::span<const double> mu,
                  double target_std, std::span<double> out) {
  const double root = std::sqrt(alpha_bar);
  const double var = target_std * target_std;
  const double gain = root * var / (alpha_bar * var + 1.0 - alpha_bar);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = mu[i] + gain * (x[i] - root * mu[i]);
}

std::vector<double> analytic_epsilon(const ToyWorld& world, std::span<const double> x,
                                     double alpha_bar, const Embedding& condition) {
  if (!(alpha_bar > 0.0 && alpha_bar < 1.0)) {
    throw UsageError("analytic_epsilon needs 0 < alpha_bar < 1");
  }
  if (x.size() != world.data_dimension()) throw UsageError("state dimension mismatch");
  const auto mu = world.target_mean(condition);
  std::vector<double> x0(x.size());
  posterior_x0(x, alpha_bar, mu, world.target_std(), x0);
  const double root = std::sqrt(alpha_bar);
  const double noise = std::sqrt(1.0 - alpha_bar);
  std::vector<double> eps(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) eps[i] = (x[i] - root * x0[i]) / noise;
  return eps;
}

void denoise_step(std::span<const double> x, int t, std::span<const double> mu,
                  double target_std, const NoiseSchedule& schedule, RandomStream* noise,
                  std::span<double> out) {
  const double ab = schedule.alpha_bar[t];
  const double root = std::sqrt(ab);
  const double noise_scale = std::sqrt(1.0 - ab);
  const double var = target_std * target_std;
  const double gain = root * var / (ab * var + 1.0 - ab);
  const std::size_t m = x.size();

  if (schedule.variant == SamplerVariant::kDeterministic) {
    const double ab_prev = schedule.alpha_bar[t - 1];
    const double root_prev = std::sqrt(ab_prev);
    const double noise_prev = std::sqrt(1.0 - ab_prev);
    for (std::size_t i = 0; i < m; ++i) {
      const double x0 = mu[i] + gain * (x[i] - root * mu[i]);
      const double eps = (x[i] - root * x0) / noise_scale;
      out[i] = root_prev * x0 + noise_prev * eps;
    }
    return;
  }
  const double a = schedule.a[t];
  const double b = schedule.b[t];
  const double sigma = schedule.sigma[t];
  for (std::size_t i = 0; i < m; ++i) {
    const double x0 = mu[i] + gain * (x[i] - root * mu[i]);
    const double eps = (x[i] - root * x0) / noise_scale;
    out[i] = a * x[i] - b * eps;
    if (sigma > 0.0) out[i] += sigma * noise->normal();
  }
}

std::vector<double> denoise_step(std::span<const double> x, int t, const Embedding& condition,
                                 const NoiseSchedule& schedule, const ToyWorld& world,
                                 RandomStream* noise) {
  if (t < 1 || t > schedule.K) throw UsageError("diffusion time out of range");
  if (x.size() != world.data_dimension()) throw UsageError("state dimension mismatch");
  if (noise == nullptr && schedule.sigma[t] > 0.0) {
    throw UsageError("ancestral step needs a noise stream");
  }
  const auto mu = world.target_mean(condition);
  std::vector<double> out(x.size());
  denoise_step(x, t, mu, world.target_std(), schedule, noise, out);
  return out;
}

}  // namespace sharediff
