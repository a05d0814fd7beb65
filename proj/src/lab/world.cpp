#include "expo/lab/world.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace expo::lab {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

LabWorld make_world(const WorldConfig& config) {
  if (config.dim < 2) throw std::invalid_argument("world dim must be >= 2");
  if (config.pool_size < 2) throw std::invalid_argument("candidate pool size must be >= 2");
  if (config.n_pairs < 1) throw std::invalid_argument("n_pairs must be >= 1");
  if (!(config.label_noise >= 0.0 && config.label_noise < 0.5)) {
    throw std::invalid_argument("label noise must lie in [0, 0.5)");
  }
  if (config.n_eval_prompts < 1) throw std::invalid_argument("n_eval_prompts must be >= 1");

  LabWorld world;
  world.config = config;
  world.spurious_dim = config.spurious_dim < 0 ? config.dim - 1 : config.spurious_dim;
  if (world.spurious_dim >= config.dim) {
    throw std::invalid_argument("spurious dimension out of range");
  }

  Rng rng(config.seed);
  const int d = config.dim;

  // Hidden reward direction; the spurious feature carries no true reward.
  world.reward_direction.resize(d);
  double norm_sq = 0.0;
  for (int i = 0; i < d; ++i) world.reward_direction[i] = rng.normal();
  world.reward_direction[world.spurious_dim] = 0.0;
  for (double v : world.reward_direction) norm_sq += v * v;
  const double inv_norm = 1.0 / std::sqrt(norm_sq);
  for (double& v : world.reward_direction) v *= inv_norm;

  // Evaluation pools with cached true rewards.
  const int prompts = config.n_eval_prompts;
  const int k = config.pool_size;
  world.eval_features.resize(static_cast<std::size_t>(prompts) * k * d);
  world.eval_rewards.resize(static_cast<std::size_t>(prompts) * k);
  for (std::size_t i = 0; i < world.eval_features.size(); ++i) {
    world.eval_features[i] = rng.normal();
  }
  for (int p = 0; p < prompts; ++p) {
    for (int c = 0; c < k; ++c) {
      world.eval_rewards[static_cast<std::size_t>(p) * k + c] =
          dot(world.eval_candidate(p, c), world.reward_direction);
    }
  }

  // Preference pairs: winner by the hidden reward, then flip a noise fraction.
  world.pairs.reserve(config.n_pairs);
  for (int i = 0; i < config.n_pairs; ++i) {
    std::vector<double> a(d), b(d);
    for (int j = 0; j < d; ++j) a[j] = rng.normal();
    for (int j = 0; j < d; ++j) b[j] = rng.normal();
    const double ra = dot(a, world.reward_direction);
    const double rb = dot(b, world.reward_direction);
    PreferencePair pair;
    if (ra >= rb) {
      pair.winner = std::move(a);
      pair.loser = std::move(b);
    } else {
      pair.winner = std::move(b);
      pair.loser = std::move(a);
    }
    if (rng.uniform() < config.label_noise) {
      std::swap(pair.winner, pair.loser);
      pair.label_flipped = true;
    }
    world.pairs.push_back(std::move(pair));
  }
  return world;
}

double true_reward(const LabWorld& world, std::span<const double> theta) {
  const int prompts = world.config.n_eval_prompts;
  const int k = world.config.pool_size;
  double total = 0.0;
  std::vector<double> logits(k);
  for (int p = 0; p < prompts; ++p) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      logits[c] = dot(world.eval_candidate(p, c), theta);
      if (logits[c] > max_logit) max_logit = logits[c];
    }
    double z = 0.0;
    double weighted = 0.0;
    for (int c = 0; c < k; ++c) {
      const double w = std::exp(logits[c] - max_logit);
      z += w;
      weighted += w * world.eval_rewards[static_cast<std::size_t>(p) * k + c];
    }
    total += weighted / z;
  }
  return total / prompts;
}

}  // namespace expo::lab
