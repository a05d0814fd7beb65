#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace expo::lab {

// Deterministic draws layered over the standard-specified mt19937_64 so that
// worlds are bit-reproducible across library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double normal() {  // Box-Muller, cached pair
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  std::uint64_t next_u64() { return gen_(); }

  // Fisher-Yates with bounded draws.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t next_below(std::uint64_t bound) {  // unbiased rejection sampling
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                (std::numeric_limits<std::uint64_t>::max() % bound);
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % bound;
  }

  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct PreferencePair {
  std::vector<double> winner;
  std::vector<double> loser;
  bool label_flipped = false;  // noise inverted the true ordering
};

struct WorldConfig {
  int dim = 32;            // feature dimension d
  int pool_size = 4;       // candidates per prompt (k)
  int n_pairs = 2000;      // preference pairs
  double label_noise = 0.1;
  int n_eval_prompts = 256;
  std::uint64_t seed = 0;
  int spurious_dim = -1;   // -1: last dimension
};

// A synthetic preference universe: a hidden reward direction (zero on the
// spurious dimension), candidate pools for scoring, and noisy pairwise
// preference data labeled by the hidden reward.
struct LabWorld {
  WorldConfig config;
  int spurious_dim = 0;
  std::vector<double> reward_direction;  // unit norm, zero at spurious_dim
  std::vector<PreferencePair> pairs;
  // Evaluation pools, flattened: prompt p, candidate c -> features at
  // ((p*k + c) * dim), with the true reward of each candidate cached.
  std::vector<double> eval_features;
  std::vector<double> eval_rewards;  // p*k + c

  std::span<const double> eval_candidate(int prompt, int candidate) const {
    const std::size_t off =
        (static_cast<std::size_t>(prompt) * config.pool_size + candidate) * config.dim;
    return {eval_features.data() + off, static_cast<std::size_t>(config.dim)};
  }
  double spurious_gap(const PreferencePair& p) const {
    return p.winner[spurious_dim] - p.loser[spurious_dim];
  }
};

LabWorld make_world(const WorldConfig& config);

// The implicit alignment objective: for each evaluation prompt, softmax the
// model scores over the candidate pool and take the expected true reward;
// averaged over prompts. Smooth in theta.
double true_reward(const LabWorld& world, std::span<const double> theta);

}  // namespace expo::lab
