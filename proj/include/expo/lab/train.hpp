#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <variant>
#include <vector>

#include "expo/lab/world.hpp"

namespace expo::lab {

// Linear scorer s(x) = theta . x with its frozen reference.
struct ToyModel {
  std::vector<double> theta;
  std::vector<double> theta_ref;
};

struct LossResult {
  double loss = 0.0;
  std::vector<double> gradient;
};

// Pairwise logistic preference loss on the policy-vs-reference score margin:
// mean of -log sigmoid(beta * [(theta-ref).x_w - (theta-ref).x_l]), with its
// closed-form gradient.
LossResult dpo_style_loss(const ToyModel& model, const LabWorld& world,
                          std::span<const int> batch, double beta);

struct AdamWParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // decoupled
};
struct AdaGradParams {
  double eps = 1e-10;
};
struct RMSpropParams {
  double decay = 0.99;
  double eps = 1e-8;
};
using OptimizerSpec = std::variant<AdamWParams, AdaGradParams, RMSpropParams>;

const char* optimizer_name(const OptimizerSpec& spec);

class Optimizer {
 public:
  Optimizer(OptimizerSpec spec, std::size_t dim);
  void step(std::span<double> theta, std::span<const double> grad, double lr);
  std::int64_t steps_taken() const { return steps_; }
  const OptimizerSpec& spec() const { return spec_; }

 private:
  OptimizerSpec spec_;
  std::vector<double> m_;  // first moment / squared-gradient accumulator
  std::vector<double> v_;  // second moment (AdamW only)
  std::int64_t steps_ = 0;
};

struct Shuffled {
  std::uint64_t seed = 1;
};
// Pairs sorted by the spurious-feature gap of the winner over the loser,
// largest first, consumed sequentially: partial training then sees the most
// biased samples.
struct BiasSortedDescending {};
using DataOrder = std::variant<Shuffled, BiasSortedDescending>;

struct TrainConfig {
  int steps = 500;
  int batch_size = 4;  // one pass over the default 2000 pairs in 500 steps
  double learning_rate = 0.05;
  double beta = 0.1;
  OptimizerSpec optimizer = AdamWParams{};
  DataOrder order = Shuffled{};
  std::vector<int> snapshot_steps;  // capture theta after these step counts
  bool record_loss = false;
};

struct TrainResult {
  std::vector<double> theta;                       // final
  std::map<int, std::vector<double>> snapshots;    // step -> theta
  std::vector<double> loss_curve;                  // when record_loss
};

// Deterministic in (world, theta0, config). Throws on divergence, naming the
// step. theta_ref is pinned to theta0.
TrainResult train(const LabWorld& world, std::span<const double> theta0,
                  const TrainConfig& config);

// The epoch-order of pair indices implied by the config (exposed for tests).
std::vector<int> epoch_order(const LabWorld& world, const DataOrder& order, int epoch);

}  // namespace expo::lab
