#include "expo/lab/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace expo::lab {

namespace {

double stable_softplus(double x) {  // log(1 + e^x)
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

LossResult dpo_style_loss(const ToyModel& model, const LabWorld& world,
                          std::span<const int> batch, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
  const std::size_t d = model.theta.size();
  LossResult result;
  result.gradient.assign(d, 0.0);
  if (batch.empty()) return result;

  for (int idx : batch) {
    const PreferencePair& pair = world.pairs[idx];
    double margin = 0.0;  // (theta - ref) . (x_w - x_l)
    for (std::size_t i = 0; i < d; ++i) {
      margin += (model.theta[i] - model.theta_ref[i]) * (pair.winner[i] - pair.loser[i]);
    }
    const double u = beta * margin;
    result.loss += stable_softplus(-u);
    const double coeff = -sigmoid(-u) * beta;  // d/du of -log sigmoid(u), chain rule
    for (std::size_t i = 0; i < d; ++i) {
      result.gradient[i] += coeff * (pair.winner[i] - pair.loser[i]);
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  result.loss *= inv;
  for (double& g : result.gradient) g *= inv;
  return result;
}

const char* optimizer_name(const OptimizerSpec& spec) {
  if (std::holds_alternative<AdamWParams>(spec)) return "adamw";
  if (std::holds_alternative<AdaGradParams>(spec)) return "adagrad";
  return "rmsprop";
}

Optimizer::Optimizer(OptimizerSpec spec, std::size_t dim) : spec_(std::move(spec)) {
  m_.assign(dim, 0.0);
  if (std::holds_alternative<AdamWParams>(spec_)) v_.assign(dim, 0.0);
}

void Optimizer::step(std::span<double> theta, std::span<const double> grad, double lr) {
  ++steps_;
  if (const auto* adamw = std::get_if<AdamWParams>(&spec_)) {
    const double bc1 = 1.0 - std::pow(adamw->beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(adamw->beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m_[i] = adamw->beta1 * m_[i] + (1.0 - adamw->beta1) * grad[i];
      v_[i] = adamw->beta2 * v_[i] + (1.0 - adamw->beta2) * grad[i] * grad[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      theta[i] -= lr * (mhat / (std::sqrt(vhat) + adamw->eps) + adamw->weight_decay * theta[i]);
    }
  } else if (const auto* adagrad = std::get_if<AdaGradParams>(&spec_)) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m_[i] += grad[i] * grad[i];
      theta[i] -= lr * grad[i] / (std::sqrt(m_[i]) + adagrad->eps);
    }
  } else {
    const auto& rms = std::get<RMSpropParams>(spec_);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m_[i] = rms.decay * m_[i] + (1.0 - rms.decay) * grad[i] * grad[i];
      theta[i] -= lr * grad[i] / (std::sqrt(m_[i]) + rms.eps);
    }
  }
}

std::vector<int> epoch_order(const LabWorld& world, const DataOrder& order, int epoch) {
  std::vector<int> idx(world.pairs.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (const auto* shuffled = std::get_if<Shuffled>(&order)) {
    Rng rng(shuffled->seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(epoch));
    rng.shuffle(idx);
  } else {
    std::stable_sort(idx.begin(), idx.end(), [&world](int a, int b) {
      return world.spurious_gap(world.pairs[a]) > world.spurious_gap(world.pairs[b]);
    });
  }
  return idx;
}

TrainResult train(const LabWorld& world, std::span<const double> theta0,
                  const TrainConfig& config) {
  if (config.steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (config.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(config.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (static_cast<int>(theta0.size()) != world.config.dim) {
    throw std::invalid_argument("theta0 dimension does not match the world");
  }

  ToyModel model;
  model.theta.assign(theta0.begin(), theta0.end());
  model.theta_ref.assign(theta0.begin(), theta0.end());

  Optimizer opt(config.optimizer, model.theta.size());
  TrainResult result;

  std::vector<int> order;
  std::size_t cursor = 0;
  int epoch = 0;
  std::vector<int> batch(config.batch_size);

  for (int step = 1; step <= config.steps; ++step) {
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        order = epoch_order(world, config.order, epoch++);
        cursor = 0;
      }
      batch[b] = order[cursor++];
    }
    const LossResult loss = dpo_style_loss(model, world, batch, config.beta);
    opt.step(model.theta, loss.gradient, config.learning_rate);
    if (config.record_loss) result.loss_curve.push_back(loss.loss);

    for (double v : model.theta) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("training diverged: non-finite parameters at step " +
                                 std::to_string(step));
      }
    }
    if (std::find(config.snapshot_steps.begin(), config.snapshot_steps.end(), step) !=
        config.snapshot_steps.end()) {
      result.snapshots.emplace(step, model.theta);
    }
  }
  if (std::find(config.snapshot_steps.begin(), config.snapshot_steps.end(), 0) !=
      config.snapshot_steps.end()) {
    result.snapshots.emplace(0, std::vector<double>(theta0.begin(), theta0.end()));
  }
  result.theta = std::move(model.theta);
  return result;
}

}  // namespace expo::lab
