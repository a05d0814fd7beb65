#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "expo/lab/train.hpp"
#include "expo/lab/world.hpp"
#include "expo/search.hpp"
#include "json.hpp"

namespace expo::lab {

struct LabSearchConfig {
  double initial_interval = 1.0;
  double min_interval = 0.1;
  int max_evaluations = 32;
  double smallest_probe = 0.1;
  double threshold = 0.0;
};

struct ExperimentConfig {
  WorldConfig world;  // seed is overridden per run
  TrainConfig train;
  LabSearchConfig search;
  std::vector<double> fractions = {0.1, 0.2, 0.4, 1.0};
  double ablation_fraction = 0.2;  // optimizer runs mirror the 20%-steps setup
};

struct ConditionResult {
  std::string condition;
  std::uint64_t seed = 0;
  double fraction = 1.0;
  double trained_score = 0.0;                  // omega(theta1)
  std::optional<double> optimal_alpha;         // empty = NoImprovement
  std::optional<double> extrapolated_score;    // omega(theta2) when improved
  double spurious_exposure = 0.0;              // theta1 at the spurious dim
  double delta_norm = 0.0;                     // ||theta1 - theta0||
  int evaluations = 0;                         // search cost
};

struct ExperimentReport {
  std::string experiment;
  std::vector<ConditionResult> rows;
  nlohmann::json sidecar;  // config, seeds, optimizer hyperparameters, trends

  void write_csv(std::ostream& os) const;
};

// Scores theta1 + alpha * (theta1 - theta0) with the true-reward objective.
CandidateFn reward_along_delta(const LabWorld& world, std::vector<double> theta0,
                               std::vector<double> theta1);

SearchTrace search_along_delta(const LabWorld& world, std::span<const double> theta0,
                               std::span<const double> theta1, const LabSearchConfig& cfg);

struct GammaPoint {
  double gamma = 0.0;
  double score = 0.0;
  double theta_norm = 0.0;
};

// omega along theta0 + gamma * (theta1 - theta0); endpoints evaluate theta0
// and theta1 exactly.
std::vector<GammaPoint> interpolation_sweep(const LabWorld& world,
                                            std::span<const double> theta0,
                                            std::span<const double> theta1,
                                            std::span<const double> gammas);

struct InterpolationCurve {
  std::uint64_t seed = 0;
  std::vector<GammaPoint> points;
  double spearman = 0.0;  // rank correlation of gamma vs score
};

double spearman_correlation(std::span<const double> x, std::span<const double> y);

ExperimentReport run_varying_steps_experiment(const ExperimentConfig& config,
                                              std::span<const std::uint64_t> seeds);
ExperimentReport run_bias_experiment(const ExperimentConfig& config,
                                     std::span<const std::uint64_t> seeds);
ExperimentReport run_optimizer_ablation(const ExperimentConfig& config,
                                        std::span<const std::uint64_t> seeds);
std::vector<InterpolationCurve> run_interpolation_experiment(
    const ExperimentConfig& config, std::span<const std::uint64_t> seeds,
    std::span<const double> gammas);

// Smallest alpha whose score, after some earlier point beat the baseline,
// falls below baseline - margin. The curve must be sorted by alpha.
std::optional<double> detect_collapse(std::span<const CandidatePoint> curve, double baseline,
                                      double margin = 0.0);

nlohmann::json optimizer_hyperparameters(const OptimizerSpec& spec);
nlohmann::json experiment_config_json(const ExperimentConfig& config,
                                      std::span<const std::uint64_t> seeds);

}  // namespace expo::lab
