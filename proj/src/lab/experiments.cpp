#include "expo/lab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace expo::lab {

namespace {

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double vector_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::string percent_label(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g%%", fraction * 100.0);
  return buf;
}

int fraction_steps(double fraction, int full_steps) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("training fractions must lie in (0, 1]");
  }
  const int steps = static_cast<int>(std::lround(fraction * full_steps));
  return std::max(steps, 1);
}

ConditionResult make_row(const LabWorld& world, const std::string& condition,
                         std::uint64_t seed, double fraction,
                         std::span<const double> theta0, std::span<const double> theta1,
                         const LabSearchConfig& search_cfg) {
  ConditionResult row;
  row.condition = condition;
  row.seed = seed;
  row.fraction = fraction;
  row.trained_score = true_reward(world, theta1);
  row.spurious_exposure = theta1[world.spurious_dim];
  std::vector<double> delta(theta1.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = theta1[i] - theta0[i];
  row.delta_norm = vector_norm(delta);

  const SearchTrace trace = search_along_delta(world, theta0, theta1, search_cfg);
  row.evaluations = static_cast<int>(trace.evaluated.size());
  if (trace.optimal) {
    row.optimal_alpha = trace.optimal->alpha;
    row.extrapolated_score = trace.optimal->score;
  }
  return row;
}

TrainConfig with_steps(TrainConfig cfg, int steps) {
  cfg.steps = steps;
  cfg.snapshot_steps.clear();
  return cfg;
}

}  // namespace

CandidateFn reward_along_delta(const LabWorld& world, std::vector<double> theta0,
                               std::vector<double> theta1) {
  return [&world, theta0 = std::move(theta0), theta1 = std::move(theta1)](double alpha) {
    std::vector<double> theta2(theta1.size());
    for (std::size_t i = 0; i < theta1.size(); ++i) {
      theta2[i] = theta1[i] + alpha * (theta1[i] - theta0[i]);
    }
    CandidatePoint p;
    p.alpha = alpha;
    p.score = true_reward(world, theta2);
    p.aux["theta_norm"] = vector_norm(theta2);
    return p;
  };
}

SearchTrace search_along_delta(const LabWorld& world, std::span<const double> theta0,
                               std::span<const double> theta1, const LabSearchConfig& cfg) {
  AdaptiveConfig ac;
  ac.initial_interval = cfg.initial_interval;
  ac.min_interval = cfg.min_interval;
  ac.max_evaluations = cfg.max_evaluations;
  ac.smallest_probe = cfg.smallest_probe;
  SearchOpts opts;
  opts.threshold = cfg.threshold;
  return adaptive_search(
      reward_along_delta(world, std::vector<double>(theta0.begin(), theta0.end()),
                         std::vector<double>(theta1.begin(), theta1.end())),
      ac, opts);
}

std::vector<GammaPoint> interpolation_sweep(const LabWorld& world,
                                            std::span<const double> theta0,
                                            std::span<const double> theta1,
                                            std::span<const double> gammas) {
  std::vector<GammaPoint> curve;
  curve.reserve(gammas.size());
  std::vector<double> theta(theta0.size());
  for (double g : gammas) {
    if (!(g >= 0.0 && g <= 1.0)) {
      throw std::invalid_argument("interpolation gammas must lie in [0, 1]");
    }
    if (g == 0.0) {
      theta.assign(theta0.begin(), theta0.end());
    } else if (g == 1.0) {
      theta.assign(theta1.begin(), theta1.end());
    } else {
      for (std::size_t i = 0; i < theta.size(); ++i) {
        theta[i] = (1.0 - g) * theta0[i] + g * theta1[i];
      }
    }
    curve.push_back({g, true_reward(world, theta), vector_norm(theta)});
  }
  return curve;
}

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) return 0.0;
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&v](std::size_t a, std::size_t b) {
      return v[a] < v[b];
    });
    std::vector<double> rank(v.size());
    for (std::size_t pos = 0; pos < idx.size();) {
      std::size_t end = pos;
      while (end + 1 < idx.size() && v[idx[end + 1]] == v[idx[pos]]) ++end;
      const double mean_rank = (static_cast<double>(pos) + static_cast<double>(end)) / 2.0;
      for (std::size_t i = pos; i <= end; ++i) rank[idx[i]] = mean_rank;
      pos = end + 1;
    }
    return rank;
  };
  const std::vector<double> rx = ranks(x);
  const std::vector<double> ry = ranks(y);
  double mean = (static_cast<double>(n) - 1.0) / 2.0;
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (rx[i] - mean) * (ry[i] - mean);
    dx += (rx[i] - mean) * (rx[i] - mean);
    dy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (dx == 0.0 || dy == 0.0) return 0.0;
  return num / std::sqrt(dx * dy);
}

nlohmann::json optimizer_hyperparameters(const OptimizerSpec& spec) {
  nlohmann::json j;
  j["name"] = optimizer_name(spec);
  if (const auto* adamw = std::get_if<AdamWParams>(&spec)) {
    j["beta1"] = adamw->beta1;
    j["beta2"] = adamw->beta2;
    j["eps"] = adamw->eps;
    j["weight_decay"] = adamw->weight_decay;
  } else if (const auto* adagrad = std::get_if<AdaGradParams>(&spec)) {
    j["eps"] = adagrad->eps;
  } else {
    const auto& rms = std::get<RMSpropParams>(spec);
    j["decay"] = rms.decay;
    j["eps"] = rms.eps;
  }
  return j;
}

nlohmann::json experiment_config_json(const ExperimentConfig& config,
                                      std::span<const std::uint64_t> seeds) {
  nlohmann::json j;
  j["world"] = {{"dim", config.world.dim},
                {"pool_size", config.world.pool_size},
                {"n_pairs", config.world.n_pairs},
                {"label_noise", config.world.label_noise},
                {"n_eval_prompts", config.world.n_eval_prompts},
                {"spurious_dim", config.world.spurious_dim}};
  j["train"] = {{"steps", config.train.steps},
                {"batch_size", config.train.batch_size},
                {"learning_rate", config.train.learning_rate},
                {"beta", config.train.beta},
                {"optimizer", optimizer_hyperparameters(config.train.optimizer)}};
  j["search"] = {{"initial_interval", config.search.initial_interval},
                 {"min_interval", config.search.min_interval},
                 {"max_evaluations", config.search.max_evaluations},
                 {"smallest_probe", config.search.smallest_probe},
                 {"threshold", config.search.threshold}};
  j["fractions"] = config.fractions;
  j["seeds"] = std::vector<std::uint64_t>(seeds.begin(), seeds.end());
  return j;
}

void ExperimentReport::write_csv(std::ostream& os) const {
  os << "condition,seed,fraction,trained_score,optimal_alpha,extrapolated_score,"
        "spurious_exposure,delta_norm,evaluations\n";
  for (const ConditionResult& row : rows) {
    os << row.condition << ',' << row.seed << ',' << format_value(row.fraction) << ','
       << format_value(row.trained_score) << ',';
    if (row.optimal_alpha) {
      os << format_value(*row.optimal_alpha) << ',' << format_value(*row.extrapolated_score);
    } else {
      os << "N/A,N/A";
    }
    os << ',' << format_value(row.spurious_exposure) << ',' << format_value(row.delta_norm)
       << ',' << row.evaluations << '\n';
  }
}

ExperimentReport run_varying_steps_experiment(const ExperimentConfig& config,
                                              std::span<const std::uint64_t> seeds) {
  ExperimentReport report;
  report.experiment = "varying-steps";

  for (std::uint64_t seed : seeds) {
    WorldConfig wc = config.world;
    wc.seed = seed;
    const LabWorld world = make_world(wc);
    const std::vector<double> theta0(wc.dim, 0.0);

    TrainConfig tc = config.train;
    tc.order = Shuffled{seed + 1};
    std::vector<int> snapshot_steps;
    for (double f : config.fractions) snapshot_steps.push_back(fraction_steps(f, tc.steps));
    tc.snapshot_steps = snapshot_steps;
    tc.steps = *std::max_element(snapshot_steps.begin(), snapshot_steps.end());
    const TrainResult trained = train(world, theta0, tc);

    for (std::size_t i = 0; i < config.fractions.size(); ++i) {
      const double fraction = config.fractions[i];
      const std::vector<double>& theta1 = trained.snapshots.at(snapshot_steps[i]);
      report.rows.push_back(make_row(world, "dpo_" + percent_label(fraction), seed, fraction,
                                     theta0, theta1, config.search));
    }
  }

  // Trend summary: per seed, does the extrapolated 20% model reach the
  // trained 100% model, and is the optimal alpha weakly decreasing in the
  // training fraction (NoImprovement counted as alpha = 0)?
  nlohmann::json trends;
  int seeds_with_expo20_ge_full = 0;
  int seeds_with_weakly_decreasing_alpha = 0;
  for (std::uint64_t seed : seeds) {
    std::vector<const ConditionResult*> rows;
    for (const ConditionResult& r : report.rows) {
      if (r.seed == seed) rows.push_back(&r);
    }
    std::sort(rows.begin(), rows.end(), [](const ConditionResult* a, const ConditionResult* b) {
      return a->fraction < b->fraction;
    });
    const ConditionResult* r20 = nullptr;
    const ConditionResult* rfull = nullptr;
    for (const ConditionResult* r : rows) {
      if (std::abs(r->fraction - 0.2) < 1e-9) r20 = r;
      if (std::abs(r->fraction - 1.0) < 1e-9) rfull = r;
    }
    if (r20 && rfull) {
      const double expo20 = r20->extrapolated_score.value_or(r20->trained_score);
      if (expo20 >= rfull->trained_score) ++seeds_with_expo20_ge_full;
    }
    bool weakly_decreasing = true;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const double prev = rows[i - 1]->optimal_alpha.value_or(0.0);
      const double curr = rows[i]->optimal_alpha.value_or(0.0);
      if (curr > prev + 1e-12) weakly_decreasing = false;
    }
    if (weakly_decreasing) ++seeds_with_weakly_decreasing_alpha;
  }
  trends["seeds"] = seeds.size();
  trends["expo20_matches_full_training"] = seeds_with_expo20_ge_full;
  trends["weakly_decreasing_alpha"] = seeds_with_weakly_decreasing_alpha;

  report.sidecar = experiment_config_json(config, seeds);
  report.sidecar["experiment"] = report.experiment;
  report.sidecar["trends"] = trends;
  return report;
}

ExperimentReport run_bias_experiment(const ExperimentConfig& config,
                                     std::span<const std::uint64_t> seeds) {
  ExperimentReport report;
  report.experiment = "bias";

  for (std::uint64_t seed : seeds) {
    WorldConfig wc = config.world;
    wc.seed = seed;
    const LabWorld world = make_world(wc);
    const std::vector<double> theta0(wc.dim, 0.0);

    for (const bool biased : {false, true}) {
      TrainConfig tc = config.train;
      if (biased) {
        tc.order = BiasSortedDescending{};
      } else {
        tc.order = Shuffled{seed + 1};
      }
      std::vector<int> snapshot_steps;
      for (double f : config.fractions) snapshot_steps.push_back(fraction_steps(f, tc.steps));
      tc.snapshot_steps = snapshot_steps;
      tc.steps = *std::max_element(snapshot_steps.begin(), snapshot_steps.end());
      const TrainResult trained = train(world, theta0, tc);

      for (std::size_t i = 0; i < config.fractions.size(); ++i) {
        const double fraction = config.fractions[i];
        const std::vector<double>& theta1 = trained.snapshots.at(snapshot_steps[i]);
        const std::string label =
            std::string(biased ? "bias_sorted_" : "shuffled_") + percent_label(fraction);
        report.rows.push_back(
            make_row(world, label, seed, fraction, theta0, theta1, config.search));
      }
    }
  }

  // Trend summary at each matched fraction: biased alpha strictly smaller
  // (NoImprovement = 0) and biased extrapolated score no higher.
  nlohmann::json trends;
  trends["seeds"] = seeds.size();
  trends["per_fraction"] = nlohmann::json::object();
  int no_improvement_rows = 0;
  for (const ConditionResult& r : report.rows) {
    if (!r.optimal_alpha) ++no_improvement_rows;
  }
  for (double fraction : config.fractions) {
    int smaller_alpha = 0;
    int no_higher_score = 0;
    for (std::uint64_t seed : seeds) {
      const ConditionResult* biased = nullptr;
      const ConditionResult* shuffled = nullptr;
      for (const ConditionResult& r : report.rows) {
        if (r.seed != seed || std::abs(r.fraction - fraction) > 1e-9) continue;
        if (r.condition.rfind("bias_sorted_", 0) == 0) biased = &r;
        if (r.condition.rfind("shuffled_", 0) == 0) shuffled = &r;
      }
      if (!biased || !shuffled) continue;
      const double alpha_b = biased->optimal_alpha.value_or(0.0);
      const double alpha_s = shuffled->optimal_alpha.value_or(0.0);
      if (alpha_b < alpha_s) ++smaller_alpha;
      const double score_b = biased->extrapolated_score.value_or(biased->trained_score);
      const double score_s = shuffled->extrapolated_score.value_or(shuffled->trained_score);
      if (score_b <= score_s) ++no_higher_score;
    }
    trends["per_fraction"][percent_label(fraction)] = {
        {"bias_alpha_strictly_smaller", smaller_alpha},
        {"bias_score_no_higher", no_higher_score}};
  }
  trends["no_improvement_rows"] = no_improvement_rows;

  report.sidecar = experiment_config_json(config, seeds);
  report.sidecar["experiment"] = report.experiment;
  report.sidecar["trends"] = trends;
  return report;
}

ExperimentReport run_optimizer_ablation(const ExperimentConfig& config,
                                        std::span<const std::uint64_t> seeds) {
  ExperimentReport report;
  report.experiment = "optimizers";
  const std::vector<OptimizerSpec> optimizers = {AdamWParams{}, AdaGradParams{}, RMSpropParams{}};

  for (std::uint64_t seed : seeds) {
    WorldConfig wc = config.world;
    wc.seed = seed;
    const LabWorld world = make_world(wc);
    const std::vector<double> theta0(wc.dim, 0.0);
    const int steps = fraction_steps(config.ablation_fraction, config.train.steps);

    for (const OptimizerSpec& opt : optimizers) {
      TrainConfig tc = with_steps(config.train, steps);
      tc.order = Shuffled{seed + 1};
      tc.optimizer = opt;
      const TrainResult trained = train(world, theta0, tc);
      report.rows.push_back(make_row(world, optimizer_name(opt), seed,
                                     config.ablation_fraction, theta0, trained.theta,
                                     config.search));
    }
  }

  nlohmann::json trends;
  trends["seeds"] = seeds.size();
  int adagrad_no_faster = 0;
  for (std::uint64_t seed : seeds) {
    const ConditionResult* adamw = nullptr;
    const ConditionResult* adagrad = nullptr;
    for (const ConditionResult& r : report.rows) {
      if (r.seed != seed) continue;
      if (r.condition == "adamw") adamw = &r;
      if (r.condition == "adagrad") adagrad = &r;
    }
    if (adamw && adagrad && adagrad->trained_score <= adamw->trained_score) ++adagrad_no_faster;
  }
  trends["adagrad_trained_not_above_adamw"] = adagrad_no_faster;

  report.sidecar = experiment_config_json(config, seeds);
  report.sidecar["experiment"] = report.experiment;
  report.sidecar["trends"] = trends;
  report.sidecar["optimizers"] = nlohmann::json::array();
  for (const OptimizerSpec& opt : optimizers) {
    report.sidecar["optimizers"].push_back(optimizer_hyperparameters(opt));
  }
  return report;
}

std::vector<InterpolationCurve> run_interpolation_experiment(
    const ExperimentConfig& config, std::span<const std::uint64_t> seeds,
    std::span<const double> gammas) {
  std::vector<InterpolationCurve> curves;
  for (std::uint64_t seed : seeds) {
    WorldConfig wc = config.world;
    wc.seed = seed;
    const LabWorld world = make_world(wc);
    const std::vector<double> theta0(wc.dim, 0.0);
    TrainConfig tc = config.train;
    tc.order = Shuffled{seed + 1};
    const TrainResult trained = train(world, theta0, tc);

    InterpolationCurve curve;
    curve.seed = seed;
    curve.points = interpolation_sweep(world, theta0, trained.theta, gammas);
    std::vector<double> gs, scores;
    for (const GammaPoint& p : curve.points) {
      gs.push_back(p.gamma);
      scores.push_back(p.score);
    }
    curve.spearman = spearman_correlation(gs, scores);
    curves.push_back(std::move(curve));
  }
  return curves;
}

std::optional<double> detect_collapse(std::span<const CandidatePoint> curve, double baseline,
                                      double margin) {
  bool exceeded = false;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].alpha < curve[i - 1].alpha) {
      throw std::invalid_argument("collapse detection needs a curve sorted by alpha");
    }
  }
  for (const CandidatePoint& p : curve) {
    if (p.score > baseline) exceeded = true;
    if (exceeded && p.score < baseline - margin) return p.alpha;
  }
  return std::nullopt;
}

}  // namespace expo::lab
