#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace expo {

struct CandidatePoint {
  double alpha = 0.0;
  double score = 0.0;
  std::map<std::string, double> aux;  // e.g. candidate parameter norm
  std::string artifact;               // candidate archive path, empty for in-memory evaluation
};

// Scores one extrapolation strength. Must be deterministic for reproducible
// traces; throws EvaluatorError on protocol failures.
using CandidateFn = std::function<CandidatePoint(double alpha)>;

struct Optimal {
  double alpha = 0.0;
  double score = 0.0;
};

struct SearchTrace {
  double baseline_score = 0.0;  // score of the unextrapolated model (alpha = 0)
  double threshold = 0.0;
  std::vector<CandidatePoint> evaluated;    // in evaluation order, each alpha once
  std::optional<Optimal> optimal;           // empty = NoImprovement

  bool no_improvement() const { return !optimal.has_value(); }

  nlohmann::json to_json() const;
  static SearchTrace from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static SearchTrace load(const std::filesystem::path& path);
};

struct SearchOpts {
  double threshold = 0.0;               // minimum improvement over baseline
  std::filesystem::path trace_path;     // flushed after every evaluation when set
  int jobs = 1;                         // grid phase parallelism
  // Scores from a previous trace, reused instead of re-invoking the evaluator.
  std::vector<CandidatePoint> warm_scores;
};

// Evaluates baseline plus every grid point lo, lo+interval, ..., <= hi.
// Outcome is the argmax if it beats baseline + threshold (ties toward the
// smaller alpha), else NoImprovement.
SearchTrace grid_search(const CandidateFn& fn, double lo, double hi, double interval,
                        const SearchOpts& opts = {});

struct AdaptiveConfig {
  double initial_interval = 1.0;
  double min_interval = 0.1;
  int max_evaluations = 32;   // candidate evaluations, baseline excluded
  double smallest_probe = 0.1;  // below this, a failing search gives up
};

// Coarse probing with dynamically adjusted intervals, then bisection of the
// bracket around the best point, halving the spacing until min_interval or
// the evaluation budget. If no coarse probe beats the baseline the interval
// contracts down to smallest_probe before declaring NoImprovement.
SearchTrace adaptive_search(const CandidateFn& fn, const AdaptiveConfig& cfg,
                            const SearchOpts& opts = {});

struct SweepPoint {
  CandidatePoint point;
  bool ok = true;
  std::string error;  // set when the evaluator failed for this alpha
};

struct SweepResult {
  double baseline_score = 0.0;
  std::vector<SweepPoint> points;  // in request order

  void write_csv(std::ostream& os) const;
  nlohmann::json to_json() const;
};

// Evaluates the baseline plus each listed alpha; per-point failures are
// recorded and the sweep continues.
SweepResult sweep(const CandidateFn& fn, const std::vector<double>& alphas);

}  // namespace expo
