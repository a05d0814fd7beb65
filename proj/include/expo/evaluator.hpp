#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <variant>

#include "expo/archive.hpp"
#include "expo/merge.hpp"
#include "expo/search.hpp"

namespace expo {

// Shell command scoring one candidate archive. "{}" (exactly once) is
// replaced with the candidate path; the last stdout line must be a single
// decimal number, nonzero exit signals failure.
struct ExternalCommand {
  std::string command_template;
  double timeout_sec = 0.0;  // <= 0: no limit
};

// Precomputed scores, JSON lines of {"alpha": x, "score": y}. Used for
// batch/offline (e.g. human-scored) workflows.
struct ScoreFile {
  std::filesystem::path path;
};

// Named synthetic objective evaluated directly on the candidate tensors.
// "quadratic": -||theta - theta*||^2 with theta* = base + target_gamma*(tuned-base).
struct BuiltinObjective {
  std::string name = "quadratic";
  std::map<std::string, double> params;
};

using EvaluatorSpec = std::variant<ExternalCommand, ScoreFile, BuiltinObjective>;

// Throws EvaluatorError when the spec is malformed (e.g. placeholder count).
void validate_evaluator(const EvaluatorSpec& spec);

// Materializes the extrapolated candidate under workdir (cached by alpha:
// existing files are not regenerated), runs the evaluator, and returns the
// scored point with aux["theta_norm"] set to the candidate's global norm.
CandidatePoint evaluate_candidate(const TensorArchive& base, const TensorArchive& tuned,
                                  double alpha, const EvaluatorSpec& evaluator,
                                  const std::filesystem::path& workdir,
                                  CastPolicy cast = CastPolicy::PreserveInput);

// Binds the above into a search-ready scoring function.
CandidateFn make_candidate_fn(const TensorArchive& base, const TensorArchive& tuned,
                              const EvaluatorSpec& evaluator,
                              const std::filesystem::path& workdir,
                              CastPolicy cast = CastPolicy::PreserveInput);

std::filesystem::path candidate_path(const std::filesystem::path& workdir, double alpha);

}  // namespace expo
