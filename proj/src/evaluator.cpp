#include "expo/evaluator.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "expo/errors.hpp"
#include "expo/norms.hpp"
#include "expo/subprocess.hpp"

namespace expo {

namespace {

std::size_t count_placeholders(const std::string& tpl) {
  std::size_t n = 0;
  for (std::size_t pos = tpl.find("{}"); pos != std::string::npos; pos = tpl.find("{}", pos + 2)) {
    ++n;
  }
  return n;
}

std::string substitute_placeholder(const std::string& tpl, const std::string& path) {
  const std::size_t pos = tpl.find("{}");
  return tpl.substr(0, pos) + path + tpl.substr(pos + 2);
}

// The protocol: the final non-empty stdout line is the score.
double parse_final_score(const std::string& output, const std::string& context) {
  std::string line;
  std::istringstream is(output);
  for (std::string cur; std::getline(is, cur);) {
    while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ' || cur.back() == '\t')) {
      cur.pop_back();
    }
    if (!cur.empty()) line = cur;
  }
  if (line.empty()) {
    throw EvaluatorError(context + ": evaluator printed no score");
  }
  char* end = nullptr;
  const double score = std::strtod(line.c_str(), &end);
  if (end == line.c_str() || *end != '\0' || !std::isfinite(score)) {
    throw EvaluatorError(context + ": unparsable score line \"" + line + "\"");
  }
  return score;
}

double quadratic_score(const TensorArchive& base, const TensorArchive& tuned,
                       const TensorArchive& candidate, double target_gamma) {
  CompensatedSum acc;
  std::vector<float> vb, vt, vc;
  for (const std::string& name : base.names()) {
    base.read_into(name, vb);
    tuned.read_into(name, vt);
    candidate.read_into(name, vc);
    for (std::size_t i = 0; i < vb.size(); ++i) {
      const double target =
          static_cast<double>(vb[i]) +
          target_gamma * (static_cast<double>(vt[i]) - static_cast<double>(vb[i]));
      const double d = static_cast<double>(vc[i]) - target;
      acc.add(d * d);
    }
  }
  return -acc.value();
}

double archive_norm(const TensorArchive& ar) {
  CompensatedSum acc;
  std::vector<float> v;
  for (const std::string& name : ar.names()) {
    ar.read_into(name, v);
    for (float x : v) acc.add(static_cast<double>(x) * static_cast<double>(x));
  }
  return std::sqrt(acc.value());
}

std::map<double, double> load_score_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EvaluatorError("cannot open score file \"" + path.string() + "\"");
  std::map<double, double> scores;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      scores[j.at("alpha").get<double>()] = j.at("score").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw EvaluatorError("score file \"" + path.string() + "\" line " +
                           std::to_string(lineno) + ": " + e.what());
    }
  }
  return scores;
}

}  // namespace

void validate_evaluator(const EvaluatorSpec& spec) {
  if (const auto* cmd = std::get_if<ExternalCommand>(&spec)) {
    const std::size_t n = count_placeholders(cmd->command_template);
    if (n != 1) {
      throw EvaluatorError("evaluator command must contain the candidate placeholder {} exactly once, found " +
                           std::to_string(n) + " in \"" + cmd->command_template + "\"");
    }
    return;
  }
  if (const auto* builtin = std::get_if<BuiltinObjective>(&spec)) {
    if (builtin->name != "quadratic") {
      throw EvaluatorError("unknown builtin objective \"" + builtin->name + "\"");
    }
  }
}

std::filesystem::path candidate_path(const std::filesystem::path& workdir, double alpha) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "candidate_alpha_%.9g.safetensors", alpha);
  return workdir / buf;
}

CandidatePoint evaluate_candidate(const TensorArchive& base, const TensorArchive& tuned,
                                  double alpha, const EvaluatorSpec& evaluator,
                                  const std::filesystem::path& workdir, CastPolicy cast) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  validate_evaluator(evaluator);
  std::filesystem::create_directories(workdir);

  const std::filesystem::path path = candidate_path(workdir, alpha);
  if (!std::filesystem::exists(path)) {
    extrapolate(base, tuned, alpha, path, cast);
  }
  const TensorArchive candidate = TensorArchive::open(path);

  CandidatePoint point;
  point.alpha = alpha;
  point.artifact = path.string();

  char alpha_str[32];
  std::snprintf(alpha_str, sizeof(alpha_str), "%.9g", alpha);

  if (const auto* cmd = std::get_if<ExternalCommand>(&evaluator)) {
    const std::string full = substitute_placeholder(cmd->command_template, path.string());
    const std::string context = "alpha=" + std::string(alpha_str) + " command \"" + full + "\"";
    const CommandResult res = run_command(full, cmd->timeout_sec);
    if (res.timed_out) {
      throw EvaluatorError(context + ": evaluator timed out");
    }
    if (res.exit_code != 0) {
      throw EvaluatorError(context + ": evaluator exited with code " +
                           std::to_string(res.exit_code));
    }
    point.score = parse_final_score(res.output, context);
  } else if (const auto* file = std::get_if<ScoreFile>(&evaluator)) {
    const std::map<double, double> scores = load_score_file(file->path);
    auto it = scores.lower_bound(alpha - 1e-9);
    if (it == scores.end() || std::abs(it->first - alpha) > 1e-9) {
      throw EvaluatorError("score file \"" + file->path.string() +
                           "\" has no entry for alpha=" + alpha_str);
    }
    point.score = it->second;
  } else {
    const auto& builtin = std::get<BuiltinObjective>(evaluator);
    double target_gamma = 3.0;
    if (auto it = builtin.params.find("target_gamma"); it != builtin.params.end()) {
      target_gamma = it->second;
    }
    point.score = quadratic_score(base, tuned, candidate, target_gamma);
  }

  point.aux["theta_norm"] = archive_norm(candidate);
  return point;
}

CandidateFn make_candidate_fn(const TensorArchive& base, const TensorArchive& tuned,
                              const EvaluatorSpec& evaluator,
                              const std::filesystem::path& workdir, CastPolicy cast) {
  validate_evaluator(evaluator);
  return [&base, &tuned, evaluator, workdir, cast](double alpha) {
    return evaluate_candidate(base, tuned, alpha, evaluator, workdir, cast);
  };
}

}  // namespace expo
