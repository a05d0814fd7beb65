#include "expo/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "expo/errors.hpp"

namespace expo {

namespace {

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

nlohmann::json point_to_json(const CandidatePoint& p) {
  nlohmann::json j{{"alpha", p.alpha}, {"score", p.score}};
  if (!p.artifact.empty()) j["artifact"] = p.artifact;
  if (!p.aux.empty()) j["aux"] = p.aux;
  return j;
}

CandidatePoint point_from_json(const nlohmann::json& j) {
  CandidatePoint p;
  p.alpha = j.at("alpha").get<double>();
  p.score = j.at("score").get<double>();
  if (j.contains("artifact")) p.artifact = j["artifact"].get<std::string>();
  if (j.contains("aux")) p.aux = j["aux"].get<std::map<std::string, double>>();
  return p;
}

// Shared bookkeeping for both strategies: dedup by alpha, budget counting,
// warm-score reuse, progressive trace flushing.
class Recorder {
 public:
  Recorder(const CandidateFn& fn, SearchTrace& trace, const SearchOpts& opts, int budget)
      : fn_(fn), trace_(trace), opts_(opts), budget_(budget) {
    for (const CandidatePoint& p : opts.warm_scores) warm_.emplace(p.alpha, p);
  }

  bool seen(double alpha) const { return by_alpha_.count(alpha) != 0; }
  bool budget_left() const { return budget_ < 0 || spent_ < budget_; }

  // Returns nothing when alpha <= 0, was already evaluated, or the budget is
  // exhausted. Throws through evaluator errors after flushing the trace.
  std::optional<CandidatePoint> evaluate(double alpha) {
    if (!(alpha > 0.0)) return std::nullopt;
    if (by_alpha_.count(alpha)) return std::nullopt;
    if (!budget_left()) return std::nullopt;
    ++spent_;
    CandidatePoint point;
    if (auto warm = warm_.find(alpha); warm != warm_.end()) {
      point = warm->second;
    } else {
      try {
        point = fn_(alpha);
      } catch (...) {
        flush();
        throw;
      }
      point.alpha = alpha;
    }
    trace_.evaluated.push_back(point);
    by_alpha_.emplace(alpha, trace_.evaluated.size() - 1);
    flush();
    return point;
  }

  std::optional<CandidatePoint> lookup(double alpha) const {
    auto it = by_alpha_.find(alpha);
    if (it == by_alpha_.end()) return std::nullopt;
    return trace_.evaluated[it->second];
  }

  void flush() const {
    if (!opts_.trace_path.empty()) trace_.save(opts_.trace_path);
  }

  int spent() const { return spent_; }

 private:
  const CandidateFn& fn_;
  SearchTrace& trace_;
  const SearchOpts& opts_;
  int budget_;
  int spent_ = 0;
  std::map<double, std::size_t> by_alpha_;
  std::map<double, CandidatePoint> warm_;
};

double evaluate_baseline(const CandidateFn& fn, SearchTrace& trace, const SearchOpts& opts) {
  for (const CandidatePoint& p : opts.warm_scores) {
    if (p.alpha == 0.0) {
      trace.baseline_score = p.score;
      return p.score;
    }
  }
  CandidatePoint p;
  try {
    p = fn(0.0);
  } catch (...) {
    if (!opts.trace_path.empty()) trace.save(opts.trace_path);
    throw;
  }
  trace.baseline_score = p.score;
  return p.score;
}

void settle_outcome(SearchTrace& trace) {
  const CandidatePoint* best = nullptr;
  for (const CandidatePoint& p : trace.evaluated) {
    if (!best || p.score > best->score || (p.score == best->score && p.alpha < best->alpha)) {
      best = &p;
    }
  }
  if (best && best->score > trace.baseline_score + trace.threshold) {
    trace.optimal = Optimal{best->alpha, best->score};
  } else {
    trace.optimal.reset();
  }
}

}  // namespace

nlohmann::json SearchTrace::to_json() const {
  nlohmann::json j;
  j["baseline_score"] = baseline_score;
  j["threshold"] = threshold;
  j["evaluated"] = nlohmann::json::array();
  for (const CandidatePoint& p : evaluated) j["evaluated"].push_back(point_to_json(p));
  if (optimal) {
    j["outcome"] = {{"kind", "optimal"}, {"alpha", optimal->alpha}, {"score", optimal->score}};
  } else {
    j["outcome"] = {{"kind", "no_improvement"}};
  }
  return j;
}

SearchTrace SearchTrace::from_json(const nlohmann::json& j) {
  SearchTrace t;
  t.baseline_score = j.at("baseline_score").get<double>();
  t.threshold = j.value("threshold", 0.0);
  for (const auto& p : j.at("evaluated")) t.evaluated.push_back(point_from_json(p));
  if (j.contains("outcome") && j["outcome"].value("kind", "") == "optimal") {
    t.optimal = Optimal{j["outcome"].at("alpha").get<double>(),
                        j["outcome"].at("score").get<double>()};
  }
  return t;
}

void SearchTrace::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write trace to \"" + path.string() + "\"");
  out << to_json().dump(2) << '\n';
}

SearchTrace SearchTrace::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open trace \"" + path.string() + "\"");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("trace \"" + path.string() + "\" is not valid JSON: " + e.what());
  }
  return from_json(j);
}

SearchTrace grid_search(const CandidateFn& fn, double lo, double hi, double interval,
                        const SearchOpts& opts) {
  if (!(lo >= 0.0)) throw std::invalid_argument("grid lower bound must be >= 0");
  if (!(interval > 0.0)) throw std::invalid_argument("grid interval must be > 0");
  if (!(hi >= lo)) throw std::invalid_argument("grid upper bound must be >= lower bound");

  SearchTrace trace;
  trace.threshold = opts.threshold;
  evaluate_baseline(fn, trace, opts);

  std::vector<double> points;
  for (int i = 0;; ++i) {
    const double a = lo + i * interval;
    if (a > hi + 1e-12 * std::max(1.0, hi)) break;
    if (a > 0.0) points.push_back(a);
  }

  Recorder rec(fn, trace, opts, -1);
  if (opts.jobs <= 1 || points.size() <= 1) {
    for (double a : points) rec.evaluate(a);
  } else {
    // Evaluate concurrently but record in grid order so traces stay
    // deterministic regardless of completion timing.
    std::map<double, CandidatePoint> warm;
    for (const CandidatePoint& p : opts.warm_scores) warm.emplace(p.alpha, p);
    const int jobs = std::min<int>(opts.jobs, static_cast<int>(points.size()));
    std::vector<CandidatePoint> results(points.size());
    std::vector<std::exception_ptr> errors(points.size());
    std::mutex mu;
    std::size_t next = 0;
    auto worker = [&] {
      for (;;) {
        std::size_t idx;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= points.size()) return;
          idx = next++;
        }
        try {
          if (auto it = warm.find(points[idx]); it != warm.end()) {
            results[idx] = it->second;
          } else {
            results[idx] = fn(points[idx]);
            results[idx].alpha = points[idx];
          }
        } catch (...) {
          errors[idx] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (errors[i]) {
        rec.flush();
        std::rethrow_exception(errors[i]);
      }
      trace.evaluated.push_back(results[i]);
    }
    rec.flush();
  }

  settle_outcome(trace);
  rec.flush();
  return trace;
}

SearchTrace adaptive_search(const CandidateFn& fn, const AdaptiveConfig& cfg,
                            const SearchOpts& opts) {
  if (!(cfg.initial_interval > 0.0)) throw std::invalid_argument("initial interval must be > 0");
  if (!(cfg.min_interval > 0.0)) throw std::invalid_argument("min interval must be > 0");
  if (cfg.max_evaluations <= 0) throw std::invalid_argument("max evaluations must be > 0");
  if (!(cfg.smallest_probe > 0.0)) throw std::invalid_argument("smallest probe must be > 0");

  SearchTrace trace;
  trace.threshold = opts.threshold;
  const double baseline = evaluate_baseline(fn, trace, opts);
  Recorder rec(fn, trace, opts, cfg.max_evaluations);

  std::optional<CandidatePoint> best;
  auto consider = [&](const std::optional<CandidatePoint>& p) {
    if (!p) return;
    if (!best || p->score > best->score || (p->score == best->score && p->alpha < best->alpha)) {
      best = p;
    }
  };
  auto improved = [&] { return best && best->score > baseline + opts.threshold; };

  // Coarse phase: probe at the initial interval, doubling outward while the
  // curve is still rising at the frontier.
  const double step = cfg.initial_interval;
  consider(rec.evaluate(step));
  consider(rec.evaluate(2 * step));
  {
    double frontier = 2 * step;
    std::optional<CandidatePoint> prev = rec.lookup(step);
    std::optional<CandidatePoint> curr = rec.lookup(frontier);
    while (prev && curr && curr->score > prev->score && curr->score > baseline + opts.threshold &&
           rec.budget_left()) {
      frontier *= 2;
      std::optional<CandidatePoint> nxt = rec.evaluate(frontier);
      if (!nxt) break;
      prev = curr;
      curr = nxt;
      consider(nxt);
    }
  }

  // Contraction: nothing beat the baseline at coarse scale, so shrink toward
  // the smallest probe before giving up (the "N/A" rule).
  if (!improved()) {
    double a = step / 2;
    while (a > cfg.smallest_probe * (1 + 1e-9) && rec.budget_left() && !improved()) {
      consider(rec.evaluate(a));
      a /= 2;
    }
    if (!improved() && rec.budget_left()) {
      consider(rec.evaluate(cfg.smallest_probe));
    }
    if (!improved()) {
      settle_outcome(trace);
      rec.flush();
      return trace;
    }
  }

  // Bisection: evaluate midpoints of the bracket around the best point,
  // halving the spacing until min_interval or the budget runs out.
  while (rec.budget_left()) {
    const double center = best->alpha;
    double left = 0.0;
    double right = -1.0;
    for (const CandidatePoint& p : trace.evaluated) {
      if (p.alpha < center && p.alpha > left) left = p.alpha;
      if (p.alpha > center && (right < 0.0 || p.alpha < right)) right = p.alpha;
    }
    if (right < 0.0) right = center + (center - left);  // open on the right: extend

    const double gap_left = center - left;
    const double gap_right = right - center;
    bool progressed = false;
    if (gap_left / 2 >= cfg.min_interval) {
      std::optional<CandidatePoint> p = rec.evaluate(left + gap_left / 2);
      if (p) progressed = true;
      consider(p);
    }
    if (gap_right / 2 >= cfg.min_interval && rec.budget_left()) {
      std::optional<CandidatePoint> p = rec.evaluate(center + gap_right / 2);
      if (p) progressed = true;
      consider(p);
    }
    if (!progressed) break;
  }

  settle_outcome(trace);
  rec.flush();
  return trace;
}

SweepResult sweep(const CandidateFn& fn, const std::vector<double>& alphas) {
  SweepResult result;
  result.baseline_score = fn(0.0).score;
  for (double a : alphas) {
    if (!(a >= 0.0)) throw std::invalid_argument("sweep alphas must be >= 0");
    SweepPoint sp;
    sp.point.alpha = a;
    try {
      sp.point = fn(a);
      sp.point.alpha = a;
    } catch (const std::exception& e) {
      sp.ok = false;
      sp.error = e.what();
    }
    result.points.push_back(std::move(sp));
  }
  return result;
}

void SweepResult::write_csv(std::ostream& os) const {
  os << "alpha,score,ok,theta_norm,error\n";
  os << "0," << format_value(baseline_score) << ",1,,\n";
  for (const SweepPoint& sp : points) {
    os << format_value(sp.point.alpha) << ',';
    if (sp.ok) os << format_value(sp.point.score);
    os << ',' << (sp.ok ? 1 : 0) << ',';
    if (auto it = sp.point.aux.find("theta_norm"); it != sp.point.aux.end()) {
      os << format_value(it->second);
    }
    std::string err = sp.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << ',' << err << '\n';
  }
}

nlohmann::json SweepResult::to_json() const {
  nlohmann::json j;
  j["baseline_score"] = baseline_score;
  j["points"] = nlohmann::json::array();
  for (const SweepPoint& sp : points) {
    nlohmann::json p = point_to_json(sp.point);
    p["ok"] = sp.ok;
    if (!sp.ok) p["error"] = sp.error;
    j["points"].push_back(std::move(p));
  }
  return j;
}

}  // namespace expo
