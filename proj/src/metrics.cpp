#include "dxenv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace dxenv {

JacAcc jac_acc(const DiagnosisCounts& counts) {
  check_counts(counts);
  JacAcc out;
  out.jac = static_cast<double>(counts.matched) /
            static_cast<double>(counts.gt_count + counts.pred_count - counts.matched);
  out.acc = counts.matched == counts.gt_count ? 1 : 0;
  return out;
}

double sim_from_embeddings(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("embedding dimensions differ");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::clamp(dot, 0.0, 1.0);
}

double sim_score(const std::string& prediction, const std::string& ground_truth, Gateway& embedder) {
  if (prediction.empty() || ground_truth.empty()) throw std::invalid_argument("sim needs non-empty strings");
  const auto v = embedder.embed({prediction, ground_truth});
  return sim_from_embeddings(v[0], v[1]);
}

double harmonic_mean(double a, double b) {
  if (a <= 0.0 || b <= 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

ToolEfficiency tool_efficiency(std::span<const ToolCall> calls, const std::vector<std::string>& gt_exams,
                               const TierTable& tiers) {
  const std::set<std::string> gt(gt_exams.begin(), gt_exams.end());
  ToolEfficiency e;
  e.calls = static_cast<int>(calls.size());

  int hits = 0;
  double hit_weight = 0.0;
  double call_weight = 0.0;
  std::set<std::string> called;
  for (const auto& c : calls) {
    const double w = tiers.lookup(c.name).sum();
    call_weight += w;
    if (gt.count(c.name)) {
      ++hits;
      hit_weight += w;
      called.insert(c.name);
    }
  }
  double gt_weight = 0.0;
  double covered_weight = 0.0;
  for (const auto& g : gt) {
    const double w = tiers.lookup(g).sum();
    gt_weight += w;
    if (called.count(g)) covered_weight += w;
  }

  e.precision = calls.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(calls.size());
  e.recall = gt.empty() ? 1.0 : static_cast<double>(called.size()) / static_cast<double>(gt.size());
  e.dollar_precision = calls.empty() ? 1.0 : hit_weight / call_weight;
  e.dollar_recall = gt.empty() ? 1.0 : covered_weight / gt_weight;
  e.call_f1 = harmonic_mean(e.precision, e.recall);
  e.dollar_f1 = harmonic_mean(e.dollar_precision, e.dollar_recall);
  return e;
}

ToolEfficiency tool_efficiency(const Transcript& transcript, const CaseProfile& profile, const TierTable& tiers) {
  std::vector<std::string> gt;
  for (const auto& [name, _] : profile.exam_map) gt.push_back(name);
  TierTable table = tiers;
  table.merge(TierTable::from_tools(profile.available_tools));
  const auto calls = transcript.exam_calls();
  return tool_efficiency(calls, gt, table);
}

void to_json(Json& j, const EpisodeScore& s) {
  j = Json{{"case_id", s.case_id},  {"system", s.system},   {"sim", s.sim},
           {"jac", s.jac},          {"acc", s.acc},         {"calls", s.calls},
           {"call_f1", s.call_f1},  {"dollar_f1", s.dollar_f1}, {"reward", s.reward},
           {"termination", s.termination}, {"flags", s.flags}};
  j["error"] = s.error ? Json(*s.error) : Json(nullptr);
}

void from_json(const Json& j, EpisodeScore& s) {
  try {
    s.case_id = j.at("case_id").get<std::string>();
    s.system = j.value("system", std::string());
    s.sim = j.at("sim").get<double>();
    s.jac = j.at("jac").get<double>();
    s.acc = j.at("acc").get<int>();
    s.calls = j.at("calls").get<int>();
    s.call_f1 = j.at("call_f1").get<double>();
    s.dollar_f1 = j.at("dollar_f1").get<double>();
    s.reward = j.at("reward").get<RewardBreakdown>();
    s.termination = j.value("termination", std::string());
    s.flags = j.value("flags", std::vector<std::string>{});
    if (j.contains("error") && !j.at("error").is_null()) {
      s.error = j.at("error").get<std::string>();
    } else {
      s.error.reset();
    }
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("episode score: ") + e.what());
  }
}

double metric_value(const EpisodeScore& s, const std::string& metric) {
  if (metric == "sim") return s.sim;
  if (metric == "jac") return s.jac;
  if (metric == "acc") return s.acc;
  if (metric == "calls") return s.calls;
  if (metric == "call_f1") return s.call_f1;
  if (metric == "dollar_f1") return s.dollar_f1;
  if (metric == "reward") return s.reward.total;
  throw std::invalid_argument("unknown metric: " + metric);
}

Json to_json(const BootstrapReport& r) {
  return Json{{"metric", r.metric},   {"mean", r.mean}, {"ci_low", r.ci_low}, {"ci_high", r.ci_high},
              {"half_width", r.half_width()}, {"B", r.B}, {"p_values", r.p_values}};
}

namespace {

double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// Linear-interpolated quantile of sorted data.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BootstrapReport summarize(double mean, std::vector<double>& resampled, int B, double level) {
  std::sort(resampled.begin(), resampled.end());
  BootstrapReport r;
  r.mean = mean;
  r.B = B;
  const double alpha = 1.0 - level;
  r.ci_low = quantile(resampled, alpha / 2.0);
  r.ci_high = quantile(resampled, 1.0 - alpha / 2.0);
  // Guard against floating-point drift at degenerate distributions.
  r.ci_low = std::min(r.ci_low, mean);
  r.ci_high = std::max(r.ci_high, mean);
  return r;
}

void check_bootstrap_args(std::size_t n, int B, double level) {
  if (n < 2) throw InsufficientSamples("bootstrap needs at least 2 samples, got " + std::to_string(n));
  if (B < 1) throw std::invalid_argument("bootstrap needs B >= 1");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
}

}  // namespace

BootstrapReport bootstrap(std::span<const double> samples, int B, Rng& rng, double level) {
  check_bootstrap_args(samples.size(), B, level);
  const std::size_t n = samples.size();
  std::vector<double> means(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += samples[rng.uniform_index(n)];
    means[static_cast<std::size_t>(b)] = sum / static_cast<double>(n);
  }
  return summarize(mean_of(samples), means, B, level);
}

PairedBootstrap paired_bootstrap(std::span<const double> a, std::span<const double> b, int B, Rng& rng,
                                 double level) {
  if (a.size() != b.size()) throw MisalignedPairs("paired samples differ in length");
  check_bootstrap_args(a.size(), B, level);
  const std::size_t n = a.size();
  std::vector<double> ma(static_cast<std::size_t>(B)), mb(ma.size()), md(ma.size());
  std::size_t le = 0;
  std::size_t ge = 0;
  for (int r = 0; r < B; ++r) {
    double sa = 0.0;
    double sb = 0.0;
    double sd = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = rng.uniform_index(n);
      sa += a[k];
      sb += b[k];
      sd += b[k] - a[k];
    }
    const auto idx = static_cast<std::size_t>(r);
    ma[idx] = sa / static_cast<double>(n);
    mb[idx] = sb / static_cast<double>(n);
    md[idx] = sd / static_cast<double>(n);
    if (md[idx] <= 0.0) ++le;
    if (md[idx] >= 0.0) ++ge;
  }
  std::vector<double> diffs(n);
  for (std::size_t i = 0; i < n; ++i) diffs[i] = b[i] - a[i];

  PairedBootstrap out;
  out.a = summarize(mean_of(a), ma, B, level);
  out.b = summarize(mean_of(b), mb, B, level);
  out.diff = summarize(mean_of(diffs), md, B, level);
  const double frac = static_cast<double>(std::min(le, ge)) / static_cast<double>(B);
  out.p_value = std::min(1.0, 2.0 * frac);
  return out;
}

std::vector<EpisodeScore> align_pairs(const std::vector<EpisodeScore>& a, const std::vector<EpisodeScore>& b) {
  std::map<std::string, const EpisodeScore*> by_id;
  for (const auto& s : b) {
    if (!by_id.emplace(s.case_id, &s).second) throw MisalignedPairs("duplicate case_id in comparator: " + s.case_id);
  }
  if (a.size() != b.size()) {
    throw MisalignedPairs("paired score sets differ in size (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  std::set<std::string> seen;
  std::vector<EpisodeScore> out;
  out.reserve(a.size());
  for (const auto& s : a) {
    if (!seen.insert(s.case_id).second) throw MisalignedPairs("duplicate case_id: " + s.case_id);
    auto it = by_id.find(s.case_id);
    if (it == by_id.end()) throw MisalignedPairs("case_id missing from comparator: " + s.case_id);
    out.push_back(*it->second);
  }
  return out;
}

std::string format_ci(const BootstrapReport& r, int decimals) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.*f ± %.*f", decimals, r.mean, decimals, r.half_width());
  return buf;
}

EvaluationReport build_report(const std::vector<SystemScores>& systems, int B, std::uint64_t seed) {
  if (systems.empty()) throw std::invalid_argument("report needs at least one score set");
  EvaluationReport report;
  report.B = B;
  report.seed = seed;

  const Rng root(seed);
  const auto& baseline = systems.front();
  for (std::size_t si = 0; si < systems.size(); ++si) {
    const auto& sys = systems[si];
    SystemReport sr;
    sr.name = sys.name;
    sr.n = sys.scores.size();
    for (const auto& s : sys.scores) {
      if (!s.flags.empty() || s.error) ++sr.flagged;
    }
    std::vector<EpisodeScore> aligned;
    if (si > 0) aligned = align_pairs(baseline.scores, sys.scores);

    for (const auto& metric : kMetricNames) {
      std::vector<double> xs;
      for (const auto& s : sys.scores) xs.push_back(metric_value(s, metric));
      Rng rng = root.fork(sys.name + "/" + metric);
      BootstrapReport r = bootstrap(xs, B, rng);
      r.metric = metric;
      if (si > 0) {
        std::vector<double> base, other;
        for (std::size_t i = 0; i < aligned.size(); ++i) {
          base.push_back(metric_value(baseline.scores[i], metric));
          other.push_back(metric_value(aligned[i], metric));
        }
        Rng prng = root.fork(baseline.name + "|" + sys.name + "/" + metric);
        r.p_values[baseline.name] = paired_bootstrap(base, other, B, prng).p_value;
      }
      sr.metrics[metric] = r;
    }
    report.systems.push_back(std::move(sr));
  }
  return report;
}

Json EvaluationReport::to_json() const {
  Json systems_json = Json::array();
  for (const auto& s : systems) {
    Json metrics = Json::object();
    for (const auto& [name, r] : s.metrics) metrics[name] = dxenv::to_json(r);
    systems_json.push_back({{"name", s.name}, {"n", s.n}, {"flagged", s.flagged}, {"metrics", metrics}});
  }
  return Json{{"B", B}, {"seed", seed}, {"ci", "95% percentile bootstrap"}, {"systems", systems_json}};
}

std::string EvaluationReport::to_text() const {
  std::ostringstream os;
  auto table = [&](const std::string& title, const std::vector<std::pair<std::string, std::string>>& cols) {
    os << title << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-24s %6s", "System", "N");
    os << buf;
    for (const auto& [_, label] : cols) {
      std::snprintf(buf, sizeof buf, "  %-17s", label.c_str());
      os << buf;
    }
    os << "\n";
    for (const auto& s : systems) {
      std::snprintf(buf, sizeof buf, "%-24s %6zu", s.name.c_str(), s.n);
      os << buf;
      for (const auto& [key, _] : cols) {
        std::snprintf(buf, sizeof buf, "  %-17s", format_ci(s.metrics.at(key)).c_str());
        os << buf;
      }
      os << "\n";
    }
    os << "\n";
  };
  table("Diagnosis", {{"sim", "Sim"}, {"jac", "Jac"}, {"acc", "Acc"}});
  table("Tool use", {{"calls", "Calls"}, {"call_f1", "Call F1"}, {"dollar_f1", "$ F1"}});
  table("Reward", {{"reward", "Total"}});

  if (systems.size() > 1) {
    os << "Paired bootstrap p-values vs " << systems.front().name << "\n";
    for (std::size_t i = 1; i < systems.size(); ++i) {
      os << "  " << systems[i].name << ":";
      for (const auto& metric : kMetricNames) {
        const auto& pv = systems[i].metrics.at(metric).p_values;
        char buf[48];
        std::snprintf(buf, sizeof buf, " %s=%.4f", metric.c_str(), pv.begin()->second);
        os << buf;
      }
      os << "\n";
    }
    os << "\n";
  }
  for (const auto& s : systems) {
    if (s.flagged > 0) os << s.name << ": " << s.flagged << " episode(s) flagged (turn limit, protocol or judge failure)\n";
  }
  os << "95% percentile bootstrap, B=" << B << ", seed=" << seed << "\n";
  return os.str();
}

}  // namespace dxenv
