#include "dxenv/reward.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace dxenv {

void to_json(Json& j, const DiagnosisCounts& c) {
  j = Json{{"gt_count", c.gt_count}, {"pred_count", c.pred_count}, {"matched", c.matched}};
}

void from_json(const Json& j, DiagnosisCounts& c) {
  c.gt_count = j.at("gt_count").get<int>();
  c.pred_count = j.at("pred_count").get<int>();
  c.matched = j.at("matched").get<int>();
}

void check_counts(const DiagnosisCounts& c) {
  if (c.gt_count < 1) throw InvalidCounts("gt_count must be >= 1");
  if (c.pred_count < 0) throw InvalidCounts("pred_count must be >= 0");
  if (c.matched < 0) throw InvalidCounts("matched must be >= 0");
  if (c.matched > std::min(c.gt_count, c.pred_count)) {
    throw InvalidCounts("matched exceeds min(gt_count, pred_count)");
  }
}

double diagnosis_reward(const DiagnosisCounts& c) {
  check_counts(c);
  return static_cast<double>(c.matched) / static_cast<double>(c.gt_count + c.pred_count - c.matched);
}

namespace {

Json canonicalize(const Json& v) {
  switch (v.type()) {
    case Json::value_t::object: {
      Json out = Json::object();
      for (const auto& [k, x] : v.items()) out[k] = canonicalize(x);
      return out;
    }
    case Json::value_t::array: {
      Json out = Json::array();
      for (const auto& x : v) out.push_back(canonicalize(x));
      return out;
    }
    case Json::value_t::number_float: {
      const double d = v.get<double>();
      if (std::isfinite(d) && std::trunc(d) == d && std::fabs(d) < 9.0e15) {
        return Json(static_cast<std::int64_t>(d));
      }
      return v;
    }
    case Json::value_t::number_unsigned:
      if (v.get<std::uint64_t>() <= static_cast<std::uint64_t>(INT64_MAX)) {
        return Json(static_cast<std::int64_t>(v.get<std::uint64_t>()));
      }
      return v;
    default:
      return v;
  }
}

std::map<std::string, int> name_counts(std::span<const ToolCall> calls) {
  std::map<std::string, int> out;
  for (const auto& c : calls) ++out[c.name];
  return out;
}

std::set<std::string> keys_of(const Json& args) {
  std::set<std::string> out;
  if (args.is_object()) {
    for (const auto& [k, _] : args.items()) out.insert(k);
  }
  return out;
}

}  // namespace

std::string canonical_json(const Json& value) {
  // nlohmann objects are key-ordered maps, so dump() already sorts keys.
  return canonicalize(value).dump();
}

double name_jaccard(std::span<const ToolCall> predicted, std::span<const ToolCall> ground_truth) {
  const auto p = name_counts(predicted);
  const auto g = name_counts(ground_truth);
  std::set<std::string> names;
  for (const auto& [n, _] : p) names.insert(n);
  for (const auto& [n, _] : g) names.insert(n);
  int inter = 0;
  int uni = 0;
  for (const auto& n : names) {
    const int cp = p.count(n) ? p.at(n) : 0;
    const int cg = g.count(n) ? g.at(n) : 0;
    inter += std::min(cp, cg);
    uni += std::max(cp, cg);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double param_name_jaccard(const Json& predicted_args, const Json& ground_truth_args) {
  const auto p = keys_of(predicted_args);
  const auto g = keys_of(ground_truth_args);
  if (p.empty() && g.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& k : p) inter += g.count(k);
  return static_cast<double>(inter) / static_cast<double>(p.size() + g.size() - inter);
}

int param_value_matches(const Json& predicted_args, const Json& ground_truth_args) {
  if (!predicted_args.is_object() || !ground_truth_args.is_object()) return 0;
  int v = 0;
  for (const auto& [k, gv] : ground_truth_args.items()) {
    auto it = predicted_args.find(k);
    if (it != predicted_args.end() && canonical_json(*it) == canonical_json(gv)) ++v;
  }
  return v;
}

std::vector<std::optional<std::size_t>> greedy_pairing(std::span<const ToolCall> predicted,
                                                       std::span<const ToolCall> ground_truth) {
  std::vector<bool> used(predicted.size(), false);
  std::vector<std::optional<std::size_t>> out(ground_truth.size());
  auto take = [&](std::size_t i, bool exact) {
    const std::string g_args = exact ? canonical_json(ground_truth[i].arguments) : std::string();
    for (std::size_t j = 0; j < predicted.size(); ++j) {
      if (used[j] || predicted[j].name != ground_truth[i].name) continue;
      if (exact && canonical_json(predicted[j].arguments) != g_args) continue;
      used[j] = true;
      out[i] = j;
      return;
    }
  };
  for (std::size_t i = 0; i < ground_truth.size(); ++i) take(i, true);
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    if (!out[i]) take(i, false);
  }
  return out;
}

double tool_reward(std::span<const ToolCall> predicted, std::span<const ToolCall> ground_truth) {
  if (predicted.empty() && ground_truth.empty()) return 1.0;
  double numerator = name_jaccard(predicted, ground_truth);
  double denominator = 1.0;
  const auto pairing = greedy_pairing(predicted, ground_truth);
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    const auto& g = ground_truth[i];
    denominator += 1.0 + static_cast<double>(keys_of(g.arguments).size());
    if (!pairing[i]) continue;
    const auto& p = predicted[*pairing[i]];
    numerator += param_name_jaccard(p.arguments, g.arguments) + param_value_matches(p.arguments, g.arguments);
  }
  return numerator / denominator;
}

TierTable::TierTable(std::map<std::string, CostTiers> tiers, CostTiers fallback)
    : tiers_(std::move(tiers)), fallback_(fallback) {
  auto check = [](const std::string& name, const CostTiers& t) {
    if (t.financial < 1 || t.financial > 3 || t.discomfort < 1 || t.discomfort > 3) {
      throw SchemaError("tiers for '" + name + "' must lie in 1..3");
    }
  };
  for (const auto& [n, t] : tiers_) check(n, t);
  check("<fallback>", fallback_);
}

TierTable TierTable::from_tools(std::span<const ToolSchema> tools, CostTiers fallback) {
  std::map<std::string, CostTiers> m;
  for (const auto& t : tools) m[t.name] = CostTiers{t.cost_financial, t.cost_discomfort};
  return TierTable(std::move(m), fallback);
}

TierTable TierTable::from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("tier table must be a JSON object");
  std::map<std::string, CostTiers> m;
  for (const auto& [name, v] : j.items()) {
    try {
      m[name] = CostTiers{v.at("financial").get<int>(), v.at("discomfort").get<int>()};
    } catch (const Json::exception& e) {
      throw SchemaError("tiers for '" + name + "': " + e.what());
    }
  }
  return TierTable(std::move(m));
}

TierTable TierTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tier table: " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

CostTiers TierTable::lookup(const std::string& name) const {
  auto it = tiers_.find(name);
  return it == tiers_.end() ? fallback_ : it->second;
}

void TierTable::merge(const TierTable& other) {
  for (const auto& [n, t] : other.tiers_) tiers_[n] = t;
}

std::vector<UnnecessaryExam> unnecessary_exams(std::span<const ToolCall> predicted,
                                               std::span<const ToolCall> ground_truth,
                                               const TierTable& tiers) {
  auto remaining = name_counts(ground_truth);
  std::vector<UnnecessaryExam> out;
  for (const auto& p : predicted) {
    auto it = remaining.find(p.name);
    if (it != remaining.end() && it->second > 0) {
      --it->second;
      continue;
    }
    const CostTiers t = tiers.lookup(p.name);
    out.push_back({p.name, t.financial, t.discomfort});
  }
  return out;
}

double cost_reward(std::span<const ToolCall> predicted, std::span<const ToolCall> ground_truth,
                   const TierTable& tiers) {
  double total = 0.0;
  for (const auto& u : unnecessary_exams(predicted, ground_truth, tiers)) {
    total += static_cast<double>(u.financial + u.discomfort) / 6.0;
  }
  return total;
}

double RewardBreakdown::recompute_error() const {
  return std::fabs(total - (r_dx + weights.w_tool * r_tool - weights.w_cost * r_cost));
}

void to_json(Json& j, const RewardBreakdown& b) {
  Json unnecessary = Json::array();
  for (const auto& u : b.unnecessary) {
    unnecessary.push_back({{"name", u.name}, {"financial", u.financial}, {"discomfort", u.discomfort}});
  }
  j = Json{{"r_dx", b.r_dx},
           {"r_tool", b.r_tool},
           {"r_cost", b.r_cost},
           {"total", b.total},
           {"w_tool", b.weights.w_tool},
           {"w_cost", b.weights.w_cost},
           {"judge_counts", b.judge_counts ? Json(*b.judge_counts) : Json(nullptr)},
           {"unnecessary_exams", unnecessary},
           {"flags", b.flags}};
}

void from_json(const Json& j, RewardBreakdown& b) {
  try {
    b.r_dx = j.at("r_dx").get<double>();
    b.r_tool = j.at("r_tool").get<double>();
    b.r_cost = j.at("r_cost").get<double>();
    b.total = j.at("total").get<double>();
    b.weights.w_tool = j.value("w_tool", 0.5);
    b.weights.w_cost = j.value("w_cost", 0.1);
    if (j.contains("judge_counts") && !j.at("judge_counts").is_null()) {
      b.judge_counts = j.at("judge_counts").get<DiagnosisCounts>();
    } else {
      b.judge_counts.reset();
    }
    b.unnecessary.clear();
    for (const auto& u : j.value("unnecessary_exams", Json::array())) {
      b.unnecessary.push_back(
          {u.at("name").get<std::string>(), u.at("financial").get<int>(), u.at("discomfort").get<int>()});
    }
    b.flags = j.value("flags", std::vector<std::string>{});
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("reward breakdown: ") + e.what());
  }
}

RewardBreakdown composite_reward(double r_dx, double r_tool, double r_cost, const RewardWeights& weights) {
  if (weights.w_tool < 0.0 || weights.w_cost < 0.0) throw std::invalid_argument("reward weights must be >= 0");
  RewardBreakdown b;
  b.r_dx = r_dx;
  b.r_tool = r_tool;
  b.r_cost = r_cost;
  b.weights = weights;
  b.total = r_dx + weights.w_tool * r_tool - weights.w_cost * r_cost;
  return b;
}

RewardBreakdown episode_reward(const Transcript& transcript, const CaseProfile& profile,
                               const std::optional<DiagnosisCounts>& counts, const TierTable& tiers,
                               const RewardWeights& weights) {
  const auto predicted = transcript.exam_calls();
  const auto truth = profile.ground_truth_calls();

  TierTable table = tiers;
  table.merge(TierTable::from_tools(profile.available_tools));

  const double r_dx = counts ? diagnosis_reward(*counts) : 0.0;
  RewardBreakdown b = composite_reward(r_dx, tool_reward(predicted, truth),
                                       cost_reward(predicted, truth, table), weights);
  b.judge_counts = counts;
  b.unnecessary = unnecessary_exams(predicted, truth, table);
  if (transcript.termination_reason && *transcript.termination_reason != TerminationReason::Diagnosed) {
    b.flags.emplace_back(to_string(*transcript.termination_reason));
  }
  return b;
}

}  // namespace dxenv
