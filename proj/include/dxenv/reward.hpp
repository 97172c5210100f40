#pragma once

// Episode reward terms: diagnosis Jaccard from judge counts, three-level
// tool-call matching, and the cost penalty for unnecessary exams.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dxenv/core_model.hpp"

namespace dxenv {

class InvalidCounts : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DiagnosisCounts {
  int gt_count = 0;
  int pred_count = 0;
  int matched = 0;

  bool operator==(const DiagnosisCounts&) const = default;
};

void to_json(Json& j, const DiagnosisCounts& c);
void from_json(const Json& j, DiagnosisCounts& c);

/// Throws InvalidCounts unless 0 <= matched <= min(gt, pred) and gt >= 1.
void check_counts(const DiagnosisCounts& c);

/// matched / (gt + pred - matched).
double diagnosis_reward(const DiagnosisCounts& c);

/// Compact JSON with sorted keys and integral floats written as integers,
/// so 2, 2.0 and 2e0 compare equal.
std::string canonical_json(const Json& value);

/// Multiset Jaccard over tool names.
double name_jaccard(std::span<const ToolCall> predicted, std::span<const ToolCall> ground_truth);

/// Set Jaccard over parameter names; two empty sets score 1.
double param_name_jaccard(const Json& predicted_args, const Json& ground_truth_args);

/// Number of shared parameter names whose canonical values are equal.
int param_value_matches(const Json& predicted_args, const Json& ground_truth_args);

/// Greedy pairing in two passes over the ground-truth calls, in order:
/// first each takes the earliest unconsumed predicted call with the same
/// name and identical arguments; then each still-unpaired call takes the
/// earliest unconsumed call with the same name. Entry i is the index of
/// the predicted call paired with ground-truth call i.
std::vector<std::optional<std::size_t>> greedy_pairing(std::span<const ToolCall> predicted,
                                                       std::span<const ToolCall> ground_truth);

/// (J_name + sum_i (J_param_i + V_i)) / (1 + sum_i (1 + |theta_i|)), the
/// numerator summing over matched pairs and the denominator over every
/// ground-truth call. Both lists empty gives 1.
double tool_reward(std::span<const ToolCall> predicted, std::span<const ToolCall> ground_truth);

struct CostTiers {
  int financial = 3;
  int discomfort = 3;

  int sum() const { return financial + discomfort; }
  bool operator==(const CostTiers&) const = default;
};

class TierTable {
 public:
  TierTable() = default;
  explicit TierTable(std::map<std::string, CostTiers> tiers, CostTiers fallback = {3, 3});

  static TierTable from_tools(std::span<const ToolSchema> tools, CostTiers fallback = {3, 3});
  /// JSON object: name -> {"financial": 1..3, "discomfort": 1..3}.
  static TierTable load(const std::filesystem::path& path);
  static TierTable from_json(const Json& j);

  /// Known tiers, or the fallback pair for unknown tools.
  CostTiers lookup(const std::string& name) const;
  bool contains(const std::string& name) const { return tiers_.count(name) > 0; }
  void set(const std::string& name, CostTiers t) { tiers_[name] = t; }
  /// Entries from `other` override entries here.
  void merge(const TierTable& other);

  const std::map<std::string, CostTiers>& entries() const { return tiers_; }

 private:
  std::map<std::string, CostTiers> tiers_;
  CostTiers fallback_{3, 3};
};

struct UnnecessaryExam {
  std::string name;
  int financial = 0;
  int discomfort = 0;

  bool operator==(const UnnecessaryExam&) const = default;
};

/// Predicted calls left over after each ground-truth occurrence absorbs at
/// most one same-name predicted call. Arguments are ignored.
std::vector<UnnecessaryExam> unnecessary_exams(std::span<const ToolCall> predicted,
                                               std::span<const ToolCall> ground_truth,
                                               const TierTable& tiers);

/// Sum of (financial + discomfort) / 6 over unnecessary exams.
double cost_reward(std::span<const ToolCall> predicted, std::span<const ToolCall> ground_truth,
                   const TierTable& tiers);

struct RewardWeights {
  double w_tool = 0.5;
  double w_cost = 0.1;
};

struct RewardBreakdown {
  double r_dx = 0.0;
  double r_tool = 0.0;
  double r_cost = 0.0;
  double total = 0.0;
  RewardWeights weights;
  std::optional<DiagnosisCounts> judge_counts;
  std::vector<UnnecessaryExam> unnecessary;
  /// Quality notes such as "judge_unparseable" or "turn_limit".
  std::vector<std::string> flags;

  /// |total - (r_dx + w_tool r_tool - w_cost r_cost)|.
  double recompute_error() const;
};

void to_json(Json& j, const RewardBreakdown& b);
void from_json(const Json& j, RewardBreakdown& b);

RewardBreakdown composite_reward(double r_dx, double r_tool, double r_cost,
                                 const RewardWeights& weights = {});

/// Full episode reward. `counts` absent means no usable diagnosis score
/// (no diagnosis, or judge failure) and yields r_dx = 0.
RewardBreakdown episode_reward(const Transcript& transcript, const CaseProfile& profile,
                               const std::optional<DiagnosisCounts>& counts, const TierTable& tiers,
                               const RewardWeights& weights = {});

}  // namespace dxenv
