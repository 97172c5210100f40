#pragma once

// Dataset-level evaluation: diagnosis metrics, tool-use efficiency, and
// percentile bootstrap confidence intervals with paired significance.

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dxenv/core_model.hpp"
#include "dxenv/llm_gateway.hpp"
#include "dxenv/reward.hpp"
#include "dxenv/rng.hpp"

namespace dxenv {

class InsufficientSamples : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MisalignedPairs : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct JacAcc {
  double jac = 0.0;
  int acc = 0;
};

/// Count form: jac = m / (g + p - m), acc = 1 iff m == g. Throws InvalidCounts.
JacAcc jac_acc(const DiagnosisCounts& counts);

/// max(0, a . b) for unit vectors.
double sim_from_embeddings(const std::vector<double>& a, const std::vector<double>& b);
/// Embeds both strings through the gateway and applies the clamp.
double sim_score(const std::string& prediction, const std::string& ground_truth, Gateway& embedder);

struct ToolEfficiency {
  int calls = 0;
  double precision = 0.0;
  double recall = 0.0;
  double call_f1 = 0.0;
  double dollar_precision = 0.0;
  double dollar_recall = 0.0;
  double dollar_f1 = 0.0;
};

/// Harmonic mean, 0 when either operand is 0.
double harmonic_mean(double a, double b);

/// Precision counts duplicate calls individually; recall is over the set of
/// ground-truth exam names. The dollar variant weights every call and exam
/// by its tier sum. No calls gives precision 1; no ground-truth exams gives
/// recall 1.
ToolEfficiency tool_efficiency(std::span<const ToolCall> calls, const std::vector<std::string>& gt_exams,
                               const TierTable& tiers);
ToolEfficiency tool_efficiency(const Transcript& transcript, const CaseProfile& profile, const TierTable& tiers);

struct EpisodeScore {
  std::string case_id;
  std::string system;
  double sim = 0.0;
  double jac = 0.0;
  int acc = 0;
  int calls = 0;
  double call_f1 = 0.0;
  double dollar_f1 = 0.0;
  RewardBreakdown reward;
  std::string termination;
  std::vector<std::string> flags;
  std::optional<std::string> error;
};

void to_json(Json& j, const EpisodeScore& s);
void from_json(const Json& j, EpisodeScore& s);

/// Named metric columns, in report order.
inline const std::vector<std::string> kMetricNames = {"sim", "jac", "acc", "calls", "call_f1", "dollar_f1", "reward"};
double metric_value(const EpisodeScore& s, const std::string& metric);

struct BootstrapReport {
  std::string metric;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int B = 0;
  std::map<std::string, double> p_values;

  double half_width() const { return 0.5 * (ci_high - ci_low); }
};

Json to_json(const BootstrapReport& r);

/// Percentile CI of the mean over B resamples of indices.
/// Throws InsufficientSamples for fewer than 2 samples.
BootstrapReport bootstrap(std::span<const double> samples, int B, Rng& rng, double level = 0.95);

struct PairedBootstrap {
  BootstrapReport a;
  BootstrapReport b;
  BootstrapReport diff;  // mean of (b - a)
  double p_value = 1.0;
};

/// Resamples case indices jointly. p = min(1, 2 min(P(d <= 0), P(d >= 0)))
/// over the resampled mean differences, so identical inputs give p = 1.
PairedBootstrap paired_bootstrap(std::span<const double> a, std::span<const double> b, int B, Rng& rng,
                                 double level = 0.95);

/// Reorders `b` to follow `a`'s case order. Throws MisalignedPairs when the
/// case_id sets differ or contain duplicates.
std::vector<EpisodeScore> align_pairs(const std::vector<EpisodeScore>& a, const std::vector<EpisodeScore>& b);

/// "mean ± half-width" with three decimals.
std::string format_ci(const BootstrapReport& r, int decimals = 3);

struct SystemScores {
  std::string name;
  std::vector<EpisodeScore> scores;
};

struct SystemReport {
  std::string name;
  std::size_t n = 0;
  std::size_t flagged = 0;
  std::map<std::string, BootstrapReport> metrics;
};

struct EvaluationReport {
  std::vector<SystemReport> systems;
  int B = 0;
  std::uint64_t seed = 0;

  Json to_json() const;
  /// Diagnosis table (Sim/Jac/Acc) followed by tool-use table
  /// (Calls/Call F1/$ F1) and, when present, paired p-values.
  std::string to_text() const;
};

/// Every system after the first is compared to the first, paired on case_id.
EvaluationReport build_report(const std::vector<SystemScores>& systems, int B, std::uint64_t seed);

}  // namespace dxenv
