#pragma once

// Diagnosis scoring by a judge that reports condition counts: the LLM
// judge protocol, a deterministic oracle for offline runs, and the
// three-bucket probe harness that measures judge accuracy.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dxenv/core_model.hpp"
#include "dxenv/llm_gateway.hpp"
#include "dxenv/reward.hpp"

namespace dxenv {

class JudgeUnparseable : public std::runtime_error {
 public:
  JudgeUnparseable(const std::string& what, std::string last_raw, int attempts)
      : std::runtime_error(what), last_raw_(std::move(last_raw)), attempts_(attempts) {}
  const std::string& last_raw() const { return last_raw_; }
  int attempts() const { return attempts_; }

 private:
  std::string last_raw_;
  int attempts_;
};

struct JudgeCounts {
  DiagnosisCounts counts;
  std::string raw_response;
  int attempts = 1;
  /// matched was pulled into [0, min(gt, pred)].
  bool clamped = false;
};

void to_json(Json& j, const JudgeCounts& c);

std::string render_judge_prompt(const std::string& ground_truth, const std::string& predicted);

/// Reads the three `key: integer` lines. Returns nullopt when a line is
/// missing, non-numeric or negative, or gt_count is 0.
std::optional<DiagnosisCounts> parse_judge_response(const std::string& raw);

/// Pulls matched into [0, min(gt, pred)]; returns true if it changed.
bool clamp_counts(DiagnosisCounts& c);

class Judge {
 public:
  virtual ~Judge() = default;
  virtual JudgeCounts judge(const std::string& ground_truth, const std::string& predicted) = 0;
  virtual std::string describe() const = 0;
};

inline constexpr int kJudgeAttempts = 3;
inline constexpr double kJudgeTemperature = 0.7;
inline constexpr double kProbeTemperature = 0.0;

class LlmJudge final : public Judge {
 public:
  LlmJudge(std::shared_ptr<Gateway> gateway, double temperature = kJudgeTemperature,
           int max_attempts = kJudgeAttempts);

  /// Throws JudgeUnparseable after max_attempts unparseable responses.
  JudgeCounts judge(const std::string& ground_truth, const std::string& predicted) override;
  std::string describe() const override { return "llm:" + gateway_->describe(); }

 private:
  std::shared_ptr<Gateway> gateway_;
  double temperature_;
  int max_attempts_;
};

/// Lowercased alias -> canonical condition name.
class SynonymTable {
 public:
  SynonymTable() = default;

  static SynonymTable defaults();
  /// JSON object: canonical name -> list of aliases.
  static SynonymTable load(const std::filesystem::path& path);
  static SynonymTable from_json(const Json& j);

  void add(const std::string& canonical, const std::string& alias);
  std::string canonicalize(const std::string& condition) const;
  void merge(const SynonymTable& other);
  std::size_t size() const { return alias_.size(); }
  Json to_json() const;

 private:
  std::map<std::string, std::string> alias_;
};

/// Splits on ';' and on the standalone word "and". Commas never split.
/// Pieces are lowercased and trimmed; empty pieces are dropped.
std::vector<std::string> split_conditions(const std::string& diagnosis);

std::set<std::string> condition_set(const std::string& diagnosis, const SynonymTable& synonyms);

class OracleJudge final : public Judge {
 public:
  explicit OracleJudge(SynonymTable synonyms = SynonymTable::defaults());

  JudgeCounts judge(const std::string& ground_truth, const std::string& predicted) override;
  std::string describe() const override { return "oracle"; }

 private:
  SynonymTable synonyms_;
};

enum class ProbeBucket { Synonym, Distractor, MultiPartial };

std::string_view to_string(ProbeBucket b);
ProbeBucket probe_bucket_from_string(std::string_view s);
DiagnosisCounts expected_counts(ProbeBucket b);

inline constexpr std::size_t kProbeBucketSize = 33;

struct ProbePair {
  ProbeBucket bucket = ProbeBucket::Synonym;
  std::string ground_truth;
  std::string prediction;
  DiagnosisCounts expected;
};

void to_json(Json& j, const ProbePair& p);
void from_json(const Json& j, ProbePair& p);

std::vector<ProbePair> load_probe_pairs(const std::filesystem::path& path);

inline const std::vector<std::string> kAcuityPrefixes = {"acute", "chronic", "recurrent", "severe", "mild"};

/// Bucket sizes, bucket-consistent expectations, and the Distractor
/// coupling filters (substring-disjoint names, no pair differing only by
/// an acuity prefix, no pair differing only by a trailing integer).
std::vector<std::string> validate_probe_set(const std::vector<ProbePair>& pairs,
                                            std::size_t bucket_size = kProbeBucketSize);

struct ProbeOutcome {
  ProbePair pair;
  std::optional<JudgeCounts> counts;
  std::string error;
  double r_hat = 0.0;
  double r_expected = 0.0;
  bool correct = false;
};

struct BucketStats {
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  double mae = 0.0;
};

struct ProbeReport {
  std::map<ProbeBucket, BucketStats> buckets;
  std::vector<ProbeOutcome> outcomes;

  Json to_json() const;
  std::string to_table() const;
};

/// Scores every pair independently. A judge failure counts as incorrect
/// with r_hat = 0.
ProbeReport run_probe(const std::vector<ProbePair>& pairs, Judge& judge);

}  // namespace dxenv
