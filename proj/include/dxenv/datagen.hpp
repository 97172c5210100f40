#pragma once

// Synthetic doctor-patient conversations for supervised finetuning, staged
// after the Calgary-Cambridge interview model, plus corpus split assembly.

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dxenv/core_model.hpp"
#include "dxenv/episode_engine.hpp"
#include "dxenv/noise_engine.hpp"
#include "dxenv/patient_sim.hpp"
#include "dxenv/rng.hpp"

namespace dxenv {

class GenerationRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientCases : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stage { Initiating, Gathering, Exams, ExplainPlan, Closing };

inline constexpr std::array<Stage, 5> kStageOrder = {Stage::Initiating, Stage::Gathering, Stage::Exams,
                                                     Stage::ExplainPlan, Stage::Closing};

std::string_view to_string(Stage s);

struct StagePlan {
  /// Doctor turns allowed per stage, indexed by Stage.
  std::array<int, 5> budgets = {2, 8, 10, 4, 2};
  /// Text appended to the doctor system prompt while in each stage.
  std::array<std::string, 5> addenda = default_addenda();

  static std::array<std::string, 5> default_addenda();
  int budget(Stage s) const { return budgets[static_cast<std::size_t>(s)]; }
  const std::string& addendum(Stage s) const { return addenda[static_cast<std::size_t>(s)]; }
  int total_budget() const;
  /// Throws std::invalid_argument on a non-positive budget.
  void validate() const;
};

struct GenerationConfig {
  StagePlan stages;
  std::uint64_t seed = 0;
};

/// Runs one staged conversation with the canonical diagnosis revealed to the
/// doctor and noise off. The stage advances when its budget is spent; the
/// first tool call jumps to Exams and a diagnosis closes the session.
/// Throws GenerationRejected when the diagnosis differs from the canonical
/// one (after trimming) or the budgets run out.
Transcript generate_conversation(const CaseProfile& profile, const Persona& persona, Agent& doctor,
                                 PatientSimulator& patient, const NoiseLexicon& lexicon,
                                 const PersonaTable& personas, const GenerationConfig& config);

using DoctorFactory = std::function<std::unique_ptr<Agent>(const CaseProfile&, std::uint64_t seed)>;

struct GenerationOutcome {
  std::optional<Transcript> transcript;
  int attempts = 0;
  std::vector<std::string> rejections;
};

inline constexpr int kGenerationRetries = 2;

/// generate_conversation with up to `retries` regenerations, each on a
/// fresh seed derived from `config.seed`. Gives up with an empty outcome.
GenerationOutcome generate_with_retries(const CaseProfile& profile, const Persona& persona,
                                        const DoctorFactory& make_doctor, PatientSimulator& patient,
                                        const NoiseLexicon& lexicon, const PersonaTable& personas,
                                        const GenerationConfig& config, int retries = kGenerationRetries);

/// Re-query hook for post-hoc patient noise: regenerates the reply for
/// `turn` given the history up to and including the doctor's question.
struct PatientRequery {
  PatientSimulator* patient = nullptr;
  const Persona* persona = nullptr;
};

/// Samples a noise plan over the finished conversation and rewrites the
/// assigned patient replies (by re-query, or by the scripted rewrite when no
/// re-query hook is given) and ground-truth exam results. Returns the input
/// unchanged when the plan is empty.
Transcript inject_noise_post_hoc(const Transcript& transcript, const CaseProfile& profile,
                                 const NoiseSamplingOptions& options, const NoiseLexicon& lexicon, Rng& rng,
                                 const PatientRequery* requery = nullptr);

/// Chat-format training record: system prompt (no hidden diagnosis), then
/// assistant/user/tool messages with structured tool calls, plus the tool
/// schemas.
Json to_sft_record(const Transcript& transcript, const CaseProfile& profile);

struct SplitCounts {
  int sft = 0;
  int rl = 0;
  int test = 0;
};

struct CorpusSplits {
  std::vector<CaseProfile> sft;
  std::vector<CaseProfile> rl;
  std::vector<CaseProfile> test;
  /// Held-out sources, never sampled into the other splits.
  std::vector<CaseProfile> ood_test;
};

/// Sources whose cases are reserved for out-of-distribution testing.
bool is_ood_source(CaseSource s);

/// Stratified, disjoint splits drawn evenly across in-distribution sources.
/// Remainders go to sources in enum order. Throws InsufficientCases.
CorpusSplits build_corpus(const std::vector<CaseProfile>& cases, const SplitCounts& counts, Rng& rng);

}  // namespace dxenv
