#pragma once

// Shared domain types for the diagnosis environment: case profiles, the
// agent's actions and observations, noise plans, and episode transcripts.
// All types are plain values; once built they are treated as immutable and
// shared read-only across episode workers.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace dxenv {

using Json = nlohmann::json;

/// Raised when a JSON record does not match the published schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kClauseSeparator = "; ";

enum class CaseSource { DDxPlus, PMCPatients, AgentClinic, Custom };

std::string_view to_string(CaseSource source);
CaseSource case_source_from_string(std::string_view s);

struct ParameterSpec {
  std::string type = "string";
  std::string description;
  bool required = false;

  bool operator==(const ParameterSpec&) const = default;
};

/// One orderable exam as exposed to the agent. Cost tiers are ordinal
/// (1 = low, 3 = high).
struct ToolSchema {
  std::string name;
  std::string description;
  std::map<std::string, ParameterSpec> parameters;
  int cost_financial = 1;
  int cost_discomfort = 1;

  bool operator==(const ToolSchema&) const = default;
};

struct ExamEntry {
  std::string canonical_findings;
  std::vector<std::string> clauses;
  /// Arguments of the ground-truth call for this exam.
  Json arguments = Json::object();

  /// Builds an entry whose clauses are `findings` split on "; ".
  static ExamEntry from_findings(std::string findings, Json arguments = Json::object());

  bool operator==(const ExamEntry&) const = default;
};

struct ToolCall {
  std::string name;
  Json arguments = Json::object();

  bool operator==(const ToolCall&) const = default;
};

struct CaseProfile {
  std::string case_id;
  CaseSource source = CaseSource::Custom;
  std::string demographics;
  std::string medical_history;
  std::vector<std::string> self_reported_symptoms;
  std::string ground_truth_dx;
  std::map<std::string, ExamEntry> exam_map;
  std::vector<ToolSchema> available_tools;

  const ToolSchema* find_tool(std::string_view name) const;
  const ExamEntry* find_exam(std::string_view name) const;

  /// Ground-truth call list: one call per exam_map key, in key order, with
  /// the canonical arguments stored in the corpus.
  std::vector<ToolCall> ground_truth_calls() const;

  bool operator==(const CaseProfile&) const = default;
};

enum class ActionKind { Ask, Exam, Diagnose };
enum class ObservationKind { PatientReply, ExamResult };

std::string_view to_string(ActionKind kind);
std::string_view to_string(ObservationKind kind);

struct Action {
  ActionKind kind = ActionKind::Ask;
  /// Raw agent output, kept verbatim for audits.
  std::string text;
  std::optional<ToolCall> tool_call;
  std::optional<std::string> diagnosis;

  static Action ask(std::string text);
  static Action exam(std::string text, ToolCall call);
  static Action diagnose(std::string text, std::string diagnosis);

  bool operator==(const Action&) const = default;
};

struct Observation {
  ObservationKind kind = ObservationKind::PatientReply;
  std::string text;
  std::optional<std::string> noise_applied;

  bool operator==(const Observation&) const = default;
};

enum class PatientNoise {
  BodyPartSwap,
  SymptomConfusion,
  SeverityChange,
  TemporalChange,
  Omission,
  SelfDiagnosis,
  VagueAnswer,
};

enum class ExamNoise { BodyPartSwap, Omission, Ambiguity };

inline constexpr PatientNoise kAllPatientNoises[] = {
    PatientNoise::BodyPartSwap,  PatientNoise::SymptomConfusion,
    PatientNoise::SeverityChange, PatientNoise::TemporalChange,
    PatientNoise::Omission,      PatientNoise::SelfDiagnosis,
    PatientNoise::VagueAnswer,
};
inline constexpr ExamNoise kAllExamNoises[] = {
    ExamNoise::BodyPartSwap, ExamNoise::Omission, ExamNoise::Ambiguity};

std::string_view to_string(PatientNoise n);
std::string_view to_string(ExamNoise n);
PatientNoise patient_noise_from_string(std::string_view s);
ExamNoise exam_noise_from_string(std::string_view s);

struct PatientNoiseAssignment {
  PatientNoise type = PatientNoise::VagueAnswer;
  /// 1-based ordinal of the patient reply that receives the hint.
  int turn = 1;
  std::string hint;
  /// Resolved placeholder values (original, swapped, phrase, ...).
  std::map<std::string, std::string> slots;
  bool consumed = false;

  bool operator==(const PatientNoiseAssignment&) const = default;
};

struct ExamNoiseAssignment {
  ExamNoise type = ExamNoise::Ambiguity;
  /// Transformed findings, fixed for the whole episode.
  std::string transformed;

  bool operator==(const ExamNoiseAssignment&) const = default;
};

struct NoisePlan {
  std::vector<PatientNoiseAssignment> patient_noises;
  std::map<std::string, ExamNoiseAssignment> exam_noises;
  std::uint64_t seed = 0;

  bool empty() const { return patient_noises.empty() && exam_noises.empty(); }
  const PatientNoiseAssignment* patient_noise_for_turn(int turn) const;

  bool operator==(const NoisePlan&) const = default;
};

enum class TerminationReason { Diagnosed, TurnLimit, ProtocolFailure };

std::string_view to_string(TerminationReason r);
TerminationReason termination_reason_from_string(std::string_view s);

/// One agent action and the observation it elicited. Diagnose turns carry
/// no observation.
struct Turn {
  Action action;
  std::optional<Observation> observation;

  bool operator==(const Turn&) const = default;
};

/// Agent output that could not be resolved into an action.
struct ProtocolEvent {
  int turn = 0;
  std::string raw;
  std::string error;

  bool operator==(const ProtocolEvent&) const = default;
};

struct Transcript {
  std::string case_id;
  std::string persona_id;
  std::vector<Turn> turns;
  std::optional<std::string> terminal_diagnosis;
  std::optional<TerminationReason> termination_reason;
  NoisePlan noise_plan;
  std::vector<ProtocolEvent> protocol_events;
  std::map<std::string, std::string> metadata;

  /// Exam calls in the order the agent issued them.
  std::vector<ToolCall> exam_calls() const;

  bool operator==(const Transcript&) const = default;
};

/// Invariant check for a single profile. Returns one description per
/// violation, each naming the offending field; never throws.
/// `min_distractors` > 0 additionally requires orderable non-ground-truth
/// tools.
std::vector<std::string> validate_case(const CaseProfile& profile,
                                       int min_distractors = 0);

/// validate_case over a corpus plus duplicate case_id detection.
std::vector<std::string> validate_corpus(const std::vector<CaseProfile>& profiles);

std::vector<std::string> validate_transcript(const Transcript& transcript);

// nlohmann/json ADL hooks. from_json throws SchemaError naming the field.
void to_json(Json& j, const ParameterSpec& v);
void from_json(const Json& j, ParameterSpec& v);
void to_json(Json& j, const ToolSchema& v);
void from_json(const Json& j, ToolSchema& v);
void to_json(Json& j, const ExamEntry& v);
void from_json(const Json& j, ExamEntry& v);
void to_json(Json& j, const ToolCall& v);
void from_json(const Json& j, ToolCall& v);
void to_json(Json& j, const CaseProfile& v);
void from_json(const Json& j, CaseProfile& v);
void to_json(Json& j, const Action& v);
void from_json(const Json& j, Action& v);
void to_json(Json& j, const Observation& v);
void from_json(const Json& j, Observation& v);
void to_json(Json& j, const PatientNoiseAssignment& v);
void from_json(const Json& j, PatientNoiseAssignment& v);
void to_json(Json& j, const ExamNoiseAssignment& v);
void from_json(const Json& j, ExamNoiseAssignment& v);
void to_json(Json& j, const NoisePlan& v);
void from_json(const Json& j, NoisePlan& v);
void to_json(Json& j, const Turn& v);
void from_json(const Json& j, Turn& v);
void to_json(Json& j, const ProtocolEvent& v);
void from_json(const Json& j, ProtocolEvent& v);
void to_json(Json& j, const Transcript& v);
void from_json(const Json& j, Transcript& v);

}  // namespace dxenv
