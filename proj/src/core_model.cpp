#include "dxenv/core_model.hpp"

#include <algorithm>
#include <set>

#include "dxenv/text_util.hpp"

namespace dxenv {
namespace {

template <typename T>
T required(const Json& j, const char* key) {
  if (!j.is_object()) throw SchemaError(std::string("expected object holding '") + key + "'");
  const auto it = j.find(key);
  if (it == j.end()) throw SchemaError(std::string("missing field '") + key + "'");
  try {
    return it->template get<T>();
  } catch (const SchemaError& e) {
    throw SchemaError(std::string(key) + "." + e.what());
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T optional_field(const Json& j, const char* key, T fallback) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->template get<T>();
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("field '") + key + "': " + e.what());
  }
}

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::pair<Enum, std::string_view> (&table)[N],
                const char* what) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  throw SchemaError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <typename Enum, std::size_t N>
std::string_view enum_name(Enum v, const std::pair<Enum, std::string_view> (&table)[N]) {
  for (const auto& [value, name] : table) {
    if (value == v) return name;
  }
  return "?";
}

constexpr std::pair<CaseSource, std::string_view> kSources[] = {
    {CaseSource::DDxPlus, "DDxPlus"},
    {CaseSource::PMCPatients, "PMCPatients"},
    {CaseSource::AgentClinic, "AgentClinic"},
    {CaseSource::Custom, "custom"},
};

constexpr std::pair<ActionKind, std::string_view> kActionKinds[] = {
    {ActionKind::Ask, "Ask"},
    {ActionKind::Exam, "Exam"},
    {ActionKind::Diagnose, "Diagnose"},
};

constexpr std::pair<ObservationKind, std::string_view> kObservationKinds[] = {
    {ObservationKind::PatientReply, "PatientReply"},
    {ObservationKind::ExamResult, "ExamResult"},
};

constexpr std::pair<PatientNoise, std::string_view> kPatientNoises[] = {
    {PatientNoise::BodyPartSwap, "BodyPartSwap"},
    {PatientNoise::SymptomConfusion, "SymptomConfusion"},
    {PatientNoise::SeverityChange, "SeverityChange"},
    {PatientNoise::TemporalChange, "TemporalChange"},
    {PatientNoise::Omission, "Omission"},
    {PatientNoise::SelfDiagnosis, "SelfDiagnosis"},
    {PatientNoise::VagueAnswer, "VagueAnswer"},
};

constexpr std::pair<ExamNoise, std::string_view> kExamNoises[] = {
    {ExamNoise::BodyPartSwap, "BodyPartSwap"},
    {ExamNoise::Omission, "Omission"},
    {ExamNoise::Ambiguity, "Ambiguity"},
};

constexpr std::pair<TerminationReason, std::string_view> kReasons[] = {
    {TerminationReason::Diagnosed, "Diagnosed"},
    {TerminationReason::TurnLimit, "TurnLimit"},
    {TerminationReason::ProtocolFailure, "ProtocolFailure"},
};

}  // namespace

std::string_view to_string(CaseSource source) { return enum_name(source, kSources); }
CaseSource case_source_from_string(std::string_view s) {
  return parse_enum(s, kSources, "source");
}
std::string_view to_string(ActionKind kind) { return enum_name(kind, kActionKinds); }
std::string_view to_string(ObservationKind kind) { return enum_name(kind, kObservationKinds); }
std::string_view to_string(PatientNoise n) { return enum_name(n, kPatientNoises); }
std::string_view to_string(ExamNoise n) { return enum_name(n, kExamNoises); }
PatientNoise patient_noise_from_string(std::string_view s) {
  return parse_enum(s, kPatientNoises, "patient noise type");
}
ExamNoise exam_noise_from_string(std::string_view s) {
  return parse_enum(s, kExamNoises, "exam noise type");
}
std::string_view to_string(TerminationReason r) { return enum_name(r, kReasons); }
TerminationReason termination_reason_from_string(std::string_view s) {
  return parse_enum(s, kReasons, "termination reason");
}

ExamEntry ExamEntry::from_findings(std::string findings, Json arguments) {
  ExamEntry entry;
  entry.clauses = text::split(findings, kClauseSeparator);
  entry.canonical_findings = std::move(findings);
  entry.arguments = std::move(arguments);
  return entry;
}

const ToolSchema* CaseProfile::find_tool(std::string_view name) const {
  for (const auto& tool : available_tools) {
    if (tool.name == name) return &tool;
  }
  return nullptr;
}

const ExamEntry* CaseProfile::find_exam(std::string_view name) const {
  const auto it = exam_map.find(std::string(name));
  return it == exam_map.end() ? nullptr : &it->second;
}

std::vector<ToolCall> CaseProfile::ground_truth_calls() const {
  std::vector<ToolCall> calls;
  calls.reserve(exam_map.size());
  for (const auto& [name, entry] : exam_map) {
    calls.push_back(ToolCall{name, entry.arguments});
  }
  return calls;
}

Action Action::ask(std::string text) {
  Action a;
  a.kind = ActionKind::Ask;
  a.text = std::move(text);
  return a;
}

Action Action::exam(std::string text, ToolCall call) {
  Action a;
  a.kind = ActionKind::Exam;
  a.text = std::move(text);
  a.tool_call = std::move(call);
  return a;
}

Action Action::diagnose(std::string text, std::string diagnosis) {
  Action a;
  a.kind = ActionKind::Diagnose;
  a.text = std::move(text);
  a.diagnosis = std::move(diagnosis);
  return a;
}

const PatientNoiseAssignment* NoisePlan::patient_noise_for_turn(int turn) const {
  for (const auto& n : patient_noises) {
    if (n.turn == turn) return &n;
  }
  return nullptr;
}

std::vector<ToolCall> Transcript::exam_calls() const {
  std::vector<ToolCall> calls;
  for (const auto& turn : turns) {
    if (turn.action.kind == ActionKind::Exam && turn.action.tool_call) {
      calls.push_back(*turn.action.tool_call);
    }
  }
  return calls;
}

std::vector<std::string> validate_case(const CaseProfile& profile, int min_distractors) {
  std::vector<std::string> violations;
  if (profile.case_id.empty()) violations.emplace_back("case_id: empty");
  if (text::trim(profile.ground_truth_dx).empty()) {
    violations.emplace_back("ground_truth_dx: empty");
  }

  std::set<std::string> tool_names;
  for (const auto& tool : profile.available_tools) {
    if (tool.name.empty()) {
      violations.emplace_back("available_tools: tool with empty name");
      continue;
    }
    if (!tool_names.insert(tool.name).second) {
      violations.push_back("available_tools: duplicate tool name '" + tool.name + "'");
    }
    if (tool.cost_financial < 1 || tool.cost_financial > 3) {
      violations.push_back("available_tools[" + tool.name + "].cost_financial: tier " +
                           std::to_string(tool.cost_financial) + " outside {1,2,3}");
    }
    if (tool.cost_discomfort < 1 || tool.cost_discomfort > 3) {
      violations.push_back("available_tools[" + tool.name + "].cost_discomfort: tier " +
                           std::to_string(tool.cost_discomfort) + " outside {1,2,3}");
    }
  }

  for (const auto& [name, entry] : profile.exam_map) {
    if (!tool_names.contains(name)) {
      violations.push_back("exam_map[" + name + "]: exam not listed in available_tools");
    }
    if (text::join(entry.clauses, kClauseSeparator) != entry.canonical_findings) {
      violations.push_back("exam_map[" + name +
                           "].clauses: joined clauses differ from canonical_findings");
    }
    if (!entry.arguments.is_object()) {
      violations.push_back("exam_map[" + name + "].arguments: not a JSON object");
    }
  }

  if (min_distractors > 0) {
    int distractors = 0;
    for (const auto& tool : profile.available_tools) {
      if (!profile.exam_map.contains(tool.name)) ++distractors;
    }
    if (distractors < min_distractors) {
      violations.push_back("available_tools: " + std::to_string(distractors) +
                           " distractor(s), expected at least " +
                           std::to_string(min_distractors));
    }
  }
  return violations;
}

std::vector<std::string> validate_corpus(const std::vector<CaseProfile>& profiles) {
  std::vector<std::string> violations;
  std::set<std::string> ids;
  for (const auto& profile : profiles) {
    for (auto& v : validate_case(profile)) {
      violations.push_back(profile.case_id + ": " + v);
    }
    if (!ids.insert(profile.case_id).second) {
      violations.push_back("case_id: duplicate id '" + profile.case_id + "'");
    }
  }
  return violations;
}

std::vector<std::string> validate_transcript(const Transcript& t) {
  std::vector<std::string> violations;
  for (std::size_t i = 0; i < t.turns.size(); ++i) {
    const auto& turn = t.turns[i];
    const auto& a = turn.action;
    const std::string where = "turns[" + std::to_string(i) + "]";
    if ((a.kind == ActionKind::Exam) != a.tool_call.has_value()) {
      violations.push_back(where + ": Exam kind and tool_call presence disagree");
    }
    if ((a.kind == ActionKind::Diagnose) != a.diagnosis.has_value()) {
      violations.push_back(where + ": Diagnose kind and diagnosis presence disagree");
    }
    if (a.kind == ActionKind::Diagnose) {
      if (i + 1 != t.turns.size()) violations.push_back(where + ": Diagnose is not the last turn");
      if (turn.observation) violations.push_back(where + ": Diagnose turn carries an observation");
      continue;
    }
    if (!turn.observation) {
      violations.push_back(where + ": missing observation");
      continue;
    }
    const auto expected = a.kind == ActionKind::Ask ? ObservationKind::PatientReply
                                                    : ObservationKind::ExamResult;
    if (turn.observation->kind != expected) {
      violations.push_back(where + ": " + std::string(to_string(a.kind)) + " answered by " +
                           std::string(to_string(turn.observation->kind)));
    }
  }
  if (t.termination_reason == TerminationReason::Diagnosed) {
    if (t.turns.empty()) violations.emplace_back("turns: empty for a diagnosed episode");
    else if (t.turns.back().action.kind != ActionKind::Diagnose)
      violations.emplace_back("turns: diagnosed episode does not end in Diagnose");
    if (!t.terminal_diagnosis) violations.emplace_back("terminal_diagnosis: missing");
  }
  return violations;
}

// ---------------------------------------------------------------------------
// JSON encoding

void to_json(Json& j, const ParameterSpec& v) {
  j = Json{{"type", v.type}, {"description", v.description}, {"required", v.required}};
}

void from_json(const Json& j, ParameterSpec& v) {
  v.type = optional_field<std::string>(j, "type", "string");
  v.description = optional_field<std::string>(j, "description", "");
  v.required = optional_field<bool>(j, "required", false);
}

void to_json(Json& j, const ToolSchema& v) {
  j = Json{{"name", v.name},
           {"description", v.description},
           {"parameters", v.parameters},
           {"cost_financial", v.cost_financial},
           {"cost_discomfort", v.cost_discomfort}};
}

void from_json(const Json& j, ToolSchema& v) {
  v.name = required<std::string>(j, "name");
  v.description = optional_field<std::string>(j, "description", "");
  v.parameters = optional_field<std::map<std::string, ParameterSpec>>(j, "parameters", {});
  v.cost_financial = required<int>(j, "cost_financial");
  v.cost_discomfort = required<int>(j, "cost_discomfort");
}

void to_json(Json& j, const ExamEntry& v) {
  j = Json{{"canonical_findings", v.canonical_findings},
           {"clauses", v.clauses},
           {"arguments", v.arguments}};
}

void from_json(const Json& j, ExamEntry& v) {
  v.canonical_findings = required<std::string>(j, "canonical_findings");
  if (j.contains("clauses")) {
    v.clauses = required<std::vector<std::string>>(j, "clauses");
  } else {
    v.clauses = text::split(v.canonical_findings, kClauseSeparator);
  }
  v.arguments = optional_field<Json>(j, "arguments", Json::object());
}

void to_json(Json& j, const ToolCall& v) {
  j = Json{{"name", v.name}, {"arguments", v.arguments}};
}

void from_json(const Json& j, ToolCall& v) {
  v.name = required<std::string>(j, "name");
  v.arguments = optional_field<Json>(j, "arguments", Json::object());
}

void to_json(Json& j, const CaseProfile& v) {
  j = Json{{"case_id", v.case_id},
           {"source", to_string(v.source)},
           {"demographics", v.demographics},
           {"medical_history", v.medical_history},
           {"self_reported_symptoms", v.self_reported_symptoms},
           {"ground_truth_dx", v.ground_truth_dx},
           {"exam_map", v.exam_map},
           {"available_tools", v.available_tools}};
}

void from_json(const Json& j, CaseProfile& v) {
  v.case_id = required<std::string>(j, "case_id");
  v.source = case_source_from_string(required<std::string>(j, "source"));
  v.demographics = required<std::string>(j, "demographics");
  v.medical_history = optional_field<std::string>(j, "medical_history", "");
  v.self_reported_symptoms = required<std::vector<std::string>>(j, "self_reported_symptoms");
  v.ground_truth_dx = required<std::string>(j, "ground_truth_dx");
  v.exam_map = required<std::map<std::string, ExamEntry>>(j, "exam_map");
  v.available_tools = required<std::vector<ToolSchema>>(j, "available_tools");
}

void to_json(Json& j, const Action& v) {
  j = Json{{"kind", to_string(v.kind)}, {"text", v.text}};
  if (v.tool_call) j["tool_call"] = *v.tool_call;
  if (v.diagnosis) j["diagnosis"] = *v.diagnosis;
}

void from_json(const Json& j, Action& v) {
  v.kind = parse_enum(required<std::string>(j, "kind"), kActionKinds, "action kind");
  v.text = required<std::string>(j, "text");
  v.tool_call.reset();
  v.diagnosis.reset();
  if (j.contains("tool_call")) v.tool_call = required<ToolCall>(j, "tool_call");
  if (j.contains("diagnosis")) v.diagnosis = required<std::string>(j, "diagnosis");
  if ((v.kind == ActionKind::Exam) != v.tool_call.has_value()) {
    throw SchemaError("action: Exam kind and tool_call presence disagree");
  }
  if ((v.kind == ActionKind::Diagnose) != v.diagnosis.has_value()) {
    throw SchemaError("action: Diagnose kind and diagnosis presence disagree");
  }
}

void to_json(Json& j, const Observation& v) {
  j = Json{{"kind", to_string(v.kind)}, {"text", v.text}};
  if (v.noise_applied) j["noise_applied"] = *v.noise_applied;
}

void from_json(const Json& j, Observation& v) {
  v.kind = parse_enum(required<std::string>(j, "kind"), kObservationKinds, "observation kind");
  v.text = required<std::string>(j, "text");
  v.noise_applied.reset();
  if (j.contains("noise_applied")) v.noise_applied = required<std::string>(j, "noise_applied");
}

void to_json(Json& j, const PatientNoiseAssignment& v) {
  j = Json{{"type", to_string(v.type)},
           {"turn", v.turn},
           {"hint", v.hint},
           {"slots", v.slots},
           {"consumed", v.consumed}};
}

void from_json(const Json& j, PatientNoiseAssignment& v) {
  v.type = patient_noise_from_string(required<std::string>(j, "type"));
  v.turn = required<int>(j, "turn");
  v.hint = required<std::string>(j, "hint");
  v.slots = optional_field<std::map<std::string, std::string>>(j, "slots", {});
  v.consumed = optional_field<bool>(j, "consumed", false);
}

void to_json(Json& j, const ExamNoiseAssignment& v) {
  j = Json{{"type", to_string(v.type)}, {"transformed", v.transformed}};
}

void from_json(const Json& j, ExamNoiseAssignment& v) {
  v.type = exam_noise_from_string(required<std::string>(j, "type"));
  v.transformed = required<std::string>(j, "transformed");
}

void to_json(Json& j, const NoisePlan& v) {
  j = Json{{"patient_noises", v.patient_noises},
           {"exam_noises", v.exam_noises},
           {"seed", v.seed}};
}

void from_json(const Json& j, NoisePlan& v) {
  v.patient_noises =
      optional_field<std::vector<PatientNoiseAssignment>>(j, "patient_noises", {});
  v.exam_noises =
      optional_field<std::map<std::string, ExamNoiseAssignment>>(j, "exam_noises", {});
  v.seed = optional_field<std::uint64_t>(j, "seed", 0);
}

void to_json(Json& j, const Turn& v) {
  j = Json{{"action", v.action}};
  if (v.observation) j["observation"] = *v.observation;
}

void from_json(const Json& j, Turn& v) {
  v.action = required<Action>(j, "action");
  v.observation.reset();
  if (j.contains("observation")) v.observation = required<Observation>(j, "observation");
}

void to_json(Json& j, const ProtocolEvent& v) {
  j = Json{{"turn", v.turn}, {"raw", v.raw}, {"error", v.error}};
}

void from_json(const Json& j, ProtocolEvent& v) {
  v.turn = required<int>(j, "turn");
  v.raw = required<std::string>(j, "raw");
  v.error = required<std::string>(j, "error");
}

void to_json(Json& j, const Transcript& v) {
  j = Json{{"case_id", v.case_id},
           {"persona_id", v.persona_id},
           {"turns", v.turns},
           {"noise_plan", v.noise_plan},
           {"protocol_events", v.protocol_events},
           {"metadata", v.metadata}};
  j["terminal_diagnosis"] = v.terminal_diagnosis ? Json(*v.terminal_diagnosis) : Json(nullptr);
  j["termination_reason"] =
      v.termination_reason ? Json(to_string(*v.termination_reason)) : Json(nullptr);
}

void from_json(const Json& j, Transcript& v) {
  v.case_id = required<std::string>(j, "case_id");
  v.persona_id = optional_field<std::string>(j, "persona_id", "");
  v.turns = required<std::vector<Turn>>(j, "turns");
  v.noise_plan = optional_field<NoisePlan>(j, "noise_plan", {});
  v.protocol_events = optional_field<std::vector<ProtocolEvent>>(j, "protocol_events", {});
  v.metadata = optional_field<std::map<std::string, std::string>>(j, "metadata", {});
  v.terminal_diagnosis.reset();
  v.termination_reason.reset();
  if (j.contains("terminal_diagnosis") && !j["terminal_diagnosis"].is_null()) {
    v.terminal_diagnosis = required<std::string>(j, "terminal_diagnosis");
  }
  if (j.contains("termination_reason") && !j["termination_reason"].is_null()) {
    v.termination_reason =
        termination_reason_from_string(required<std::string>(j, "termination_reason"));
  }
}

}  // namespace dxenv
