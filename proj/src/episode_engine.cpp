#include "dxenv/episode_engine.hpp"

#include <regex>

#include <spdlog/spdlog.h>

#include "dxenv/rng.hpp"
#include "dxenv/text_util.hpp"

namespace dxenv {

namespace {

constexpr std::string_view kOpenTag = "<tool_call>";
constexpr std::string_view kCloseTag = "</tool_call>";

std::string patient_tag(PatientNoise n) { return "patient:" + std::string(to_string(n)); }
std::string exam_tag(ExamNoise n) { return "exam:" + std::string(to_string(n)); }

}  // namespace

void EpisodeConfig::validate() const {
  if (max_turns < 1) throw std::invalid_argument("max_turns must be positive");
  if (!(p_conv >= 0.0 && p_conv <= 1.0)) throw std::invalid_argument("p_conv must lie in [0, 1]");
  if (!(p_exam >= 0.0 && p_exam <= 1.0)) throw std::invalid_argument("p_exam must lie in [0, 1]");
  if (malformed_limit < 1) throw std::invalid_argument("malformed_limit must be positive");
  if (noise_horizon < 1) throw std::invalid_argument("noise_horizon must be positive");
}

int count_tool_call_blocks(const std::string& raw) {
  int n = 0;
  for (auto pos = raw.find(kOpenTag); pos != std::string::npos; pos = raw.find(kOpenTag, pos + kOpenTag.size())) {
    ++n;
  }
  return n;
}

Action parse_agent_output(const std::string& raw) {
  static const std::regex dx_re(R"(\[DIAGNOSIS:\s*([^\]]*)\])");
  std::optional<std::string> diagnosis;
  for (std::sregex_iterator it(raw.begin(), raw.end(), dx_re), end; it != end; ++it) {
    std::string d = text::trim((*it)[1].str());
    if (!d.empty()) diagnosis = std::move(d);
  }
  if (diagnosis) return Action::diagnose(raw, *diagnosis);

  const auto open = raw.find(kOpenTag);
  if (open == std::string::npos) return Action::ask(raw);
  const auto body_start = open + kOpenTag.size();
  const auto close = raw.find(kCloseTag, body_start);
  if (close == std::string::npos) throw MalformedToolCall("unterminated <tool_call> block");

  Json body;
  try {
    body = Json::parse(raw.substr(body_start, close - body_start));
  } catch (const Json::exception& e) {
    throw MalformedToolCall(std::string("tool call body is not valid JSON: ") + e.what());
  }
  if (!body.is_object()) throw MalformedToolCall("tool call body is not a JSON object");
  if (!body.contains("name") || !body.at("name").is_string() || body.at("name").get<std::string>().empty()) {
    throw MalformedToolCall("tool call has no name");
  }
  ToolCall call;
  call.name = body.at("name").get<std::string>();
  if (body.contains("arguments")) {
    Json args = body.at("arguments");
    if (args.is_string()) {
      // Some backends serialize arguments as a JSON string.
      try {
        args = Json::parse(args.get<std::string>());
      } catch (const Json::exception&) {
        throw MalformedToolCall("tool call arguments string is not valid JSON");
      }
    }
    if (args.is_null()) args = Json::object();
    if (!args.is_object()) throw MalformedToolCall("tool call arguments are not an object");
    call.arguments = std::move(args);
  }
  return Action::exam(raw, std::move(call));
}

Observation resolve_exam(const ToolCall& call, const CaseProfile& profile, const NoisePlan* plan) {
  Observation obs;
  obs.kind = ObservationKind::ExamResult;
  if (const ExamEntry* entry = profile.find_exam(call.name)) {
    if (plan) {
      auto it = plan->exam_noises.find(call.name);
      if (it != plan->exam_noises.end()) {
        obs.text = it->second.transformed;
        obs.noise_applied = exam_tag(it->second.type);
        return obs;
      }
    }
    obs.text = entry->canonical_findings;
  } else if (profile.find_tool(call.name)) {
    obs.text = std::string(kNoSignificantFindings);
  } else {
    obs.text = std::string(kExamNotAvailable);
  }
  return obs;
}

Json tools_schema_json(const std::vector<ToolSchema>& tools) {
  Json arr = Json::array();
  for (const auto& t : tools) {
    Json props = Json::object();
    Json required = Json::array();
    for (const auto& [name, spec] : t.parameters) {
      props[name] = {{"type", spec.type}, {"description", spec.description}};
      if (spec.required) required.push_back(name);
    }
    arr.push_back({{"type", "function"},
                   {"function",
                    {{"name", t.name},
                     {"description", t.description},
                     {"parameters", {{"type", "object"}, {"properties", props}, {"required", required}}}}}});
  }
  return arr;
}

std::string render_tools_block(const std::vector<ToolSchema>& tools) {
  const Json arr = tools_schema_json(tools);
  return arr.dump(2) +
         "\n\nTo order an exam, reply with exactly one block of the form:\n"
         "<tool_call>{\"name\": \"<exam name>\", \"arguments\": {<parameters>}}</tool_call>";
}

std::string build_doctor_prompt(const CaseProfile& profile, const std::optional<std::string>& hidden_diagnosis) {
  std::string p =
      "You are an experienced physician conducting a medical consultation. Your goal is to gather information "
      "from the patient, order appropriate examinations, interpret results, and arrive at a diagnosis.\n\n"
      "PATIENT DEMOGRAPHICS:\n" + profile.demographics + "\n\n"
      "PATIENT'S MEDICAL HISTORY:\n" + profile.medical_history + "\n\n";
  if (hidden_diagnosis) {
    p += "HIDDEN CANONICAL DIAGNOSIS (for training/consistency checking only; do NOT reveal to patient):\n" +
         *hidden_diagnosis + "\n\n";
  }
  p += "AVAILABLE EXAMINATIONS:\n" + render_tools_block(profile.available_tools) + "\n\n";
  p +=
      "INSTRUCTIONS:\n\n"
      "- Only output what you would say directly to the patient. Do NOT include your internal thoughts / "
      "reasoning / plan.\n\n"
      "- Pace gently, do NOT overwhelm the patient with too many questions at once.\n\n"
      "- Ask at most 1-2 short questions per turn.\n\n"
      "- Order exams one at a time, do NOT order multiple exams in one turn.\n\n"
      "- The hidden canonical diagnosis is ground truth for this case. Use it to guide your reasoning and keep "
      "the conversation clinically consistent, but do NOT reveal it to the patient before you have enough "
      "information and appropriate exam results.\n\n"
      "- When you give the final diagnosis, it must match the hidden canonical diagnosis exactly.\n\n"
      "- If no hidden canonical diagnosis is provided, reason from the conversation and exam results alone.\n\n"
      "- You MUST end with [DIAGNOSIS: ...] to conclude the consultation.";
  return p;
}

// ---------------------------------------------------------------------------

Episode::Episode(const CaseProfile& profile, const EpisodeConfig& config, PatientSimulator& patient,
                 const NoiseLexicon& lexicon, const PersonaTable& personas)
    : profile_(profile), config_(config), patient_(patient) {
  config_.validate();
  const Rng root(config_.rng_seed);

  if (config_.persona_id) {
    persona_ = personas.find(*config_.persona_id);
    if (!persona_) throw std::invalid_argument("unknown persona_id: " + *config_.persona_id);
  } else {
    Rng persona_rng = root.fork("persona");
    persona_ = &personas.sample(persona_rng);
  }

  Rng noise_rng = root.fork("noise");
  NoisePlan plan;
  plan.seed = noise_rng.seed();
  if (config_.noise_enabled) {
    NoiseSamplingOptions opts{config_.p_conv, config_.p_exam, config_.noise_horizon};
    plan = sample_noise_plan(profile_, opts, lexicon, noise_rng);
  }

  auto& t = state_.transcript;
  t.case_id = profile_.case_id;
  t.persona_id = persona_->persona_id;
  t.noise_plan = std::move(plan);
  t.metadata["rng_seed"] = std::to_string(config_.rng_seed);
  t.metadata["max_turns"] = std::to_string(config_.max_turns);
  t.metadata["noise_enabled"] = config_.noise_enabled ? "true" : "false";
  t.metadata["p_conv"] = Json(config_.p_conv).dump();
  t.metadata["p_exam"] = Json(config_.p_exam).dump();
  t.metadata["patient"] = patient_.describe();

  std::optional<std::string> hidden;
  if (config_.reveal_diagnosis) hidden = profile_.ground_truth_dx;
  agent_messages_.push_back({"system", build_doctor_prompt(profile_, hidden)});
}

void Episode::finish(TerminationReason reason) {
  state_.terminated = true;
  state_.termination_reason = reason;
  state_.transcript.termination_reason = reason;
}

StepResult Episode::protocol_failure(const std::string& raw, const std::string& error) {
  StepResult r;
  ProtocolEvent ev{state_.turn, raw, error};
  state_.transcript.protocol_events.push_back(ev);
  r.protocol_event = ev;
  ++state_.consecutive_malformed;
  spdlog::debug("case {} turn {}: {}", profile_.case_id, state_.turn, error);
  agent_messages_.push_back({"assistant", raw});
  agent_messages_.push_back({"user", std::string(kFormatNotice)});
  if (state_.consecutive_malformed >= config_.malformed_limit) {
    finish(TerminationReason::ProtocolFailure);
  } else if (state_.turn >= config_.max_turns) {
    finish(TerminationReason::TurnLimit);
  }
  r.terminated = state_.terminated;
  return r;
}

StepResult Episode::step(const std::string& agent_output) {
  if (state_.terminated) throw std::logic_error("step on a terminated episode");
  ++state_.turn;

  if (text::trim(agent_output).empty()) return protocol_failure(agent_output, "empty agent output");

  Action action;
  try {
    action = parse_agent_output(agent_output);
  } catch (const MalformedToolCall& e) {
    return protocol_failure(agent_output, e.what());
  }
  state_.consecutive_malformed = 0;

  StepResult r;
  auto& t = state_.transcript;
  switch (action.kind) {
    case ActionKind::Diagnose: {
      t.terminal_diagnosis = action.diagnosis;
      t.turns.push_back(Turn{action, std::nullopt});
      agent_messages_.push_back({"assistant", agent_output});
      finish(TerminationReason::Diagnosed);
      r.terminated = true;
      return r;
    }
    case ActionKind::Exam: {
      if (const int blocks = count_tool_call_blocks(agent_output); blocks > 1) {
        spdlog::warn("case {} turn {}: {} tool_call blocks in one output; only the first is executed",
                     profile_.case_id, state_.turn, blocks);
        t.metadata["extra_tool_call_blocks"] = std::to_string(
            (t.metadata.count("extra_tool_call_blocks") ? std::stoi(t.metadata["extra_tool_call_blocks"]) : 0) +
            blocks - 1);
      }
      Observation obs = resolve_exam(*action.tool_call, profile_, &t.noise_plan);
      state_.exams_called.push_back(*action.tool_call);
      agent_messages_.push_back({"assistant", agent_output});
      agent_messages_.push_back({"tool", obs.text});
      t.turns.push_back(Turn{action, obs});
      r.observation = std::move(obs);
      break;
    }
    case ActionKind::Ask: {
      ++state_.patient_replies;
      PatientNoiseAssignment* noise = nullptr;
      for (auto& a : t.noise_plan.patient_noises) {
        if (a.turn == state_.patient_replies) noise = &a;
      }
      patient_messages_.push_back({"user", agent_output});
      PatientTurn pt;
      pt.profile = &profile_;
      pt.persona = persona_;
      pt.history = patient_messages_;
      pt.noise = noise;
      std::string reply;
      try {
        reply = patient_.reply(pt);
      } catch (const GatewayError& e) {
        throw EpisodeError(profile_.case_id, state_.turn, e.what());
      }
      patient_messages_.push_back({"assistant", reply});
      Observation obs{ObservationKind::PatientReply, reply, std::nullopt};
      if (noise) {
        noise->consumed = true;
        obs.noise_applied = patient_tag(noise->type);
      }
      agent_messages_.push_back({"assistant", agent_output});
      agent_messages_.push_back({"user", reply});
      t.turns.push_back(Turn{action, obs});
      r.observation = std::move(obs);
      break;
    }
  }
  if (state_.turn >= config_.max_turns) finish(TerminationReason::TurnLimit);
  r.terminated = state_.terminated;
  return r;
}

Transcript run_episode(const CaseProfile& profile, const EpisodeConfig& config, Agent& agent,
                       PatientSimulator& patient, const NoiseLexicon& lexicon, const PersonaTable& personas) {
  Episode episode(profile, config, patient, lexicon, personas);
  while (!episode.terminated()) {
    std::string output;
    try {
      output = agent.act(episode.agent_messages());
    } catch (const GatewayError& e) {
      throw EpisodeError(profile.case_id, episode.state().turn + 1, e.what());
    }
    episode.step(output);
  }
  Transcript t = episode.transcript();
  t.metadata["agent"] = agent.describe();
  return t;
}

}  // namespace dxenv
