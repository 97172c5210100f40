#include "dxenv/datagen.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "dxenv/text_util.hpp"

namespace dxenv {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Initiating: return "Initiating";
    case Stage::Gathering: return "Gathering";
    case Stage::Exams: return "Exams";
    case Stage::ExplainPlan: return "ExplainPlan";
    case Stage::Closing: return "Closing";
  }
  return "?";
}

std::array<std::string, 5> StagePlan::default_addenda() {
  return {
      "CURRENT STAGE: Initiating the session. Greet the patient, introduce yourself, and ask what brings "
      "them in today.",
      "CURRENT STAGE: Gathering information. Explore the presenting complaint with open then focused "
      "questions: onset, duration, severity, associated symptoms, relevant history.",
      "CURRENT STAGE: Medical exams. Order the examinations needed to confirm or rule out your leading "
      "diagnoses, one per turn, and briefly explain each result to the patient.",
      "CURRENT STAGE: Explanation and planning. Explain what the findings mean in plain language and "
      "outline the next steps.",
      "CURRENT STAGE: Closing the session. Summarize the consultation, check the patient's understanding, "
      "and end with [DIAGNOSIS: ...].",
  };
}

int StagePlan::total_budget() const {
  int n = 0;
  for (int b : budgets) n += b;
  return n;
}

void StagePlan::validate() const {
  for (Stage s : kStageOrder) {
    if (budget(s) < 1) throw std::invalid_argument("stage budget for " + std::string(to_string(s)) + " must be positive");
  }
}

Transcript generate_conversation(const CaseProfile& profile, const Persona& persona, Agent& doctor,
                                 PatientSimulator& patient, const NoiseLexicon& lexicon,
                                 const PersonaTable& personas, const GenerationConfig& config) {
  config.stages.validate();
  EpisodeConfig ec;
  ec.max_turns = config.stages.total_budget();
  ec.rng_seed = config.seed;
  ec.persona_id = persona.persona_id;
  ec.noise_enabled = false;
  ec.reveal_diagnosis = true;

  Episode episode(profile, ec, patient, lexicon, personas);
  std::size_t stage = 0;
  int used = 0;
  std::vector<std::string> trace;

  while (!episode.terminated()) {
    if (used >= config.stages.budgets[stage]) {
      ++stage;
      used = 0;
      if (stage == kStageOrder.size()) {
        throw GenerationRejected("case " + profile.case_id + ": stage budgets exhausted without a diagnosis");
      }
    }
    auto history = episode.agent_messages();
    history.front().content += "\n\n" + config.stages.addenda[stage];
    const std::string output = doctor.act(history);

    std::optional<ActionKind> kind;
    try {
      kind = parse_agent_output(output).kind;
    } catch (const MalformedToolCall&) {
    }
    if (kind == ActionKind::Exam && stage < static_cast<std::size_t>(Stage::Exams)) {
      stage = static_cast<std::size_t>(Stage::Exams);
      used = 0;
    } else if (kind == ActionKind::Diagnose) {
      stage = static_cast<std::size_t>(Stage::Closing);
    }
    ++used;
    trace.emplace_back(to_string(kStageOrder[stage]));
    episode.step(output);
  }

  Transcript t = episode.transcript();
  if (t.termination_reason != TerminationReason::Diagnosed) {
    throw GenerationRejected("case " + profile.case_id + ": conversation ended by " +
                             std::string(to_string(*t.termination_reason)));
  }
  if (text::trim(*t.terminal_diagnosis) != text::trim(profile.ground_truth_dx)) {
    throw GenerationRejected("case " + profile.case_id + ": diagnosis '" + *t.terminal_diagnosis +
                             "' does not match the canonical '" + profile.ground_truth_dx + "'");
  }
  t.metadata["agent"] = doctor.describe();
  t.metadata["generator"] = "staged";
  t.metadata["stage_trace"] = text::join(trace, ",");
  return t;
}

GenerationOutcome generate_with_retries(const CaseProfile& profile, const Persona& persona,
                                        const DoctorFactory& make_doctor, PatientSimulator& patient,
                                        const NoiseLexicon& lexicon, const PersonaTable& personas,
                                        const GenerationConfig& config, int retries) {
  GenerationOutcome out;
  for (int attempt = 0; attempt <= retries; ++attempt) {
    GenerationConfig cfg = config;
    if (attempt > 0) cfg.seed = derive_seed(config.seed, "retry-" + std::to_string(attempt));
    ++out.attempts;
    auto doctor = make_doctor(profile, cfg.seed);
    try {
      out.transcript = generate_conversation(profile, persona, *doctor, patient, lexicon, personas, cfg);
      out.transcript->metadata["generation_attempts"] = std::to_string(out.attempts);
      return out;
    } catch (const GenerationRejected& e) {
      spdlog::info("attempt {} rejected: {}", attempt + 1, e.what());
      out.rejections.emplace_back(e.what());
    }
  }
  spdlog::warn("case {}: dropped after {} attempts", profile.case_id, out.attempts);
  return out;
}

Transcript inject_noise_post_hoc(const Transcript& transcript, const CaseProfile& profile,
                                 const NoiseSamplingOptions& options, const NoiseLexicon& lexicon, Rng& rng,
                                 const PatientRequery* requery) {
  int replies = 0;
  for (const auto& turn : transcript.turns) {
    if (turn.action.kind == ActionKind::Ask && turn.observation) ++replies;
  }
  NoiseSamplingOptions opts = options;
  opts.horizon = std::max(1, replies);
  NoisePlan plan = sample_noise_plan(profile, opts, lexicon, rng);
  if (plan.empty()) return transcript;

  Transcript out = transcript;
  std::vector<ChatMessage> history;
  int ordinal = 0;
  for (auto& turn : out.turns) {
    if (!turn.observation) continue;
    auto& obs = *turn.observation;
    if (turn.action.kind == ActionKind::Ask) {
      ++ordinal;
      history.push_back({"user", turn.action.text});
      for (auto& a : plan.patient_noises) {
        if (a.turn != ordinal) continue;
        if (requery && requery->patient) {
          PatientTurn pt;
          pt.profile = &profile;
          pt.persona = requery->persona;
          pt.history = history;
          pt.noise = &a;
          obs.text = requery->patient->reply(pt);
        } else {
          obs.text = apply_scripted_patient_noise(obs.text, a);
        }
        obs.noise_applied = "patient:" + std::string(to_string(a.type));
        a.consumed = true;
      }
      history.push_back({"assistant", obs.text});
    } else if (turn.action.kind == ActionKind::Exam && turn.action.tool_call) {
      const auto& name = turn.action.tool_call->name;
      auto it = plan.exam_noises.find(name);
      const ExamEntry* entry = profile.find_exam(name);
      if (it != plan.exam_noises.end() && entry && obs.text == entry->canonical_findings) {
        obs.text = it->second.transformed;
        obs.noise_applied = "exam:" + std::string(to_string(it->second.type));
      }
    }
  }
  out.noise_plan = std::move(plan);
  out.metadata["post_hoc_noise"] = "true";
  out.metadata["post_hoc_p_conv"] = Json(options.p_conv).dump();
  out.metadata["post_hoc_p_exam"] = Json(options.p_exam).dump();
  return out;
}

Json to_sft_record(const Transcript& transcript, const CaseProfile& profile) {
  Json messages = Json::array();
  messages.push_back({{"role", "system"}, {"content", build_doctor_prompt(profile)}});
  int call_id = 0;
  for (const auto& turn : transcript.turns) {
    const auto& a = turn.action;
    if (a.kind == ActionKind::Exam && a.tool_call) {
      const std::string id = "call_" + std::to_string(++call_id);
      std::string spoken = a.text.substr(0, a.text.find("<tool_call>"));
      messages.push_back({{"role", "assistant"},
                          {"content", text::trim(spoken)},
                          {"tool_calls",
                           Json::array({{{"id", id},
                                         {"type", "function"},
                                         {"function",
                                          {{"name", a.tool_call->name},
                                           {"arguments", a.tool_call->arguments.dump()}}}}})}});
      if (turn.observation) {
        messages.push_back(
            {{"role", "tool"}, {"tool_call_id", id}, {"name", a.tool_call->name}, {"content", turn.observation->text}});
      }
    } else {
      messages.push_back({{"role", "assistant"}, {"content", a.text}});
      if (turn.observation) messages.push_back({{"role", "user"}, {"content", turn.observation->text}});
    }
  }
  return Json{{"case_id", transcript.case_id},
              {"persona_id", transcript.persona_id},
              {"diagnosis", transcript.terminal_diagnosis.value_or("")},
              {"messages", messages},
              {"tools", tools_schema_json(profile.available_tools)},
              {"noise_plan", transcript.noise_plan}};
}

bool is_ood_source(CaseSource s) { return s == CaseSource::AgentClinic; }

CorpusSplits build_corpus(const std::vector<CaseProfile>& cases, const SplitCounts& counts, Rng& rng) {
  if (counts.sft < 0 || counts.rl < 0 || counts.test < 0) throw std::invalid_argument("split counts must be >= 0");

  std::set<std::string> ids;
  std::map<CaseSource, std::vector<CaseProfile>> by_source;
  CorpusSplits splits;
  for (const auto& c : cases) {
    if (!ids.insert(c.case_id).second) throw std::invalid_argument("duplicate case_id " + c.case_id);
    if (is_ood_source(c.source)) {
      splits.ood_test.push_back(c);
    } else {
      by_source[c.source].push_back(c);
    }
  }
  auto by_id = [](const CaseProfile& a, const CaseProfile& b) { return a.case_id < b.case_id; };
  std::sort(splits.ood_test.begin(), splits.ood_test.end(), by_id);

  const int requested = counts.sft + counts.rl + counts.test;
  if (by_source.empty()) {
    if (requested > 0) throw InsufficientCases("no in-distribution cases to split");
    return splits;
  }

  const int n_sources = static_cast<int>(by_source.size());
  auto share = [n_sources](int total, int i) { return total / n_sources + (i < total % n_sources ? 1 : 0); };

  int i = 0;
  for (auto& [source, pool] : by_source) {
    const int sft = share(counts.sft, i), rl = share(counts.rl, i), test = share(counts.test, i);
    const int need = sft + rl + test;
    if (need > static_cast<int>(pool.size())) {
      throw InsufficientCases(std::string(to_string(source)) + ": need " + std::to_string(need) + " cases, have " +
                              std::to_string(pool.size()));
    }
    std::sort(pool.begin(), pool.end(), by_id);
    Rng source_rng = rng.fork(to_string(source));
    source_rng.shuffle(pool);
    auto it = pool.begin();
    splits.sft.insert(splits.sft.end(), it, it + sft);
    it += sft;
    splits.rl.insert(splits.rl.end(), it, it + rl);
    it += rl;
    splits.test.insert(splits.test.end(), it, it + test);
    ++i;
  }
  return splits;
}

}  // namespace dxenv
