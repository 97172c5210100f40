#include "dxenv/patient_sim.hpp"

#include <fstream>
#include <set>

#include "dxenv/noise_engine.hpp"
#include "dxenv/text_util.hpp"

namespace dxenv {

void Persona::validate() const {
  if (persona_id.empty()) throw std::invalid_argument("persona_id is empty");
  if (personality.instruction.empty()) throw std::invalid_argument(persona_id + ": personality instruction is empty");
  if (language_proficiency.instruction.empty()) {
    throw std::invalid_argument(persona_id + ": language_proficiency instruction is empty");
  }
  if (recall.instruction.empty()) throw std::invalid_argument(persona_id + ": recall instruction is empty");
}

void to_json(Json& j, const Persona& p) {
  auto axis = [](const PersonaAxis& a) { return Json{{"label", a.label}, {"instruction", a.instruction}}; };
  j = Json{{"persona_id", p.persona_id},
           {"personality", axis(p.personality)},
           {"language_proficiency", axis(p.language_proficiency)},
           {"recall", axis(p.recall)}};
}

void from_json(const Json& j, Persona& p) {
  try {
    auto axis = [](const Json& a) {
      return PersonaAxis{a.at("label").get<std::string>(), a.at("instruction").get<std::string>()};
    };
    p.persona_id = j.at("persona_id").get<std::string>();
    p.personality = axis(j.at("personality"));
    p.language_proficiency = axis(j.at("language_proficiency"));
    p.recall = axis(j.at("recall"));
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("persona: ") + e.what());
  }
}

PersonaTable::PersonaTable(std::vector<Persona> personas) : personas_(std::move(personas)) {
  std::set<std::string> seen;
  for (const auto& p : personas_) {
    p.validate();
    if (!seen.insert(p.persona_id).second) throw std::invalid_argument("duplicate persona_id " + p.persona_id);
  }
}

PersonaTable PersonaTable::defaults() {
  const std::vector<PersonaAxis> personalities = {
      {"Plain", "Answer the doctor's questions plainly and cooperatively, without extra detail."},
      {"Verbose", "Tend to add extra detail and small tangents to your answers."},
      {"Pleasing", "Try to please the doctor; you tend to agree and may understate your concerns."},
      {"Impatient", "You are short on patience and want the visit to move quickly."},
      {"Distrustful", "You are skeptical of doctors and sometimes question why things are asked."},
      {"Overanxious", "You worry a lot about your health and may ask whether it is serious."},
  };
  const std::vector<PersonaAxis> languages = {
      {"Basic", "Use short, simple sentences and everyday words; you do not know medical terms."},
      {"Intermediate", "Speak in ordinary sentences; you know a few common medical words."},
      {"Advanced", "Speak fluently and precisely; you may use common medical terms correctly."},
  };
  const std::vector<PersonaAxis> recalls = {
      {"Low", "You have trouble recalling your past medical history; give vague or partial answers about it."},
      {"High", "You recall your past medical history accurately and in detail when asked."},
  };
  std::vector<Persona> out;
  for (const auto& p : personalities) {
    for (const auto& l : languages) {
      for (const auto& r : recalls) {
        Persona persona;
        persona.persona_id = text::to_lower(p.label + "_" + l.label + "_" + r.label);
        persona.personality = p;
        persona.language_proficiency = l;
        persona.recall = r;
        out.push_back(std::move(persona));
      }
    }
  }
  return PersonaTable(std::move(out));
}

PersonaTable PersonaTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open persona table: " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  const Json& arr = j.is_object() ? j.at("personas") : j;
  return PersonaTable(arr.get<std::vector<Persona>>());
}

const Persona& PersonaTable::sample(Rng& rng) const {
  if (personas_.empty()) throw EmptyPersonaTable();
  return personas_[rng.uniform_index(personas_.size())];
}

const Persona* PersonaTable::find(const std::string& persona_id) const {
  for (const auto& p : personas_) {
    if (p.persona_id == persona_id) return &p;
  }
  return nullptr;
}

Json PersonaTable::to_json() const {
  Json arr = Json::array();
  for (const auto& p : personas_) arr.push_back(p);
  return Json{{"version", "default-1"}, {"personas", arr}};
}

std::string build_patient_prompt(const CaseProfile& profile, const Persona& persona,
                                 const std::optional<std::string>& hint) {
  std::string symptoms;
  for (const auto& s : profile.self_reported_symptoms) symptoms += "- " + s + "\n";
  if (!symptoms.empty()) symptoms.pop_back();

  std::string prompt =
      "You are a patient visiting a doctor. You should role-play as a real patient would behave during a "
      "medical consultation.\n\n"
      "YOUR DEMOGRAPHICS:\n" + profile.demographics + "\n\n"
      "YOUR MEDICAL HISTORY:\n" + profile.medical_history + "\n\n"
      "YOUR CURRENT SYMPTOMS:\n" + symptoms + "\n\n"
      "SELECTED PATIENT PERSONA:\n\n"
      "Personality: [" + persona.personality.label + "] " + persona.personality.instruction + "\n\n"
      "Language Proficiency: [" + persona.language_proficiency.label + "] " +
      persona.language_proficiency.instruction + "\n\n"
      "Medical History Recall: [" + persona.recall.label + "] " + persona.recall.instruction + "\n\n"
      "INSTRUCTIONS:\n\n"
      "- Follow the selected persona naturally, but do NOT mention the persona labels to the doctor.\n\n"
      "- Describe your symptoms using everyday, non-medical language when possible.\n\n"
      "- Pace gently. Keep each reply brief and natural, usually 1-3 spoken sentences.\n\n"
      "- Do NOT volunteer all your symptoms or history at once. Share information gradually as the doctor "
      "asks.\n\n"
      "- Even if your selected personality is Verbose, do NOT dominate the conversation or dump long "
      "monologues unless the doctor explicitly asks for more detail.\n\n"
      "- Only output spoken words. Do NOT include thoughts, reasoning, narration, stage directions, bracketed "
      "text, labels, or body language.\n\n"
      "- Stay faithful to your true demographics and current symptoms. For past medical history, follow your "
      "selected recall setting exactly.";
  if (hint && !hint->empty()) prompt += "\n\n" + *hint;
  return prompt;
}

namespace {

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "the", "and", "you", "your", "are", "have", "has", "had", "any", "how", "what", "when", "where",
      "which", "who", "why", "did", "does", "can", "could", "would", "should", "been", "was", "were",
      "with", "for", "that", "this", "there", "these", "those", "about", "from", "into", "been", "tell",
      "more", "much", "many", "long", "some", "feel", "feeling", "today", "doing", "experiencing",
      "notice", "noticed", "get", "got", "also", "other", "anything", "else", "like", "describe",
      "please", "ever", "over", "last", "past", "recently", "well", "them", "they", "their", "its",
      "our", "not", "but", "all", "yes", "very", "just", "than", "then", "let", "know",
  };
  return words;
}

std::vector<std::string> content_words(const std::string& s) {
  std::vector<std::string> out;
  for (auto& w : text::words(s)) {
    if (w.size() >= 3 && !stopwords().count(w)) out.push_back(std::move(w));
  }
  return out;
}

}  // namespace

std::string scripted_reply(const std::string& question, const CaseProfile& profile) {
  const auto asked = content_words(question);
  const std::set<std::string> asked_set(asked.begin(), asked.end());
  const bool all = asked_set.count("symptom") || asked_set.count("symptoms");

  std::vector<std::string> picked;
  for (const auto& statement : profile.self_reported_symptoms) {
    bool hit = all;
    if (!hit) {
      for (const auto& w : text::words(statement)) {
        if (asked_set.count(w)) {
          hit = true;
          break;
        }
      }
    }
    if (hit) {
      std::string s = text::trim(statement);
      while (!s.empty() && s.back() == '.') s.pop_back();
      picked.push_back(std::move(s));
    }
  }
  if (picked.empty()) return std::string(kScriptedFallback);
  return text::join(picked, ". ") + ".";
}

std::string ScriptedPatient::reply(const PatientTurn& turn) {
  if (!turn.profile) throw std::invalid_argument("patient turn without a profile");
  std::string question;
  for (auto it = turn.history.rbegin(); it != turn.history.rend(); ++it) {
    if (it->role == "user") {
      question = it->content;
      break;
    }
  }
  std::string reply = scripted_reply(question, *turn.profile);
  if (turn.noise) reply = apply_scripted_patient_noise(reply, *turn.noise);
  return reply;
}

LlmPatient::LlmPatient(std::shared_ptr<Gateway> gateway, double temperature, int max_output_tokens)
    : gateway_(std::move(gateway)), temperature_(temperature), max_output_tokens_(max_output_tokens) {
  if (!gateway_) throw std::invalid_argument("LlmPatient needs a gateway");
}

std::string LlmPatient::reply(const PatientTurn& turn) {
  if (!turn.profile || !turn.persona) throw std::invalid_argument("patient turn needs profile and persona");
  std::optional<std::string> hint;
  if (turn.noise) hint = turn.noise->hint;
  std::vector<ChatMessage> messages;
  messages.push_back({"system", build_patient_prompt(*turn.profile, *turn.persona, hint)});
  messages.insert(messages.end(), turn.history.begin(), turn.history.end());
  return text::trim(gateway_->chat(messages, temperature_, max_output_tokens_));
}

}  // namespace dxenv
