#include "dxenv/noise_engine.hpp"

#include <algorithm>
#include <fstream>
#include <regex>

#include <spdlog/spdlog.h>

#include "dxenv/text_util.hpp"

namespace dxenv {

NoiseLexicon NoiseLexicon::defaults() {
  NoiseLexicon lex;
  lex.body_part_adjacency = {
      {"abdomen", {"stomach", "pelvis", "lower back"}},
      {"ankle", {"foot", "shin", "knee"}},
      {"arm", {"shoulder", "elbow", "chest"}},
      {"back", {"side", "shoulder", "hip"}},
      {"bladder", {"pelvis", "groin", "kidney"}},
      {"chest", {"stomach", "shoulder", "throat"}},
      {"ear", {"jaw", "throat", "head"}},
      {"elbow", {"arm", "wrist", "shoulder"}},
      {"eye", {"forehead", "head", "ear"}},
      {"foot", {"ankle", "toe", "heel"}},
      {"groin", {"hip", "pelvis", "bladder"}},
      {"hand", {"wrist", "finger", "arm"}},
      {"head", {"neck", "eye", "ear"}},
      {"hip", {"groin", "lower back", "thigh"}},
      {"jaw", {"ear", "throat", "neck"}},
      {"kidney", {"lower back", "side", "bladder"}},
      {"knee", {"thigh", "shin", "hip"}},
      {"leg", {"hip", "knee", "foot"}},
      {"liver", {"stomach", "side", "ribs"}},
      {"lower back", {"hip", "side", "abdomen"}},
      {"lung", {"heart", "ribs", "shoulder"}},
      {"neck", {"shoulder", "throat", "head"}},
      {"pelvis", {"abdomen", "groin", "hip"}},
      {"ribs", {"chest", "side", "back"}},
      {"shoulder", {"neck", "arm", "chest"}},
      {"side", {"back", "ribs", "stomach"}},
      {"stomach", {"liver", "chest", "abdomen"}},
      {"throat", {"chest", "neck", "jaw"}},
      {"wrist", {"hand", "elbow", "arm"}},
  };
  lex.symptom_confusions = {
      {"aching", {"throbbing", "stabbing"}},
      {"burning", {"tingling", "stinging"}},
      {"cramping", {"stabbing", "aching"}},
      {"dull", {"sharp", "burning"}},
      {"itching", {"tingling", "burning"}},
      {"numbness", {"tingling", "weakness"}},
      {"pressure", {"tightness", "burning"}},
      {"sharp", {"dull", "aching"}},
      {"stabbing", {"cramping", "burning"}},
      {"throbbing", {"pounding", "aching"}},
      {"tightness", {"pressure", "heaviness"}},
      {"tingling", {"numbness", "burning"}},
  };
  lex.severity_scale = {"mild", "moderate", "severe", "excruciating"};
  lex.duration_units = {"minute", "hour", "day", "week", "month", "year"};
  lex.vague_phrases = {
      "I'm not really sure about that.",
      "It's hard to say, really.",
      "I don't know, it just feels off.",
      "Maybe? I haven't really paid attention.",
      "Sort of, I guess. It comes and goes.",
  };
  lex.self_dx_template = "I looked it up online and it seems like {condition}.";
  lex.self_dx_conditions = {"a cold",         "the flu",       "allergies",     "food poisoning",
                            "a pulled muscle", "stress",       "a stomach bug", "acid reflux",
                            "a migraine",     "dehydration",   "a sinus infection"};
  lex.ambiguity_templates = {
      "Findings are equivocal — {original}. Cannot definitively rule out alternative interpretation.",
      "Results show {original}. However, findings are not entirely clear and may warrant further evaluation.",
      "{original}. Note: image quality/sample quality limits definitive interpretation.",
  };
  return lex;
}

void NoiseLexicon::validate() const {
  for (const auto& [part, adj] : body_part_adjacency) {
    if (adj.empty()) throw SchemaError("body_part_adjacency[" + part + "]: empty adjacency list");
  }
  for (const auto& [d, terms] : symptom_confusions) {
    if (terms.empty()) throw SchemaError("symptom_confusions[" + d + "]: empty confusion list");
  }
  if (ambiguity_templates.size() != 3) {
    throw SchemaError("ambiguity_templates: expected exactly 3 templates, got " +
                      std::to_string(ambiguity_templates.size()));
  }
  for (const auto& t : ambiguity_templates) {
    if (!text::contains(t, "{original}")) throw SchemaError("ambiguity_templates: missing {original}");
  }
  if (vague_phrases.empty()) throw SchemaError("vague_phrases: empty");
  if (self_dx_conditions.empty()) throw SchemaError("self_dx_conditions: empty");
  if (!text::contains(self_dx_template, "{condition}")) {
    throw SchemaError("self_dx_template: missing {condition}");
  }
  if (severity_scale.size() < 2) throw SchemaError("severity_scale: needs at least 2 levels");
}

NoiseLexicon NoiseLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open noise lexicon: " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  NoiseLexicon lex = j.get<NoiseLexicon>();
  lex.validate();
  return lex;
}

std::vector<std::string> NoiseLexicon::body_parts() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : body_part_adjacency) out.push_back(k);
  return out;
}

std::vector<std::string> NoiseLexicon::descriptors() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : symptom_confusions) out.push_back(k);
  return out;
}

void to_json(Json& j, const NoiseLexicon& v) {
  j = Json{{"version", v.version},
           {"body_part_adjacency", v.body_part_adjacency},
           {"symptom_confusions", v.symptom_confusions},
           {"severity_scale", v.severity_scale},
           {"duration_units", v.duration_units},
           {"vague_phrases", v.vague_phrases},
           {"self_dx_template", v.self_dx_template},
           {"self_dx_conditions", v.self_dx_conditions},
           {"ambiguity_templates", v.ambiguity_templates}};
}

void from_json(const Json& j, NoiseLexicon& v) {
  try {
    v.version = j.value("version", std::string("unversioned"));
    j.at("body_part_adjacency").get_to(v.body_part_adjacency);
    j.at("symptom_confusions").get_to(v.symptom_confusions);
    j.at("severity_scale").get_to(v.severity_scale);
    j.at("duration_units").get_to(v.duration_units);
    j.at("vague_phrases").get_to(v.vague_phrases);
    j.at("self_dx_template").get_to(v.self_dx_template);
    j.at("self_dx_conditions").get_to(v.self_dx_conditions);
    j.at("ambiguity_templates").get_to(v.ambiguity_templates);
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("noise lexicon: ") + e.what());
  }
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out(tmpl);
  for (const auto& [key, value] : values) {
    const std::string token = "{" + key + "}";
    for (auto pos = out.find(token); pos != std::string::npos; pos = out.find(token, pos + value.size())) {
      out.replace(pos, token.size(), value);
    }
  }
  return out;
}

namespace {

std::string symptom_text(const CaseProfile& profile) {
  return text::join(profile.self_reported_symptoms, ". ");
}

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  return items[rng.uniform_index(items.size())];
}

std::vector<std::string> self_dx_candidates(const CaseProfile& profile, const NoiseLexicon& lex) {
  std::vector<std::string> out;
  for (const auto& c : lex.self_dx_conditions) {
    std::string core = c;
    for (std::string_view article : {"a ", "an ", "the "}) {
      if (core.starts_with(article)) core = core.substr(article.size());
    }
    if (!text::icontains(profile.ground_truth_dx, core)) out.push_back(c);
  }
  return out;
}

struct Duration {
  std::string original;  // as written, e.g. "3 weeks"
  long count = 0;
  std::string unit;      // singular
};

std::optional<Duration> find_duration(const std::string& s, const NoiseLexicon& lex) {
  if (lex.duration_units.empty()) return std::nullopt;
  std::string alternation;
  for (const auto& u : lex.duration_units) {
    if (!alternation.empty()) alternation += '|';
    alternation += u;
  }
  const std::regex re("\\b([0-9]+)\\s+(" + alternation + ")(s?)\\b", std::regex::icase);
  std::smatch m;
  if (!std::regex_search(s, m, re)) return std::nullopt;
  Duration d;
  d.original = m[0].str();
  try {
    d.count = std::stol(m[1].str());
  } catch (const std::exception&) {
    return std::nullopt;
  }
  d.unit = text::to_lower(m[2].str());
  return d;
}

std::string plural(long n, const std::string& unit) {
  return std::to_string(n) + " " + unit + (n == 1 ? "" : "s");
}

struct SeverityMatch {
  std::string original;
  std::string replacement;
};

std::optional<SeverityMatch> find_severity(const std::string& s, const NoiseLexicon& lex) {
  const auto match = text::find_first_phrase(s, lex.severity_scale);
  if (!match) return std::nullopt;
  const auto it = std::find(lex.severity_scale.begin(), lex.severity_scale.end(), match->phrase);
  const auto idx = static_cast<std::size_t>(it - lex.severity_scale.begin());
  // Downplay by one step; the mildest level can only move up.
  const std::size_t target = idx > 0 ? idx - 1 : 1;
  return SeverityMatch{match->phrase, lex.severity_scale[target]};
}

}  // namespace

std::vector<PatientNoise> eligible_patient_noises(const CaseProfile& profile, const NoiseLexicon& lex) {
  const std::string symptoms = symptom_text(profile);
  std::vector<PatientNoise> out;
  for (PatientNoise n : kAllPatientNoises) {
    bool ok = true;
    switch (n) {
      case PatientNoise::BodyPartSwap:
        ok = text::find_first_phrase(symptoms, lex.body_parts()).has_value();
        break;
      case PatientNoise::SymptomConfusion:
        ok = text::find_first_phrase(symptoms, lex.descriptors()).has_value();
        break;
      case PatientNoise::Omission:
        ok = profile.self_reported_symptoms.size() >= 2;
        break;
      case PatientNoise::SelfDiagnosis:
        ok = !self_dx_candidates(profile, lex).empty();
        break;
      case PatientNoise::SeverityChange:
      case PatientNoise::TemporalChange:
      case PatientNoise::VagueAnswer:
        ok = true;
        break;
    }
    if (ok) out.push_back(n);
  }
  return out;
}

std::vector<ExamNoise> eligible_exam_noises(const ExamEntry& entry, const NoiseLexicon& lex) {
  std::vector<ExamNoise> out;
  if (entry.canonical_findings.empty()) return out;
  if (text::find_first_phrase(entry.canonical_findings, lex.body_parts())) {
    out.push_back(ExamNoise::BodyPartSwap);
  }
  const auto clauses = text::split(entry.canonical_findings, kClauseSeparator);
  const auto non_empty = std::count_if(clauses.begin(), clauses.end(),
                                       [](const std::string& c) { return !text::trim(c).empty(); });
  if (non_empty >= 2) out.push_back(ExamNoise::Omission);
  out.push_back(ExamNoise::Ambiguity);
  return out;
}

RenderedHint render_patient_hint(PatientNoise type, const CaseProfile& profile,
                                 const NoiseLexicon& lex, Rng& rng) {
  const std::string symptoms = symptom_text(profile);
  RenderedHint h;
  switch (type) {
    case PatientNoise::BodyPartSwap: {
      const auto m = text::find_first_phrase(symptoms, lex.body_parts());
      if (!m) throw IneligibleNoise("BodyPartSwap: no body-part keyword in symptoms");
      h.slots["original"] = m->phrase;
      h.slots["swapped"] = pick(lex.body_part_adjacency.at(m->phrase), rng);
      h.text = fill_template(kBodyPartSwapHint, h.slots);
      break;
    }
    case PatientNoise::SymptomConfusion: {
      const auto m = text::find_first_phrase(symptoms, lex.descriptors());
      if (!m) throw IneligibleNoise("SymptomConfusion: no descriptor in symptoms");
      h.slots["original"] = m->phrase;
      h.slots["confused"] = pick(lex.symptom_confusions.at(m->phrase), rng);
      h.text = fill_template(kSymptomConfusionHint, h.slots);
      break;
    }
    case PatientNoise::SeverityChange: {
      std::string instruction;
      if (const auto m = find_severity(symptoms, lex)) {
        h.slots["original"] = m->original;
        h.slots["replacement"] = m->replacement;
        instruction = "report the pain/symptom as " + m->replacement + " instead of " + m->original;
      } else {
        instruction = std::string(kSeverityFallback);
      }
      h.slots["severity_instruction"] = instruction;
      h.text = fill_template(kSeverityHint, {{"severity_instruction", instruction}});
      break;
    }
    case PatientNoise::TemporalChange: {
      std::string instruction;
      if (const auto d = find_duration(symptoms, lex)) {
        const long upper = std::max(2L, 2 * d->count);
        // Uniform over [1, upper] without the original count.
        long perturbed = 1 + static_cast<long>(rng.uniform_index(static_cast<std::size_t>(upper - 1)));
        if (perturbed >= d->count && d->count >= 1 && d->count <= upper) ++perturbed;
        h.slots["original"] = d->original;
        h.slots["replacement"] = plural(perturbed, d->unit);
        instruction = "say " + plural(perturbed, d->unit) + " instead of " + plural(d->count, d->unit);
      } else {
        instruction = std::string(kTemporalFallback);
      }
      h.slots["temporal_instruction"] = instruction;
      h.text = fill_template(kTemporalHint, {{"temporal_instruction", instruction}});
      break;
    }
    case PatientNoise::Omission: {
      if (profile.self_reported_symptoms.size() < 2) {
        throw IneligibleNoise("Omission: requires at least 2 symptoms");
      }
      h.slots["omitted_symptom"] = pick(profile.self_reported_symptoms, rng);
      h.text = fill_template(kOmissionHint, h.slots);
      break;
    }
    case PatientNoise::SelfDiagnosis: {
      const auto candidates = self_dx_candidates(profile, lex);
      if (candidates.empty()) throw IneligibleNoise("SelfDiagnosis: every condition overlaps the diagnosis");
      h.slots["condition"] = pick(candidates, rng);
      h.slots["phrase"] = fill_template(lex.self_dx_template, {{"condition", h.slots["condition"]}});
      h.text = fill_template(kSelfDiagnosisHint, {{"phrase", h.slots["phrase"]}});
      break;
    }
    case PatientNoise::VagueAnswer: {
      h.slots["vague"] = pick(lex.vague_phrases, rng);
      h.text = fill_template(kVagueHint, h.slots);
      break;
    }
  }
  return h;
}

std::string apply_exam_noise(ExamNoise type, const ExamEntry& findings, const NoiseLexicon& lex,
                             Rng& rng) {
  const std::string& original = findings.canonical_findings;
  if (original.empty()) throw IneligibleNoise("exam noise on empty findings");
  switch (type) {
    case ExamNoise::BodyPartSwap: {
      const auto m = text::find_first_phrase(original, lex.body_parts());
      if (!m) throw IneligibleNoise("BodyPartSwap: no body-part token in findings");
      const std::string& swapped = pick(lex.body_part_adjacency.at(m->phrase), rng);
      std::string out = original;
      out.replace(m->pos, m->length, text::match_case(swapped, original.substr(m->pos, m->length)));
      return out;
    }
    case ExamNoise::Omission: {
      auto clauses = findings.clauses.empty() ? text::split(original, kClauseSeparator) : findings.clauses;
      std::vector<std::size_t> non_empty;
      for (std::size_t i = 0; i < clauses.size(); ++i) {
        if (!text::trim(clauses[i]).empty()) non_empty.push_back(i);
      }
      if (non_empty.size() < 2) throw IneligibleNoise("Omission: findings have a single clause");
      clauses.erase(clauses.begin() + static_cast<std::ptrdiff_t>(pick(non_empty, rng)));
      return text::join(clauses, kClauseSeparator);
    }
    case ExamNoise::Ambiguity:
      return fill_template(pick(lex.ambiguity_templates, rng), {{"original", original}});
  }
  throw IneligibleNoise("unknown exam noise");
}

NoisePlan sample_noise_plan(const CaseProfile& profile, const NoiseSamplingOptions& options,
                            const NoiseLexicon& lex, Rng& rng) {
  if (!(options.p_conv >= 0.0 && options.p_conv <= 1.0) ||
      !(options.p_exam >= 0.0 && options.p_exam <= 1.0)) {
    throw std::invalid_argument("noise probabilities must lie in [0, 1]");
  }
  if (options.horizon < 1) throw std::invalid_argument("noise horizon must be positive");

  NoisePlan plan;
  plan.seed = rng.seed();
  Rng patient_rng = rng.fork("patient-noise");
  Rng exam_rng = rng.fork("exam-noise");

  if (patient_rng.bernoulli(options.p_conv)) {
    const auto eligible = eligible_patient_noises(profile, lex);
    if (eligible.empty()) {
      spdlog::info("case {}: patient noise fired but no type is eligible", profile.case_id);
    } else {
      std::size_t k = 1 + patient_rng.uniform_index(3);
      k = std::min({k, eligible.size(), static_cast<std::size_t>(options.horizon)});
      const auto types = patient_rng.sample_without_replacement(eligible.size(), k);
      const auto turns = patient_rng.sample_without_replacement(static_cast<std::size_t>(options.horizon), k);
      for (std::size_t i = 0; i < k; ++i) {
        PatientNoiseAssignment a;
        a.type = eligible[types[i]];
        a.turn = static_cast<int>(turns[i]) + 1;
        RenderedHint h = render_patient_hint(a.type, profile, lex, patient_rng);
        a.hint = std::move(h.text);
        a.slots = std::move(h.slots);
        plan.patient_noises.push_back(std::move(a));
      }
      std::sort(plan.patient_noises.begin(), plan.patient_noises.end(),
                [](const auto& x, const auto& y) { return x.turn < y.turn; });
    }
  }

  for (const auto& [name, entry] : profile.exam_map) {
    if (!exam_rng.bernoulli(options.p_exam)) continue;
    const auto eligible = eligible_exam_noises(entry, lex);
    if (eligible.empty()) continue;
    ExamNoiseAssignment a;
    a.type = pick(eligible, exam_rng);
    a.transformed = apply_exam_noise(a.type, entry, lex, exam_rng);
    plan.exam_noises.emplace(name, std::move(a));
  }
  return plan;
}

namespace {

std::vector<std::string> sentences(const std::string& reply) {
  std::vector<std::string> out;
  for (auto& s : text::split(reply, ". ")) {
    std::string t = text::trim(s);
    while (!t.empty() && t.back() == '.') t.pop_back();
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

std::string join_sentences(const std::vector<std::string>& parts) {
  if (parts.empty()) return {};
  return text::join(parts, ". ") + ".";
}

std::string slot(const PatientNoiseAssignment& a, const std::string& key) {
  auto it = a.slots.find(key);
  return it == a.slots.end() ? std::string() : it->second;
}

std::string replace_or_append(std::string reply, const std::string& original,
                              const std::string& replacement, const std::string& fallback) {
  if (!original.empty() && text::replace_phrase(reply, original, replacement) > 0) return reply;
  return text::trim(reply + " " + fallback);
}

}  // namespace

std::string apply_scripted_patient_noise(const std::string& reply, const PatientNoiseAssignment& a) {
  switch (a.type) {
    case PatientNoise::BodyPartSwap:
      return replace_or_append(reply, slot(a, "original"), slot(a, "swapped"),
                               "It's really more in my " + slot(a, "swapped") + " area.");
    case PatientNoise::SymptomConfusion:
      return replace_or_append(reply, slot(a, "original"), slot(a, "confused"),
                               "It's kind of a " + slot(a, "confused") + " feeling.");
    case PatientNoise::SeverityChange:
      return replace_or_append(reply, slot(a, "original"), slot(a, "replacement"),
                               "It's honestly not that bad.");
    case PatientNoise::TemporalChange:
      return replace_or_append(reply, slot(a, "original"), slot(a, "replacement"),
                               "It started a while ago, I think.");
    case PatientNoise::Omission: {
      const std::string omitted = slot(a, "omitted_symptom");
      std::vector<std::string> kept;
      for (auto& s : sentences(reply)) {
        if (omitted.empty() || !text::icontains(s, omitted)) kept.push_back(s);
      }
      if (kept.empty()) return "I'm not sure, doctor.";
      return join_sentences(kept);
    }
    case PatientNoise::SelfDiagnosis:
      return text::trim(reply + " " + slot(a, "phrase"));
    case PatientNoise::VagueAnswer:
      return slot(a, "vague");
  }
  return reply;
}

}  // namespace dxenv
