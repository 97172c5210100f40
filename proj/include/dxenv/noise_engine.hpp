#pragma once

// Observation noise: seven patient noise types realized as one-turn prompt
// hints, three exam noise types realized as text rewrites of the findings.

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dxenv/core_model.hpp"
#include "dxenv/rng.hpp"

namespace dxenv {

class IneligibleNoise : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NoiseLexicon {
  std::string version = "default-1";
  std::map<std::string, std::vector<std::string>> body_part_adjacency;
  std::map<std::string, std::vector<std::string>> symptom_confusions;
  /// Ordered mildest first.
  std::vector<std::string> severity_scale;
  /// Singular unit names recognized in "N unit(s)" durations.
  std::vector<std::string> duration_units;
  std::vector<std::string> vague_phrases;
  std::string self_dx_template;  // contains {condition}
  std::vector<std::string> self_dx_conditions;
  std::vector<std::string> ambiguity_templates;  // each contains {original}

  static NoiseLexicon defaults();
  static NoiseLexicon load(const std::filesystem::path& path);

  /// Throws SchemaError when a lexicon invariant is broken.
  void validate() const;

  std::vector<std::string> body_parts() const;
  std::vector<std::string> descriptors() const;

  bool operator==(const NoiseLexicon&) const = default;
};

void to_json(Json& j, const NoiseLexicon& v);
void from_json(const Json& j, NoiseLexicon& v);

// Verbatim hint templates.
inline constexpr std::string_view kBodyPartSwapHint =
    "When answering, refer to your {original} symptom as being in your {swapped} area instead.";
inline constexpr std::string_view kSymptomConfusionHint =
    "When describing the sensation, say '{confused}' instead of '{original}'.";
inline constexpr std::string_view kSeverityHint = "When answering: {severity_instruction}.";
inline constexpr std::string_view kTemporalHint = "When answering: {temporal_instruction}.";
inline constexpr std::string_view kOmissionHint =
    "In this response, do NOT mention {omitted_symptom}. Talk only about your other symptoms or details.";
inline constexpr std::string_view kSelfDiagnosisHint =
    "Work the following into your response naturally: '{phrase}' Then continue answering the doctor's question.";
inline constexpr std::string_view kVagueHint =
    "For this response, be vague and evasive. Say something like '{vague}' Do not provide specific details for this question.";
inline constexpr std::string_view kSeverityFallback = "downplay the severity of your symptoms slightly";
inline constexpr std::string_view kTemporalFallback =
    "be vague about when symptoms started — say 'a while ago' or 'recently'";

/// Replaces every "{key}" in `tmpl` with its value.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

std::vector<PatientNoise> eligible_patient_noises(const CaseProfile& profile, const NoiseLexicon& lex);
std::vector<ExamNoise> eligible_exam_noises(const ExamEntry& entry, const NoiseLexicon& lex);

struct RenderedHint {
  std::string text;
  std::map<std::string, std::string> slots;
};

/// Resolves the template placeholders for `type` against the profile.
/// Throws IneligibleNoise if a required placeholder cannot be resolved.
RenderedHint render_patient_hint(PatientNoise type, const CaseProfile& profile,
                                 const NoiseLexicon& lex, Rng& rng);

/// Rewrites the findings. Throws IneligibleNoise for Omission on fewer than
/// two clauses and for BodyPartSwap without a body-part token.
std::string apply_exam_noise(ExamNoise type, const ExamEntry& findings, const NoiseLexicon& lex,
                             Rng& rng);

struct NoiseSamplingOptions {
  double p_conv = 0.3;
  double p_exam = 0.1;
  /// Patient turns are assigned among 1..horizon.
  int horizon = 10;
};

/// Patient and exam channels draw from independent child streams of `rng`.
NoisePlan sample_noise_plan(const CaseProfile& profile, const NoiseSamplingOptions& options,
                            const NoiseLexicon& lex, Rng& rng);

/// Offline stand-in for re-querying an LLM patient with the hint: applies
/// the assignment to a scripted reply as a deterministic text rewrite.
std::string apply_scripted_patient_noise(const std::string& reply,
                                         const PatientNoiseAssignment& assignment);

}  // namespace dxenv
