#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dxenv/core_model.hpp"
#include "dxenv/llm_gateway.hpp"
#include "dxenv/rng.hpp"

namespace dxenv {

class EmptyPersonaTable : public std::runtime_error {
 public:
  EmptyPersonaTable() : std::runtime_error("persona table is empty") {}
};

struct PersonaAxis {
  std::string label;
  std::string instruction;

  bool operator==(const PersonaAxis&) const = default;
};

struct Persona {
  std::string persona_id;
  PersonaAxis personality;
  PersonaAxis language_proficiency;
  PersonaAxis recall;

  /// Throws std::invalid_argument if any instruction is empty.
  void validate() const;

  bool operator==(const Persona&) const = default;
};

void to_json(Json& j, const Persona& p);
void from_json(const Json& j, Persona& p);

class PersonaTable {
 public:
  PersonaTable() = default;
  explicit PersonaTable(std::vector<Persona> personas);

  /// 6 personalities x 3 language levels x 2 recall levels.
  static PersonaTable defaults();
  static PersonaTable load(const std::filesystem::path& path);

  /// Uniform draw. Throws EmptyPersonaTable.
  const Persona& sample(Rng& rng) const;
  const Persona* find(const std::string& persona_id) const;

  const std::vector<Persona>& personas() const { return personas_; }
  std::size_t size() const { return personas_.size(); }
  Json to_json() const;

 private:
  std::vector<Persona> personas_;
};

/// Patient system prompt; `hint`, when given, is appended verbatim.
std::string build_patient_prompt(const CaseProfile& profile, const Persona& persona,
                                 const std::optional<std::string>& hint = std::nullopt);

/// What a patient simulator sees for one reply. History is from the
/// patient's side: doctor lines have role "user", patient lines "assistant".
struct PatientTurn {
  const CaseProfile* profile = nullptr;
  const Persona* persona = nullptr;
  std::vector<ChatMessage> history;
  /// Noise scheduled for this reply, if any.
  const PatientNoiseAssignment* noise = nullptr;
};

class PatientSimulator {
 public:
  virtual ~PatientSimulator() = default;
  virtual std::string reply(const PatientTurn& turn) = 0;
  virtual std::string describe() const = 0;
};

inline constexpr std::string_view kScriptedFallback = "I'm not sure, doctor.";

/// Keyword reply: symptom statements sharing a content word with the
/// question, in profile order. Asking about "symptoms" selects them all.
std::string scripted_reply(const std::string& question, const CaseProfile& profile);

/// Deterministic offline patient. Noise is realized by text rewrites.
class ScriptedPatient final : public PatientSimulator {
 public:
  std::string reply(const PatientTurn& turn) override;
  std::string describe() const override { return "scripted"; }
};

/// Persona-conditioned chat patient.
class LlmPatient final : public PatientSimulator {
 public:
  LlmPatient(std::shared_ptr<Gateway> gateway, double temperature = 0.7, int max_output_tokens = 256);

  std::string reply(const PatientTurn& turn) override;
  std::string describe() const override { return "llm:" + gateway_->describe(); }

 private:
  std::shared_ptr<Gateway> gateway_;
  double temperature_;
  int max_output_tokens_;
};

}  // namespace dxenv
