#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dxenv/core_model.hpp"
#include "dxenv/llm_gateway.hpp"
#include "dxenv/noise_engine.hpp"
#include "dxenv/patient_sim.hpp"

namespace dxenv {

/// A <tool_call> block whose body is not a usable call.
class MalformedToolCall : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Backend failure raised mid-episode, tagged with where it happened.
class EpisodeError : public std::runtime_error {
 public:
  EpisodeError(const std::string& case_id, int turn, const std::string& cause)
      : std::runtime_error("case " + case_id + ", turn " + std::to_string(turn) + ": " + cause),
        case_id_(case_id),
        turn_(turn) {}
  const std::string& case_id() const { return case_id_; }
  int turn() const { return turn_; }

 private:
  std::string case_id_;
  int turn_;
};

inline constexpr std::string_view kNoSignificantFindings = "No significant findings";
inline constexpr std::string_view kExamNotAvailable = "This exam is not available";
inline constexpr std::string_view kFormatNotice =
    "Your last message contained a malformed <tool_call> block. Order one exam with "
    "<tool_call>{\"name\": \"<exam>\", \"arguments\": {...}}</tool_call>.";

struct EpisodeConfig {
  int max_turns = 30;
  double p_conv = 0.3;
  double p_exam = 0.1;
  std::uint64_t rng_seed = 0;
  std::optional<std::string> persona_id;
  bool noise_enabled = true;
  /// Consecutive malformed outputs that end the episode.
  int malformed_limit = 3;
  int noise_horizon = 10;
  /// Data generation only: reveal the canonical diagnosis to the doctor.
  bool reveal_diagnosis = false;

  void validate() const;
};

/// Precedence: a [DIAGNOSIS: X] marker (last one wins) makes a Diagnose;
/// otherwise the first <tool_call> block makes an Exam; otherwise Ask.
/// Throws MalformedToolCall when a block is present but unusable.
Action parse_agent_output(const std::string& raw);

/// Number of <tool_call> opening tags in `raw`.
int count_tool_call_blocks(const std::string& raw);

/// Ground-truth exam -> findings (the noised version when `plan` assigns
/// exam noise to it); other orderable tool -> "No significant findings";
/// anything else -> "This exam is not available".
Observation resolve_exam(const ToolCall& call, const CaseProfile& profile, const NoisePlan* plan = nullptr);

/// OpenAI function-schema array for the tools.
Json tools_schema_json(const std::vector<ToolSchema>& tools);

/// tools_schema_json pretty-printed, plus the call syntax.
std::string render_tools_block(const std::vector<ToolSchema>& tools);

/// Doctor system prompt. The hidden-diagnosis section is emitted only when
/// `hidden_diagnosis` is given.
std::string build_doctor_prompt(const CaseProfile& profile,
                                const std::optional<std::string>& hidden_diagnosis = std::nullopt);

class Agent {
 public:
  virtual ~Agent() = default;
  /// Full message history in (system prompt first), raw output out.
  virtual std::string act(const std::vector<ChatMessage>& history) = 0;
  virtual std::string describe() const = 0;
};

/// Wraps a callable as an Agent.
class CallbackAgent final : public Agent {
 public:
  using Fn = std::function<std::string(const std::vector<ChatMessage>&)>;
  explicit CallbackAgent(Fn fn, std::string name = "callback") : fn_(std::move(fn)), name_(std::move(name)) {}
  std::string act(const std::vector<ChatMessage>& history) override { return fn_(history); }
  std::string describe() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

struct EpisodeState {
  int turn = 0;
  Transcript transcript;
  std::vector<ToolCall> exams_called;
  bool terminated = false;
  std::optional<TerminationReason> termination_reason;
  int consecutive_malformed = 0;
  int patient_replies = 0;
};

struct StepResult {
  std::optional<Observation> observation;
  std::optional<ProtocolEvent> protocol_event;
  bool terminated = false;
};

/// One episode against one case. Not thread-safe; one per worker.
class Episode {
 public:
  Episode(const CaseProfile& profile, const EpisodeConfig& config, PatientSimulator& patient,
          const NoiseLexicon& lexicon, const PersonaTable& personas);

  StepResult step(const std::string& agent_output);

  const EpisodeState& state() const { return state_; }
  bool terminated() const { return state_.terminated; }
  const Transcript& transcript() const { return state_.transcript; }
  /// History as the agent sees it.
  const std::vector<ChatMessage>& agent_messages() const { return agent_messages_; }
  const std::string& system_prompt() const { return agent_messages_.front().content; }
  const Persona& persona() const { return *persona_; }

 private:
  void finish(TerminationReason reason);
  StepResult protocol_failure(const std::string& raw, const std::string& error);

  const CaseProfile& profile_;
  EpisodeConfig config_;
  PatientSimulator& patient_;
  const Persona* persona_ = nullptr;
  EpisodeState state_;
  std::vector<ChatMessage> agent_messages_;
  std::vector<ChatMessage> patient_messages_;
};

/// Runs `agent` against the case until termination.
Transcript run_episode(const CaseProfile& profile, const EpisodeConfig& config, Agent& agent,
                       PatientSimulator& patient, const NoiseLexicon& lexicon, const PersonaTable& personas);

}  // namespace dxenv
