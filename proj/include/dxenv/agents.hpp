#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dxenv/episode_engine.hpp"
#include "dxenv/llm_gateway.hpp"
#include "dxenv/rng.hpp"

namespace dxenv {

/// Reference agent with access to the answer: asks two questions, orders
/// each ground-truth exam once with its canonical arguments, then diagnoses
/// the ground truth.
class IdealDoctor final : public Agent {
 public:
  explicit IdealDoctor(const CaseProfile& profile);
  std::string act(const std::vector<ChatMessage>& history) override;
  std::string describe() const override { return "ideal-doctor"; }

  static std::string tool_call_text(const ToolCall& call);

 private:
  const CaseProfile& profile_;
  std::vector<ToolCall> calls_;
};

/// Random protocol exerciser: questions, ground-truth and distractor exams,
/// unknown tools, malformed blocks, and eventually a diagnosis.
class RandomAgent final : public Agent {
 public:
  RandomAgent(const CaseProfile& profile, std::uint64_t seed, double diagnose_rate = 0.08);
  std::string act(const std::vector<ChatMessage>& history) override;
  std::string describe() const override { return "random"; }

 private:
  const CaseProfile& profile_;
  Rng rng_;
  double diagnose_rate_;
};

/// Chat-model agent. Exam results (role "tool") are passed as user turns
/// wrapped in <tool_response> tags for backends without a tool role.
class GatewayAgent final : public Agent {
 public:
  GatewayAgent(std::shared_ptr<Gateway> gateway, double temperature = 0.7, int max_output_tokens = 1024);
  std::string act(const std::vector<ChatMessage>& history) override;
  std::string describe() const override { return "llm:" + gateway_->describe(); }

  static std::vector<ChatMessage> to_wire(const std::vector<ChatMessage>& history);

 private:
  std::shared_ptr<Gateway> gateway_;
  double temperature_;
  int max_output_tokens_;
};

}  // namespace dxenv
