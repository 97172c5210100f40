#include "dxenv/agents.hpp"

#include <algorithm>

namespace dxenv {

namespace {

int assistant_turns(const std::vector<ChatMessage>& history) {
  return static_cast<int>(std::count_if(history.begin(), history.end(),
                                        [](const ChatMessage& m) { return m.role == "assistant"; }));
}

}  // namespace

IdealDoctor::IdealDoctor(const CaseProfile& profile) : profile_(profile), calls_(profile.ground_truth_calls()) {}

std::string IdealDoctor::tool_call_text(const ToolCall& call) {
  return "<tool_call>" + Json{{"name", call.name}, {"arguments", call.arguments}}.dump() + "</tool_call>";
}

std::string IdealDoctor::act(const std::vector<ChatMessage>& history) {
  const int k = assistant_turns(history);
  if (k == 0) return "Hello, I'm the doctor seeing you today. What symptoms brought you in?";
  if (k == 1) return "How long have you had these symptoms, and have they changed at all?";
  const auto idx = static_cast<std::size_t>(k - 2);
  if (idx < calls_.size()) return "I'd like to run a test. " + tool_call_text(calls_[idx]);
  return "Thank you for your patience. Based on your history and the exam results, [DIAGNOSIS: " +
         profile_.ground_truth_dx + "]";
}

RandomAgent::RandomAgent(const CaseProfile& profile, std::uint64_t seed, double diagnose_rate)
    : profile_(profile), rng_(seed), diagnose_rate_(diagnose_rate) {}

std::string RandomAgent::act(const std::vector<ChatMessage>&) {
  static const std::vector<std::string> questions = {
      "Do you have a fever?",
      "Can you describe your symptoms?",
      "Where exactly is the pain?",
      "How long has this been going on?",
      "Any cough or shortness of breath?",
      "What is your favorite color?",
  };
  if (rng_.bernoulli(diagnose_rate_)) {
    return "I think I know what's going on. [DIAGNOSIS: " +
           std::string(rng_.bernoulli(0.5) ? profile_.ground_truth_dx : "common cold") + "]";
  }
  switch (rng_.uniform_index(6)) {
    case 0:
    case 1:
      return questions[rng_.uniform_index(questions.size())];
    case 2: {
      if (profile_.exam_map.empty()) break;
      auto it = profile_.exam_map.begin();
      std::advance(it, static_cast<std::ptrdiff_t>(rng_.uniform_index(profile_.exam_map.size())));
      return "Let's check. " + IdealDoctor::tool_call_text(ToolCall{it->first, it->second.arguments});
    }
    case 3: {
      const auto& t = profile_.available_tools[rng_.uniform_index(profile_.available_tools.size())];
      return IdealDoctor::tool_call_text(ToolCall{t.name, Json::object()});
    }
    case 4:
      return IdealDoctor::tool_call_text(ToolCall{"nonexistent_scan_" + std::to_string(rng_.uniform_index(5)),
                                                  Json::object()});
    default:
      return rng_.bernoulli(0.5) ? "<tool_call>{not json}</tool_call>" : "<tool_call>{\"arguments\": {}}";
  }
  return questions.front();
}

GatewayAgent::GatewayAgent(std::shared_ptr<Gateway> gateway, double temperature, int max_output_tokens)
    : gateway_(std::move(gateway)), temperature_(temperature), max_output_tokens_(max_output_tokens) {
  if (!gateway_) throw std::invalid_argument("GatewayAgent needs a gateway");
}

std::vector<ChatMessage> GatewayAgent::to_wire(const std::vector<ChatMessage>& history) {
  std::vector<ChatMessage> out;
  out.reserve(history.size());
  for (const auto& m : history) {
    if (m.role == "tool") {
      out.push_back({"user", "<tool_response>\n" + m.content + "\n</tool_response>"});
    } else {
      out.push_back(m);
    }
  }
  return out;
}

std::string GatewayAgent::act(const std::vector<ChatMessage>& history) {
  return gateway_->chat(to_wire(history), temperature_, max_output_tokens_);
}

}  // namespace dxenv
