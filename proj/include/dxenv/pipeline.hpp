#pragma once

// Command implementations behind the dxenv CLI. Each command takes a plain
// options struct, writes its outputs and a RunManifest, and throws on fatal
// errors. Options are built from JSON so a config file and command-line
// flags merge the same way (flags > config file > defaults).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dxenv/core_model.hpp"
#include "dxenv/llm_gateway.hpp"

namespace dxenv {

struct RunManifest {
  std::string command;
  Json config = Json::object();
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> backends;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;
  std::map<std::string, int> counts;
  std::vector<std::string> errors;

  Json to_json() const;
  /// Stamps finished_at, checks every listed output exists, then writes
  /// atomically.
  void finish_and_write(const std::filesystem::path& path);
};

/// UTC timestamp, ISO 8601 with seconds.
std::string utc_now();

/// defaults <- file <- flags, key by key. Object values merge one level
/// deep so a flag can override a single backend field.
Json merge_config(const Json& defaults, const Json& file, const Json& flags);

struct RunEpisodesOptions {
  std::string cases;
  std::string out;
  std::string manifest;  // default: <out>.manifest.json
  std::string agent = "ideal";      // ideal | random | llm
  std::string patient = "scripted"; // scripted | llm
  Json agent_backend = Json::object();
  Json patient_backend = Json::object();
  std::uint64_t seed = 0;
  int max_turns = 30;
  bool noise = false;
  double p_conv = 0.3;
  double p_exam = 0.1;
  int workers = 1;
  std::optional<std::string> persona_id;
  std::string lexicon;   // empty: built-in
  std::string personas;  // empty: built-in
  std::string taxonomy;  // with distractors > 0, resample distractor tools
  int distractors = 0;

  static Json defaults();
  static RunEpisodesOptions from_json(const Json& j);
  Json to_json() const;
};

struct ScoreOptions {
  std::string transcripts;
  std::string cases;
  std::string out;
  std::string manifest;
  std::string judge = "oracle";  // oracle | live
  Json judge_backend = Json::object();
  Json embedder_backend = Json{{"kind", "hash"}};
  std::string synonyms;
  std::string taxonomy;
  double w_tool = 0.5;
  double w_cost = 0.1;
  std::string system;  // default: transcript metadata "agent"

  static Json defaults();
  static ScoreOptions from_json(const Json& j);
  Json to_json() const;
};

struct ReportOptions {
  std::vector<std::string> scores;
  std::vector<std::string> names;  // default: the score files' system field
  int bootstrap = 10000;
  std::uint64_t seed = 0;
  std::string out;  // JSON report; empty to skip
  std::string manifest;

  static Json defaults();
  static ReportOptions from_json(const Json& j);
  Json to_json() const;
};

struct ProbeOptions {
  std::string probes;
  std::string judge = "oracle";
  Json judge_backend = Json::object();
  std::string synonyms;
  std::string out;
  std::string manifest;
  double temperature = 0.0;

  static Json defaults();
  static ProbeOptions from_json(const Json& j);
  Json to_json() const;
};

struct GenConversationsOptions {
  std::string cases;
  std::string out;               // SFT records
  std::string transcripts_out;   // optional raw transcripts
  std::string manifest;
  std::string doctor = "ideal";  // ideal | llm
  std::string patient = "scripted";
  Json doctor_backend = Json::object();
  Json patient_backend = Json::object();
  std::uint64_t seed = 0;
  int limit = 0;  // 0: all cases
  bool noise = true;
  double p_conv = 0.3;
  double p_exam = 0.1;
  int workers = 1;
  std::vector<int> stage_budgets = {2, 8, 10, 4, 2};
  int retries = 2;
  std::string lexicon;
  std::string personas;

  static Json defaults();
  static GenConversationsOptions from_json(const Json& j);
  Json to_json() const;
};

struct BuildCorpusOptions {
  std::string cases;
  std::string out_dir;
  std::string manifest;
  int sft = 0;
  int rl = 0;
  int test = 0;
  std::uint64_t seed = 0;
  std::string taxonomy;
  int distractors = 5;  // applied only when a taxonomy is given

  static Json defaults();
  static BuildCorpusOptions from_json(const Json& j);
  Json to_json() const;
};

RunManifest cmd_run_episodes(const RunEpisodesOptions& options);
RunManifest cmd_score(const ScoreOptions& options);
/// Also returns the rendered text tables through `text_out` when given.
RunManifest cmd_report(const ReportOptions& options, std::string* text_out = nullptr);
RunManifest cmd_probe_judge(const ProbeOptions& options, std::string* text_out = nullptr);
RunManifest cmd_gen_conversations(const GenConversationsOptions& options);
RunManifest cmd_build_corpus(const BuildCorpusOptions& options);

/// Fails fast when a live HTTP backend does not answer.
void preflight(const BackendConfig& config, const std::string& role);

}  // namespace dxenv
