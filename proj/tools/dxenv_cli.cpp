// dxenv: command-line entry points for corpus prep, conversation
// generation, episode evaluation, scoring, judge probing and reporting.

#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "dxenv/corpus.hpp"
#include "dxenv/pipeline.hpp"

using dxenv::Json;

namespace {

/// Options whose values reach the command only when given on the command
/// line, so config-file values are not clobbered by flag defaults.
class FlagSet {
 public:
  explicit FlagSet(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* add(const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(flag, *value, help);
    bindings_.push_back({opt, [value, key](Json& j) { set(j, key, Json(*value)); }});
    return opt;
  }

  CLI::Option* add_switch(const std::string& flag, const std::string& key, bool value, const std::string& help) {
    CLI::Option* opt = app_->add_flag(flag, help);
    bindings_.push_back({opt, [value, key](Json& j) { set(j, key, Json(value)); }});
    return opt;
  }

  Json collect() const {
    Json j = Json::object();
    for (const auto& [opt, apply] : bindings_) {
      if (opt->count() > 0) apply(j);
    }
    return j;
  }

 private:
  // "a.b" writes j["a"]["b"].
  static void set(Json& j, const std::string& key, Json value) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      j[key] = std::move(value);
    } else {
      j[key.substr(0, dot)][key.substr(dot + 1)] = std::move(value);
    }
  }

  CLI::App* app_;
  std::vector<std::pair<CLI::Option*, std::function<void(Json&)>>> bindings_;
};

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<FlagSet> flags;
  std::string config_path;
};

Command make_command(CLI::App& root, const std::string& name, const std::string& help) {
  Command c;
  c.app = root.add_subcommand(name, help);
  c.flags = std::make_unique<FlagSet>(c.app);
  c.app->add_option("--config", c.config_path,
                    "JSON config file; a top-level \"" + name + "\" section is used when present");
  return c;
}

Json config_section(const std::string& path, const std::string& command) {
  if (path.empty()) return Json::object();
  Json j = dxenv::read_json_file(path);
  if (j.contains(command) && j.at(command).is_object()) return j.at(command);
  return j;
}

void add_backend_flags(FlagSet& f, const std::string& prefix, const std::string& key) {
  f.add<std::string>("--" + prefix + "-kind", key + ".kind", "backend kind: http, echo, hash, fixture");
  f.add<std::string>("--" + prefix + "-url", key + ".base_url", "OpenAI-compatible base URL");
  f.add<std::string>("--" + prefix + "-model", key + ".model", "model id");
  f.add<std::string>("--" + prefix + "-key-env", key + ".api_key_env", "environment variable holding the API key");
  f.add<std::string>("--" + prefix + "-fixture", key + ".fixture_path", "replay fixture for kind=fixture");
  f.add<int>("--" + prefix + "-rpm", key + ".requests_per_minute", "rate limit");
}

void print_manifest_summary(const dxenv::RunManifest& m) {
  std::string counts;
  for (const auto& [k, v] : m.counts) counts += " " + k + "=" + std::to_string(v);
  spdlog::info("{} done:{}", m.command, counts);
  for (const auto& o : m.outputs) spdlog::info("wrote {}", o);
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("dxenv"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Interactive diagnosis environment: episodes, rewards, judging, data generation"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");

  // run-episodes
  Command run = make_command(app, "run-episodes", "Run one episode per case and write transcripts");
  {
    auto& f = *run.flags;
    f.add<std::string>("--cases", "cases", "case corpus (JSONL)");
    f.add<std::string>("--out", "out", "transcript output (JSONL)");
    f.add<std::string>("--manifest", "manifest", "manifest path (default <out>.manifest.json)");
    f.add<std::string>("--agent", "agent", "ideal | random | llm");
    f.add<std::string>("--patient", "patient", "scripted | llm");
    add_backend_flags(f, "agent", "agent_backend");
    add_backend_flags(f, "patient", "patient_backend");
    f.add<std::uint64_t>("--seed", "seed", "root seed");
    f.add<int>("--max-turns", "max_turns", "turn limit");
    f.add_switch("--noise", "noise", true, "enable patient and exam noise");
    f.add<double>("--p-conv", "p_conv", "patient noise rate");
    f.add<double>("--p-exam", "p_exam", "exam noise rate");
    f.add<int>("--workers", "workers", "concurrent episodes");
    f.add<std::string>("--persona", "persona_id", "fixed persona id");
    f.add<std::string>("--lexicon", "lexicon", "noise lexicon JSON");
    f.add<std::string>("--personas", "personas", "persona table JSON");
    f.add<std::string>("--taxonomy", "taxonomy", "exam taxonomy JSON");
    f.add<int>("--distractors", "distractors", "resample this many distractor exams per case");
  }

  Command score = make_command(app, "score", "Score transcripts: rewards, Sim/Jac/Acc, tool efficiency");
  {
    auto& f = *score.flags;
    f.add<std::string>("--transcripts", "transcripts", "transcripts (JSONL)");
    f.add<std::string>("--cases", "cases", "case corpus (JSONL)");
    f.add<std::string>("--out", "out", "score output (JSONL)");
    f.add<std::string>("--manifest", "manifest", "manifest path");
    f.add<std::string>("--judge", "judge", "oracle | live");
    add_backend_flags(f, "judge", "judge_backend");
    add_backend_flags(f, "embedder", "embedder_backend");
    f.add<std::string>("--synonyms", "synonyms", "synonym table for the oracle judge");
    f.add<std::string>("--taxonomy", "taxonomy", "exam taxonomy JSON (cost tiers)");
    f.add<double>("--w-tool", "w_tool", "tool reward weight");
    f.add<double>("--w-cost", "w_cost", "cost penalty weight");
    f.add<std::string>("--system", "system", "system name recorded in scores");
  }

  Command report = make_command(app, "report", "Aggregate score files into tables with bootstrap CIs");
  {
    auto& f = *report.flags;
    f.add<std::vector<std::string>>("--scores", "scores", "score files; the first is the reference system");
    f.add<std::vector<std::string>>("--names", "names", "display names, one per score file");
    f.add<int>("--bootstrap", "bootstrap", "bootstrap resamples");
    f.add<std::uint64_t>("--seed", "seed", "bootstrap seed");
    f.add<std::string>("--out", "out", "JSON report path");
    f.add<std::string>("--manifest", "manifest", "manifest path");
  }

  Command probe = make_command(app, "probe-judge", "Run the judge over a bucketed probe set");
  {
    auto& f = *probe.flags;
    f.add<std::string>("--probes", "probes", "probe pairs JSON");
    f.add<std::string>("--judge", "judge", "oracle | live");
    add_backend_flags(f, "judge", "judge_backend");
    f.add<std::string>("--synonyms", "synonyms", "synonym table for the oracle judge");
    f.add<double>("--temperature", "temperature", "judge sampling temperature");
    f.add<std::string>("--out", "out", "report JSON path");
    f.add<std::string>("--manifest", "manifest", "manifest path");
  }

  Command gen = make_command(app, "gen-conversations", "Generate staged conversations as SFT records");
  {
    auto& f = *gen.flags;
    f.add<std::string>("--cases", "cases", "case corpus (JSONL)");
    f.add<std::string>("--out", "out", "SFT output (JSONL)");
    f.add<std::string>("--transcripts-out", "transcripts_out", "also write raw transcripts");
    f.add<std::string>("--manifest", "manifest", "manifest path");
    f.add<std::string>("--doctor", "doctor", "ideal | llm");
    f.add<std::string>("--patient", "patient", "scripted | llm");
    add_backend_flags(f, "doctor", "doctor_backend");
    add_backend_flags(f, "patient", "patient_backend");
    f.add<std::uint64_t>("--seed", "seed", "root seed");
    f.add<int>("--limit", "limit", "use only the first N cases");
    f.add_switch("--no-noise", "noise", false, "skip post-hoc noise");
    f.add<double>("--p-conv", "p_conv", "patient noise rate");
    f.add<double>("--p-exam", "p_exam", "exam noise rate");
    f.add<int>("--workers", "workers", "concurrent conversations");
    f.add<std::vector<int>>("--stage-budgets", "stage_budgets", "five doctor-turn budgets")->expected(5);
    f.add<int>("--retries", "retries", "regenerations before a case is dropped");
    f.add<std::string>("--lexicon", "lexicon", "noise lexicon JSON");
    f.add<std::string>("--personas", "personas", "persona table JSON");
  }

  Command corpus = make_command(app, "build-corpus", "Split cases into SFT/RL/test corpora");
  {
    auto& f = *corpus.flags;
    f.add<std::string>("--cases", "cases", "case corpus (JSONL)");
    f.add<std::string>("--out-dir", "out_dir", "output directory");
    f.add<std::string>("--manifest", "manifest", "manifest path");
    f.add<int>("--sft", "sft", "SFT cases");
    f.add<int>("--rl", "rl", "RL cases");
    f.add<int>("--test", "test", "test cases");
    f.add<std::uint64_t>("--seed", "seed", "split seed");
    f.add<std::string>("--taxonomy", "taxonomy", "exam taxonomy JSON for distractor sampling");
    f.add<int>("--distractors", "distractors", "distractor exams per case");
  }

  CLI11_PARSE(app, argc, argv);
  if (verbose) spdlog::set_level(spdlog::level::debug);
  if (quiet) spdlog::set_level(spdlog::level::warn);

  auto merged = [](const Command& c, const Json& defaults) {
    return dxenv::merge_config(defaults, config_section(c.config_path, c.app->get_name()), c.flags->collect());
  };

  try {
    dxenv::RunManifest m;
    std::string text;
    if (run.app->parsed()) {
      m = dxenv::cmd_run_episodes(
          dxenv::RunEpisodesOptions::from_json(merged(run, dxenv::RunEpisodesOptions::defaults())));
    } else if (score.app->parsed()) {
      m = dxenv::cmd_score(dxenv::ScoreOptions::from_json(merged(score, dxenv::ScoreOptions::defaults())));
    } else if (report.app->parsed()) {
      m = dxenv::cmd_report(dxenv::ReportOptions::from_json(merged(report, dxenv::ReportOptions::defaults())), &text);
    } else if (probe.app->parsed()) {
      m = dxenv::cmd_probe_judge(dxenv::ProbeOptions::from_json(merged(probe, dxenv::ProbeOptions::defaults())),
                                 &text);
    } else if (gen.app->parsed()) {
      m = dxenv::cmd_gen_conversations(
          dxenv::GenConversationsOptions::from_json(merged(gen, dxenv::GenConversationsOptions::defaults())));
    } else if (corpus.app->parsed()) {
      m = dxenv::cmd_build_corpus(
          dxenv::BuildCorpusOptions::from_json(merged(corpus, dxenv::BuildCorpusOptions::defaults())));
    }
    if (!text.empty()) std::cout << text << std::flush;
    print_manifest_summary(m);
    for (const auto& e : m.errors) spdlog::warn("{}", e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
