#include "dxenv/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "dxenv/agents.hpp"
#include "dxenv/corpus.hpp"
#include "dxenv/datagen.hpp"
#include "dxenv/episode_engine.hpp"
#include "dxenv/judge.hpp"
#include "dxenv/metrics.hpp"
#include "dxenv/noise_engine.hpp"
#include "dxenv/patient_sim.hpp"
#include "dxenv/reward.hpp"

namespace fs = std::filesystem;

namespace dxenv {

namespace {

std::string manifest_path(const std::string& explicit_path, const std::string& anchor) {
  if (!explicit_path.empty()) return explicit_path;
  return anchor + ".manifest.json";
}

NoiseLexicon lexicon_from(const std::string& path) {
  return path.empty() ? NoiseLexicon::defaults() : NoiseLexicon::load(path);
}

PersonaTable personas_from(const std::string& path) {
  return path.empty() ? PersonaTable::defaults() : PersonaTable::load(path);
}

SynonymTable synonyms_from(const std::string& path) {
  SynonymTable t = SynonymTable::defaults();
  if (!path.empty()) t.merge(SynonymTable::load(path));
  return t;
}

std::vector<CaseProfile> require_cases(const std::string& path, RunManifest& m) {
  if (path.empty()) throw std::invalid_argument("a case corpus path is required");
  auto loaded = load_cases(path);
  for (const auto& d : loaded.diagnostics) m.errors.push_back(path + ":" + std::to_string(d.line) + ": " + d.message);
  m.counts["cases_rejected"] = static_cast<int>(loaded.diagnostics.size());
  return std::move(loaded.items);
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception is rethrown after all workers stop.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), std::max<std::size_t>(n, 1));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < w; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

BackendConfig backend_from(const Json& j, const std::string& fallback_kind) {
  Json copy = j.is_object() ? j : Json::object();
  if (!copy.contains("kind")) copy["kind"] = fallback_kind;
  return backend_config_from_json(copy);
}

std::uint64_t get_u64(const Json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_string()) return std::stoull(v.get<std::string>());
  return v.get<std::uint64_t>();
}

std::optional<std::string> opt_string(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

}  // namespace

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json merge_config(const Json& defaults, const Json& file, const Json& flags) {
  Json merged = defaults;
  for (const Json* layer : {&file, &flags}) {
    if (layer->is_null()) continue;
    if (!layer->is_object()) throw SchemaError("config must be a JSON object");
    for (const auto& [k, v] : layer->items()) {
      if (v.is_object() && merged.contains(k) && merged[k].is_object()) {
        merged[k].update(v);
      } else {
        merged[k] = v;
      }
    }
  }
  return merged;
}

Json RunManifest::to_json() const {
  Json seeds_json = Json::object();
  for (const auto& [k, v] : seeds) seeds_json[k] = std::to_string(v);
  return Json{{"command", command},   {"config", config},         {"seeds", seeds_json},
              {"backends", backends}, {"started_at", started_at}, {"finished_at", finished_at},
              {"outputs", outputs},   {"counts", counts},         {"errors", errors}};
}

void RunManifest::finish_and_write(const fs::path& path) {
  finished_at = utc_now();
  for (const auto& o : outputs) {
    if (!fs::exists(o)) throw IoError("manifest names missing output " + o);
  }
  write_json_atomic(path, to_json());
}

void preflight(const BackendConfig& config, const std::string& role) {
  if (config.kind != "http") return;
  HttpTransport probe(config);
  if (!probe.reachable()) {
    throw TransportError(role + " backend " + config.base_url + " is unreachable");
  }
}

// ---------------------------------------------------------------------------
// Option parsing

Json RunEpisodesOptions::defaults() { return RunEpisodesOptions{}.to_json(); }

Json RunEpisodesOptions::to_json() const {
  return Json{{"cases", cases},
              {"out", out},
              {"manifest", manifest},
              {"agent", agent},
              {"patient", patient},
              {"agent_backend", agent_backend},
              {"patient_backend", patient_backend},
              {"seed", seed},
              {"max_turns", max_turns},
              {"noise", noise},
              {"p_conv", p_conv},
              {"p_exam", p_exam},
              {"workers", workers},
              {"persona_id", persona_id ? Json(*persona_id) : Json(nullptr)},
              {"lexicon", lexicon},
              {"personas", personas},
              {"taxonomy", taxonomy},
              {"distractors", distractors}};
}

RunEpisodesOptions RunEpisodesOptions::from_json(const Json& j) {
  RunEpisodesOptions o;
  o.cases = j.at("cases").get<std::string>();
  o.out = j.at("out").get<std::string>();
  o.manifest = j.at("manifest").get<std::string>();
  o.agent = j.at("agent").get<std::string>();
  o.patient = j.at("patient").get<std::string>();
  o.agent_backend = j.at("agent_backend");
  o.patient_backend = j.at("patient_backend");
  o.seed = get_u64(j, "seed");
  o.max_turns = j.at("max_turns").get<int>();
  o.noise = j.at("noise").get<bool>();
  o.p_conv = j.at("p_conv").get<double>();
  o.p_exam = j.at("p_exam").get<double>();
  o.workers = j.at("workers").get<int>();
  o.persona_id = opt_string(j, "persona_id");
  o.lexicon = j.at("lexicon").get<std::string>();
  o.personas = j.at("personas").get<std::string>();
  o.taxonomy = j.at("taxonomy").get<std::string>();
  o.distractors = j.at("distractors").get<int>();
  return o;
}

Json ScoreOptions::defaults() { return ScoreOptions{}.to_json(); }

Json ScoreOptions::to_json() const {
  return Json{{"transcripts", transcripts},
              {"cases", cases},
              {"out", out},
              {"manifest", manifest},
              {"judge", judge},
              {"judge_backend", judge_backend},
              {"embedder_backend", embedder_backend},
              {"synonyms", synonyms},
              {"taxonomy", taxonomy},
              {"w_tool", w_tool},
              {"w_cost", w_cost},
              {"system", system}};
}

ScoreOptions ScoreOptions::from_json(const Json& j) {
  ScoreOptions o;
  o.transcripts = j.at("transcripts").get<std::string>();
  o.cases = j.at("cases").get<std::string>();
  o.out = j.at("out").get<std::string>();
  o.manifest = j.at("manifest").get<std::string>();
  o.judge = j.at("judge").get<std::string>();
  o.judge_backend = j.at("judge_backend");
  o.embedder_backend = j.at("embedder_backend");
  o.synonyms = j.at("synonyms").get<std::string>();
  o.taxonomy = j.at("taxonomy").get<std::string>();
  o.w_tool = j.at("w_tool").get<double>();
  o.w_cost = j.at("w_cost").get<double>();
  o.system = j.at("system").get<std::string>();
  return o;
}

Json ReportOptions::defaults() { return ReportOptions{}.to_json(); }

Json ReportOptions::to_json() const {
  return Json{{"scores", scores}, {"names", names},   {"bootstrap", bootstrap},
              {"seed", seed},     {"out", out},       {"manifest", manifest}};
}

ReportOptions ReportOptions::from_json(const Json& j) {
  ReportOptions o;
  o.scores = j.at("scores").get<std::vector<std::string>>();
  o.names = j.at("names").get<std::vector<std::string>>();
  o.bootstrap = j.at("bootstrap").get<int>();
  o.seed = get_u64(j, "seed");
  o.out = j.at("out").get<std::string>();
  o.manifest = j.at("manifest").get<std::string>();
  return o;
}

Json ProbeOptions::defaults() { return ProbeOptions{}.to_json(); }

Json ProbeOptions::to_json() const {
  return Json{{"probes", probes}, {"judge", judge}, {"judge_backend", judge_backend}, {"synonyms", synonyms},
              {"out", out},       {"manifest", manifest}, {"temperature", temperature}};
}

ProbeOptions ProbeOptions::from_json(const Json& j) {
  ProbeOptions o;
  o.probes = j.at("probes").get<std::string>();
  o.judge = j.at("judge").get<std::string>();
  o.judge_backend = j.at("judge_backend");
  o.synonyms = j.at("synonyms").get<std::string>();
  o.out = j.at("out").get<std::string>();
  o.manifest = j.at("manifest").get<std::string>();
  o.temperature = j.at("temperature").get<double>();
  return o;
}

Json GenConversationsOptions::defaults() { return GenConversationsOptions{}.to_json(); }

Json GenConversationsOptions::to_json() const {
  return Json{{"cases", cases},
              {"out", out},
              {"transcripts_out", transcripts_out},
              {"manifest", manifest},
              {"doctor", doctor},
              {"patient", patient},
              {"doctor_backend", doctor_backend},
              {"patient_backend", patient_backend},
              {"seed", seed},
              {"limit", limit},
              {"noise", noise},
              {"p_conv", p_conv},
              {"p_exam", p_exam},
              {"workers", workers},
              {"stage_budgets", stage_budgets},
              {"retries", retries},
              {"lexicon", lexicon},
              {"personas", personas}};
}

GenConversationsOptions GenConversationsOptions::from_json(const Json& j) {
  GenConversationsOptions o;
  o.cases = j.at("cases").get<std::string>();
  o.out = j.at("out").get<std::string>();
  o.transcripts_out = j.at("transcripts_out").get<std::string>();
  o.manifest = j.at("manifest").get<std::string>();
  o.doctor = j.at("doctor").get<std::string>();
  o.patient = j.at("patient").get<std::string>();
  o.doctor_backend = j.at("doctor_backend");
  o.patient_backend = j.at("patient_backend");
  o.seed = get_u64(j, "seed");
  o.limit = j.at("limit").get<int>();
  o.noise = j.at("noise").get<bool>();
  o.p_conv = j.at("p_conv").get<double>();
  o.p_exam = j.at("p_exam").get<double>();
  o.workers = j.at("workers").get<int>();
  o.stage_budgets = j.at("stage_budgets").get<std::vector<int>>();
  o.retries = j.at("retries").get<int>();
  o.lexicon = j.at("lexicon").get<std::string>();
  o.personas = j.at("personas").get<std::string>();
  return o;
}

Json BuildCorpusOptions::defaults() { return BuildCorpusOptions{}.to_json(); }

Json BuildCorpusOptions::to_json() const {
  return Json{{"cases", cases}, {"out_dir", out_dir},   {"manifest", manifest}, {"sft", sft},
              {"rl", rl},       {"test", test},         {"seed", seed},         {"taxonomy", taxonomy},
              {"distractors", distractors}};
}

BuildCorpusOptions BuildCorpusOptions::from_json(const Json& j) {
  BuildCorpusOptions o;
  o.cases = j.at("cases").get<std::string>();
  o.out_dir = j.at("out_dir").get<std::string>();
  o.manifest = j.at("manifest").get<std::string>();
  o.sft = j.at("sft").get<int>();
  o.rl = j.at("rl").get<int>();
  o.test = j.at("test").get<int>();
  o.seed = get_u64(j, "seed");
  o.taxonomy = j.at("taxonomy").get<std::string>();
  o.distractors = j.at("distractors").get<int>();
  return o;
}

// ---------------------------------------------------------------------------
// run-episodes

RunManifest cmd_run_episodes(const RunEpisodesOptions& o) {
  if (o.out.empty()) throw std::invalid_argument("--out is required");
  if (o.agent != "ideal" && o.agent != "random" && o.agent != "llm") {
    throw std::invalid_argument("unknown agent '" + o.agent + "' (ideal, random, llm)");
  }
  if (o.patient != "scripted" && o.patient != "llm") {
    throw std::invalid_argument("unknown patient '" + o.patient + "' (scripted, llm)");
  }
  EpisodeConfig base;
  base.max_turns = o.max_turns;
  base.noise_enabled = o.noise;
  base.p_conv = o.p_conv;
  base.p_exam = o.p_exam;
  base.persona_id = o.persona_id;
  base.validate();

  RunManifest m;
  m.command = "run-episodes";
  m.config = o.to_json();
  m.started_at = utc_now();
  m.seeds["seed"] = o.seed;

  std::shared_ptr<Gateway> agent_gw, patient_gw;
  if (o.agent == "llm") {
    const auto cfg = backend_from(o.agent_backend, "http");
    preflight(cfg, "agent");
    agent_gw = Gateway::from_config(cfg);
    m.backends["agent"] = agent_gw->describe();
  } else {
    m.backends["agent"] = o.agent;
  }
  if (o.patient == "llm") {
    const auto cfg = backend_from(o.patient_backend, "http");
    preflight(cfg, "patient");
    patient_gw = Gateway::from_config(cfg);
    m.backends["patient"] = patient_gw->describe();
  } else {
    m.backends["patient"] = o.patient;
  }

  auto cases = require_cases(o.cases, m);
  if (o.distractors > 0) {
    if (o.taxonomy.empty()) throw std::invalid_argument("--distractors needs --taxonomy");
    const auto taxonomy = ExamTaxonomy::load(o.taxonomy);
    for (auto& c : cases) {
      Rng r = Rng(derive_seed(o.seed, c.case_id)).fork("distractors");
      c = sample_distractors(c, taxonomy, o.distractors, r);
    }
  }
  const auto lexicon = lexicon_from(o.lexicon);
  const auto personas = personas_from(o.personas);

  std::vector<std::optional<Transcript>> results(cases.size());
  std::vector<std::string> failures(cases.size());
  std::atomic<int> done{0};
  parallel_for(cases.size(), o.workers, [&](std::size_t i) {
    const auto& profile = cases[i];
    EpisodeConfig cfg = base;
    cfg.rng_seed = derive_seed(o.seed, profile.case_id);
    try {
      std::unique_ptr<Agent> agent;
      if (o.agent == "ideal") {
        agent = std::make_unique<IdealDoctor>(profile);
      } else if (o.agent == "random") {
        agent = std::make_unique<RandomAgent>(profile, derive_seed(cfg.rng_seed, "agent"));
      } else {
        agent = std::make_unique<GatewayAgent>(agent_gw);
      }
      std::unique_ptr<PatientSimulator> patient;
      if (patient_gw) {
        patient = std::make_unique<LlmPatient>(patient_gw);
      } else {
        patient = std::make_unique<ScriptedPatient>();
      }
      results[i] = run_episode(profile, cfg, *agent, *patient, lexicon, personas);
    } catch (const std::exception& e) {
      failures[i] = e.what();
      spdlog::error("case {}: {}", profile.case_id, e.what());
    }
    const int n = ++done;
    if (n % 50 == 0 || static_cast<std::size_t>(n) == cases.size()) {
      spdlog::info("run-episodes: {}/{} episodes", n, cases.size());
    }
  });

  JsonlWriter writer(o.out, true);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (results[i]) {
      writer.write(*results[i]);
      ++m.counts["episodes"];
      ++m.counts["termination:" + std::string(to_string(*results[i]->termination_reason))];
    } else {
      ++m.counts["failures"];
      m.errors.push_back(cases[i].case_id + ": " + failures[i]);
    }
  }
  m.outputs.push_back(o.out);
  m.finish_and_write(manifest_path(o.manifest, o.out));
  return m;
}

// ---------------------------------------------------------------------------
// score

RunManifest cmd_score(const ScoreOptions& o) {
  if (o.transcripts.empty() || o.out.empty()) throw std::invalid_argument("--transcripts and --out are required");
  RunManifest m;
  m.command = "score";
  m.config = o.to_json();
  m.started_at = utc_now();

  const RewardWeights weights{o.w_tool, o.w_cost};
  auto cases = require_cases(o.cases, m);
  std::map<std::string, const CaseProfile*> by_id;
  for (const auto& c : cases) by_id[c.case_id] = &c;

  std::unique_ptr<Judge> judge;
  if (o.judge == "oracle") {
    judge = std::make_unique<OracleJudge>(synonyms_from(o.synonyms));
  } else if (o.judge == "live") {
    const auto cfg = backend_from(o.judge_backend, "http");
    preflight(cfg, "judge");
    judge = std::make_unique<LlmJudge>(Gateway::from_config(cfg));
  } else {
    throw std::invalid_argument("unknown judge mode '" + o.judge + "' (oracle, live)");
  }
  m.backends["judge"] = judge->describe();
  const auto embed_cfg = backend_from(o.embedder_backend, "hash");
  preflight(embed_cfg, "embedder");
  auto embedder = Gateway::from_config(embed_cfg);
  m.backends["embedder"] = embed_cfg.kind == "hash" ? "hash" : embedder->describe();

  TierTable tiers;
  if (!o.taxonomy.empty()) tiers = ExamTaxonomy::load(o.taxonomy).tiers();

  auto loaded = load_transcripts(o.transcripts);
  for (const auto& d : loaded.diagnostics) {
    m.errors.push_back(o.transcripts + ":" + std::to_string(d.line) + ": " + d.message);
  }
  m.counts["corrupt_lines"] = static_cast<int>(loaded.diagnostics.size());

  JsonlWriter writer(o.out, true);
  for (const auto& t : loaded.items) {
    EpisodeScore s;
    s.case_id = t.case_id;
    s.system = !o.system.empty() ? o.system : (t.metadata.count("agent") ? t.metadata.at("agent") : "unknown");
    s.termination = t.termination_reason ? std::string(to_string(*t.termination_reason)) : "Unknown";
    auto it = by_id.find(t.case_id);
    if (it == by_id.end()) {
      s.error = "unknown case_id " + t.case_id;
      ++m.counts["errors"];
      m.errors.push_back(*s.error);
      writer.write(s);
      continue;
    }
    const CaseProfile& profile = *it->second;

    std::optional<DiagnosisCounts> counts;
    if (t.termination_reason == TerminationReason::Diagnosed && t.terminal_diagnosis) {
      try {
        counts = judge->judge(profile.ground_truth_dx, *t.terminal_diagnosis).counts;
        const JacAcc ja = jac_acc(*counts);
        s.jac = ja.jac;
        s.acc = ja.acc;
      } catch (const JudgeUnparseable& e) {
        s.flags.push_back("judge_unparseable");
        s.error = e.what();
        ++m.counts["judge_failures"];
      }
      s.sim = sim_score(*t.terminal_diagnosis, profile.ground_truth_dx, *embedder);
    }
    const ToolEfficiency eff = tool_efficiency(t, profile, tiers);
    s.calls = eff.calls;
    s.call_f1 = eff.call_f1;
    s.dollar_f1 = eff.dollar_f1;
    s.reward = episode_reward(t, profile, counts, tiers, weights);
    for (const auto& f : s.reward.flags) s.flags.push_back(f);
    writer.write(s);
    ++m.counts["scored"];
  }
  m.outputs.push_back(o.out);
  m.finish_and_write(manifest_path(o.manifest, o.out));
  return m;
}

// ---------------------------------------------------------------------------
// report

RunManifest cmd_report(const ReportOptions& o, std::string* text_out) {
  if (o.scores.empty()) throw std::invalid_argument("at least one score file is required");
  if (!o.names.empty() && o.names.size() != o.scores.size()) {
    throw std::invalid_argument("--names must match the number of score files");
  }
  RunManifest m;
  m.command = "report";
  m.config = o.to_json();
  m.started_at = utc_now();
  m.seeds["bootstrap"] = o.seed;

  std::vector<SystemScores> systems;
  for (std::size_t i = 0; i < o.scores.size(); ++i) {
    auto loaded = load_scores(o.scores[i]);
    for (const auto& d : loaded.diagnostics) {
      m.errors.push_back(o.scores[i] + ":" + std::to_string(d.line) + ": " + d.message);
    }
    SystemScores sys;
    if (!o.names.empty()) {
      sys.name = o.names[i];
    } else if (!loaded.items.empty()) {
      sys.name = loaded.items.front().system;
    }
    if (sys.name.empty()) sys.name = fs::path(o.scores[i]).stem().string();
    for (auto& s : loaded.items) {
      if (s.error && s.reward.flags.empty() && s.termination == "Unknown") {
        ++m.counts["skipped_error_records"];
        continue;
      }
      sys.scores.push_back(std::move(s));
    }
    systems.push_back(std::move(sys));
  }

  const EvaluationReport report = build_report(systems, o.bootstrap, o.seed);
  const std::string text = report.to_text();
  if (text_out) *text_out = text;
  if (!o.out.empty()) {
    write_json_atomic(o.out, report.to_json());
    m.outputs.push_back(o.out);
  }
  m.counts["systems"] = static_cast<int>(systems.size());
  const std::string anchor = !o.out.empty() ? o.out : o.scores.front() + ".report";
  m.finish_and_write(manifest_path(o.manifest, anchor));
  return m;
}

// ---------------------------------------------------------------------------
// probe-judge

RunManifest cmd_probe_judge(const ProbeOptions& o, std::string* text_out) {
  if (o.probes.empty()) throw std::invalid_argument("--probes is required");
  RunManifest m;
  m.command = "probe-judge";
  m.config = o.to_json();
  m.started_at = utc_now();

  const auto pairs = load_probe_pairs(o.probes);
  if (const auto problems = validate_probe_set(pairs); !problems.empty()) {
    std::string msg = "probe set failed validation:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw SchemaError(msg);
  }

  std::unique_ptr<Judge> judge;
  if (o.judge == "oracle") {
    judge = std::make_unique<OracleJudge>(synonyms_from(o.synonyms));
  } else if (o.judge == "live") {
    const auto cfg = backend_from(o.judge_backend, "http");
    preflight(cfg, "judge");
    judge = std::make_unique<LlmJudge>(Gateway::from_config(cfg), o.temperature);
  } else {
    throw std::invalid_argument("unknown judge mode '" + o.judge + "' (oracle, live)");
  }
  m.backends["judge"] = judge->describe();

  const ProbeReport report = run_probe(pairs, *judge);
  if (text_out) *text_out = report.to_table();
  const std::string out = !o.out.empty() ? o.out : o.probes + ".report.json";
  write_json_atomic(out, report.to_json());
  m.outputs.push_back(out);
  for (const auto& [bucket, stats] : report.buckets) {
    m.counts[std::string(to_string(bucket)) + "_correct"] = static_cast<int>(stats.correct);
  }
  m.finish_and_write(manifest_path(o.manifest, out));
  return m;
}

// ---------------------------------------------------------------------------
// gen-conversations

RunManifest cmd_gen_conversations(const GenConversationsOptions& o) {
  if (o.out.empty()) throw std::invalid_argument("--out is required");
  if (o.doctor != "ideal" && o.doctor != "llm") throw std::invalid_argument("unknown doctor '" + o.doctor + "'");
  if (o.patient != "scripted" && o.patient != "llm") throw std::invalid_argument("unknown patient '" + o.patient + "'");
  if (o.stage_budgets.size() != 5) throw std::invalid_argument("stage_budgets needs five entries");
  GenerationConfig gen;
  for (std::size_t i = 0; i < 5; ++i) gen.stages.budgets[i] = o.stage_budgets[i];
  gen.stages.validate();

  RunManifest m;
  m.command = "gen-conversations";
  m.config = o.to_json();
  m.started_at = utc_now();
  m.seeds["seed"] = o.seed;

  std::shared_ptr<Gateway> doctor_gw, patient_gw;
  if (o.doctor == "llm") {
    const auto cfg = backend_from(o.doctor_backend, "http");
    preflight(cfg, "doctor");
    doctor_gw = Gateway::from_config(cfg);
    m.backends["doctor"] = doctor_gw->describe();
  } else {
    m.backends["doctor"] = o.doctor;
  }
  if (o.patient == "llm") {
    const auto cfg = backend_from(o.patient_backend, "http");
    preflight(cfg, "patient");
    patient_gw = Gateway::from_config(cfg);
    m.backends["patient"] = patient_gw->describe();
  } else {
    m.backends["patient"] = o.patient;
  }

  auto cases = require_cases(o.cases, m);
  if (o.limit > 0 && static_cast<std::size_t>(o.limit) < cases.size()) cases.resize(static_cast<std::size_t>(o.limit));
  const auto lexicon = lexicon_from(o.lexicon);
  const auto personas = personas_from(o.personas);

  DoctorFactory make_doctor = [&](const CaseProfile& profile, std::uint64_t) -> std::unique_ptr<Agent> {
    if (doctor_gw) return std::make_unique<GatewayAgent>(doctor_gw);
    return std::make_unique<IdealDoctor>(profile);
  };

  struct Result {
    std::optional<Transcript> transcript;
    int rejections = 0;
    std::string error;
  };
  std::vector<Result> results(cases.size());
  parallel_for(cases.size(), o.workers, [&](std::size_t i) {
    const auto& profile = cases[i];
    const std::uint64_t case_seed = derive_seed(o.seed, profile.case_id);
    Rng persona_rng = Rng(case_seed).fork("persona");
    const Persona& persona = personas.sample(persona_rng);
    std::unique_ptr<PatientSimulator> patient;
    if (patient_gw) {
      patient = std::make_unique<LlmPatient>(patient_gw);
    } else {
      patient = std::make_unique<ScriptedPatient>();
    }
    GenerationConfig cfg = gen;
    cfg.seed = case_seed;
    try {
      auto outcome = generate_with_retries(profile, persona, make_doctor, *patient, lexicon, personas, cfg, o.retries);
      results[i].rejections = static_cast<int>(outcome.rejections.size());
      if (outcome.transcript && o.noise) {
        Rng noise_rng = Rng(case_seed).fork("post-hoc-noise");
        PatientRequery requery{patient.get(), &persona};
        outcome.transcript = inject_noise_post_hoc(*outcome.transcript, profile,
                                                   NoiseSamplingOptions{o.p_conv, o.p_exam, 10}, lexicon, noise_rng,
                                                   patient_gw ? &requery : nullptr);
      }
      results[i].transcript = std::move(outcome.transcript);
    } catch (const std::exception& e) {
      results[i].error = e.what();
      spdlog::error("case {}: {}", profile.case_id, e.what());
    }
  });

  JsonlWriter sft(o.out, true);
  std::unique_ptr<JsonlWriter> raw;
  if (!o.transcripts_out.empty()) raw = std::make_unique<JsonlWriter>(o.transcripts_out, true);
  m.counts["generated"] = 0;
  m.counts["dropped"] = 0;
  m.counts["rejections"] = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    auto& r = results[i];
    m.counts["rejections"] += r.rejections;
    if (!r.error.empty()) {
      ++m.counts["failures"];
      m.errors.push_back(cases[i].case_id + ": " + r.error);
    } else if (!r.transcript) {
      ++m.counts["dropped"];
      m.errors.push_back(cases[i].case_id + ": dropped after " + std::to_string(r.rejections) + " rejections");
    } else {
      sft.write(to_sft_record(*r.transcript, cases[i]));
      if (raw) raw->write(*r.transcript);
      ++m.counts["generated"];
    }
  }
  m.outputs.push_back(o.out);
  if (raw) m.outputs.push_back(o.transcripts_out);
  m.finish_and_write(manifest_path(o.manifest, o.out));
  return m;
}

// ---------------------------------------------------------------------------
// build-corpus

RunManifest cmd_build_corpus(const BuildCorpusOptions& o) {
  if (o.out_dir.empty()) throw std::invalid_argument("--out-dir is required");
  RunManifest m;
  m.command = "build-corpus";
  m.config = o.to_json();
  m.started_at = utc_now();
  m.seeds["seed"] = o.seed;

  auto cases = require_cases(o.cases, m);
  Rng rng(o.seed);
  CorpusSplits splits = build_corpus(cases, SplitCounts{o.sft, o.rl, o.test}, rng);

  if (!o.taxonomy.empty() && o.distractors > 0) {
    const auto taxonomy = ExamTaxonomy::load(o.taxonomy);
    for (auto* split : {&splits.sft, &splits.rl, &splits.test, &splits.ood_test}) {
      for (auto& c : *split) {
        Rng r = rng.fork("distractors/" + c.case_id);
        c = sample_distractors(c, taxonomy, o.distractors, r);
      }
    }
    m.config["taxonomy_version"] = taxonomy.version;
  }

  fs::create_directories(o.out_dir);
  const std::pair<const char*, const std::vector<CaseProfile>*> files[] = {
      {"sft.jsonl", &splits.sft}, {"rl.jsonl", &splits.rl}, {"test.jsonl", &splits.test},
      {"ood_test.jsonl", &splits.ood_test}};
  for (const auto& [name, split] : files) {
    const std::string path = (fs::path(o.out_dir) / name).string();
    JsonlWriter w(path, true);
    for (const auto& c : *split) w.write(c);
    m.outputs.push_back(path);
    m.counts[fs::path(name).stem().string()] = static_cast<int>(split->size());
  }
  m.finish_and_write(manifest_path(o.manifest, (fs::path(o.out_dir) / "corpus").string()));
  return m;
}

}  // namespace dxenv
