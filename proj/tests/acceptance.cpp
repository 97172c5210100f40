// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances and runtime budgets are fixed below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "dxenv/agents.hpp"
#include "dxenv/corpus.hpp"
#include "dxenv/episode_engine.hpp"
#include "dxenv/judge.hpp"
#include "dxenv/metrics.hpp"
#include "dxenv/noise_engine.hpp"
#include "dxenv/reward.hpp"
#include "dxenv/text_util.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace dxenv;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << "first failure: " << what << "; ";
      pass = false;
    }
  }
};

struct Criterion {
  int id;
  std::string title;
  double budget_s;
  std::function<void(Outcome&)> run;
};

bool near(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

std::string fixed(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

ToolCall call(const std::string& name, Json args = Json::object()) { return ToolCall{name, std::move(args)}; }

// 1 ------------------------------------------------------------------------

void reward_algebra(Outcome& o) {
  constexpr double tol = 1e-12;
  o.require(near(diagnosis_reward({2, 1, 1}), 0.5, tol), "R_dx(2,1,1) = 1/2");
  const std::vector<ToolCall> g = {call("cbc"), call("xray", {{"view", "PA"}, {"side", 1}})};
  o.require(near(tool_reward(g, g), 1.0, tol), "tool_reward identity = 1");
  const std::vector<ToolCall> one = {call("cbc")}, two = {call("cbc"), call("cbc")};
  o.require(near(tool_reward(two, one), 0.75, tol), "duplicate call = 0.75");

  const TierTable tiers({{"cbc", {1, 1}}, {"mri", {3, 3}}, {"echo", {1, 2}}});
  const std::vector<ToolCall> gt = {call("cbc")};
  o.require(near(cost_reward(std::vector<ToolCall>{call("cbc")}, gt, tiers), 0.0, tol), "cost 0");
  o.require(near(cost_reward(std::vector<ToolCall>{call("cbc"), call("echo")}, gt, tiers), 0.5, tol), "cost 0.5");
  o.require(near(cost_reward(std::vector<ToolCall>{call("cbc"), call("mri")}, gt, tiers), 1.0, tol), "cost 1.0");

  const RewardWeights w{0.5, 0.1};
  o.require(near(composite_reward(1.0, 1.0, 0.0, w).total, 1.5, tol), "composite 1 + 0.5*1 - 0.1*0 = 1.5");
  o.require(near(composite_reward(0.5, 0.0, 1.0, w).total, 0.4, tol), "composite 0.5 + 0 - 0.1*1 = 0.4");
  o.detail << "9 exact checks at tol 1e-12";
}

// 2 ------------------------------------------------------------------------

void tool_reward_oracle(Outcome& o) {
  const auto lists = oracle::call_multisets(oracle::small_call_alphabet(), 3);
  std::size_t unambiguous = 0, ambiguous = 0, mismatches = 0, out_of_range = 0;
  double worst_gap = 0.0;
  for (const auto& p : lists) {
    for (const auto& g : lists) {
      const double greedy = tool_reward(p, g);
      const auto bf = oracle::tool_reward_bruteforce(p, g);
      if (oracle::unambiguous(p, g)) {
        ++unambiguous;
        if (!(near(greedy, bf.min, 1e-12) && near(greedy, bf.max, 1e-12))) ++mismatches;
      } else {
        ++ambiguous;
        // Greedy picks one maximum pairing, so it must land inside the range.
        if (greedy < bf.min - 1e-12 || greedy > bf.max + 1e-12) ++out_of_range;
        worst_gap = std::max(worst_gap, bf.max - greedy);
      }
    }
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " unambiguous mismatches");
  o.require(out_of_range == 0, std::to_string(out_of_range) + " ambiguous values outside brute-force range");
  o.detail << lists.size() << "^2 pairs, " << unambiguous << " unambiguous / 0 mismatches allowed, found "
           << mismatches << "; " << ambiguous << " ambiguous logged, max deviation below best pairing "
           << fixed(worst_gap);
}

// 3 ------------------------------------------------------------------------

void jaccard_count_form(Outcome& o) {
  int n = 0, bad = 0;
  for (int g = 1; g <= 5; ++g) {
    for (int p = 0; p <= 5; ++p) {
      for (int m = 0; m <= std::min(g, p); ++m) {
        const auto r = jac_acc({g, p, m});
        const auto s = oracle::set_metrics(g, p, m);
        ++n;
        if (r.jac != s.jac || r.acc != s.acc) ++bad;
        if (diagnosis_reward({g, p, m}) != s.jac) ++bad;
      }
    }
  }
  o.require(bad == 0, std::to_string(bad) + " mismatches");
  o.detail << n << " triples, exact equality, " << bad << " mismatches";
}

// 4 ------------------------------------------------------------------------

void episode_protocol(Outcome& o) {
  const auto profile = dxtest::make_profile();
  o.require(resolve_exam(call("chest_xray"), profile).text == "No significant findings", "distractor string");
  o.require(resolve_exam(call("pet_scan"), profile).text == "This exam is not available", "unavailable string");
  o.require(resolve_exam(call("cbc"), profile).text == profile.exam_map.at("cbc").canonical_findings,
            "GT exam returns findings");

  const auto lex = NoiseLexicon::defaults();
  const auto personas = PersonaTable::defaults();
  ScriptedPatient patient;
  {
    EpisodeConfig c;
    Episode ep(profile, c, patient, lex, personas);
    ep.step("Any fever?");
    const auto r = ep.step("I believe this is [DIAGNOSIS: Acute cholecystitis]");
    o.require(r.terminated && ep.transcript().termination_reason == TerminationReason::Diagnosed,
              "diagnosis marker terminates");
  }

  int violations = 0, diagnosed = 0, turn_limit = 0, protocol = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    EpisodeConfig c;
    c.rng_seed = seed;
    c.max_turns = 5 + static_cast<int>(seed % 26);
    RandomAgent agent(profile, seed);
    const auto t = run_episode(profile, c, agent, patient, lex, personas);
    for (const auto& turn : t.turns) {
      switch (turn.action.kind) {
        case ActionKind::Ask:
          violations += !turn.observation || turn.observation->kind != ObservationKind::PatientReply;
          break;
        case ActionKind::Exam:
          violations += !turn.observation || turn.observation->kind != ObservationKind::ExamResult;
          if (turn.observation && !profile.find_exam(turn.action.tool_call->name)) {
            const auto& want = profile.find_tool(turn.action.tool_call->name) ? kNoSignificantFindings
                                                                               : kExamNotAvailable;
            violations += turn.observation->text != want;
          }
          break;
        case ActionKind::Diagnose:
          violations += turn.observation.has_value();
          break;
      }
    }
    violations += !validate_transcript(t).empty();
    switch (*t.termination_reason) {
      case TerminationReason::Diagnosed: ++diagnosed; break;
      case TerminationReason::TurnLimit: ++turn_limit; break;
      case TerminationReason::ProtocolFailure: ++protocol; break;
    }
  }
  o.require(violations == 0, std::to_string(violations) + " pairing violations");
  o.detail << "1000 fuzzed episodes (" << diagnosed << " diagnosed, " << turn_limit << " turn limit, " << protocol
           << " protocol failure), " << violations << " violations";
}

// 5 ------------------------------------------------------------------------

// Two-sided 99% normal-approximation binomial interval half-width.
double ci99(double p, int n) { return 2.5758 * std::sqrt(p * (1 - p) / n); }

void noise_statistics(Outcome& o) {
  const auto profile = dxtest::make_profile();
  const auto lex = NoiseLexicon::defaults();
  const int n = 10000;
  const NoiseSamplingOptions opts{0.3, 0.1, 10};
  int patient_fired = 0, structural = 0;
  std::map<std::string, int> exam_fired;
  std::map<std::size_t, int> k_counts;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(2024, "plan-" + std::to_string(i)));
    const auto plan = sample_noise_plan(profile, opts, lex, rng);
    if (!plan.patient_noises.empty()) {
      ++patient_fired;
      ++k_counts[plan.patient_noises.size()];
    }
    std::set<int> turns;
    std::set<PatientNoise> types;
    for (const auto& a : plan.patient_noises) {
      structural += !turns.insert(a.turn).second;
      structural += !types.insert(a.type).second;
      structural += a.turn < 1 || a.turn > opts.horizon;
    }
    structural += plan.patient_noises.size() > 3;
    for (const auto& [name, _] : plan.exam_noises) ++exam_fired[name];
  }
  const double pf = double(patient_fired) / n;
  o.require(std::fabs(pf - 0.3) <= ci99(0.3, n), "patient firing " + fixed(pf));
  o.detail << "patient " << fixed(pf) << " (0.3 +- " << fixed(ci99(0.3, n)) << ")";
  for (const auto& [name, _] : profile.exam_map) {
    const double f = double(exam_fired[name]) / n;
    o.require(std::fabs(f - 0.1) <= ci99(0.1, n), "exam firing " + name + " " + fixed(f));
    o.detail << ", " << name << " " << fixed(f) << " (0.1 +- " << fixed(ci99(0.1, n)) << ")";
  }
  for (std::size_t k = 1; k <= 3; ++k) {
    const double f = double(k_counts[k]) / patient_fired;
    o.require(std::fabs(f - 1.0 / 3) <= ci99(1.0 / 3, patient_fired), "k=" + std::to_string(k) + " share " + fixed(f));
  }
  o.require(structural == 0, std::to_string(structural) + " structural violations");
  o.detail << ", k shares within CI, " << structural << " structural violations";

  // p = 0 against the noise-free run, excluding the config echo in metadata.
  const auto personas = PersonaTable::defaults();
  ScriptedPatient patient;
  int diffs = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    EpisodeConfig clean;
    clean.rng_seed = seed;
    clean.noise_enabled = false;
    EpisodeConfig zero = clean;
    zero.noise_enabled = true;
    zero.p_conv = 0.0;
    zero.p_exam = 0.0;
    RandomAgent a1(profile, seed), a2(profile, seed);
    auto t1 = run_episode(profile, clean, a1, patient, lex, personas);
    auto t2 = run_episode(profile, zero, a2, patient, lex, personas);
    for (auto* t : {&t1, &t2}) {
      for (const auto* k : {"noise_enabled", "p_conv", "p_exam"}) t->metadata.erase(k);
    }
    diffs += Json(t1).dump() != Json(t2).dump();
  }
  o.require(diffs == 0, std::to_string(diffs) + " p=0 transcripts differ");
  o.detail << "; p=0 vs clean: " << diffs << "/50 differ";
}

// 6 ------------------------------------------------------------------------

void exam_noise_transforms(Outcome& o) {
  const auto lex = NoiseLexicon::defaults();
  Rng gen(606);
  int amb_bad = 0, om_bad = 0, om_runs = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::string> clauses;
    for (std::size_t c = 0, n = 1 + gen.uniform_index(4); c < n; ++c) {
      std::string s = dxtest::random_word(gen);
      for (std::size_t w = 0, m = gen.uniform_index(4); w < m; ++w) s += " " + dxtest::random_word(gen);
      clauses.push_back(s);
    }
    const auto entry = ExamEntry::from_findings(text::join(clauses, "; "));
    Rng r(static_cast<std::uint64_t>(i));
    const auto amb = apply_exam_noise(ExamNoise::Ambiguity, entry, lex, r);
    bool templ = false;
    for (const auto& t : lex.ambiguity_templates) templ |= amb == fill_template(t, {{"original", entry.canonical_findings}});
    amb_bad += !(templ && text::contains(amb, entry.canonical_findings));
    if (entry.clauses.size() >= 2) {
      ++om_runs;
      const auto om = apply_exam_noise(ExamNoise::Omission, entry, lex, r);
      const auto kept = text::split(om, "; ");
      bool subseq = kept.size() + 1 == entry.clauses.size();
      std::size_t j = 0;
      for (const auto& k : kept) {
        while (j < entry.clauses.size() && entry.clauses[j] != k) ++j;
        subseq &= j < entry.clauses.size();
        ++j;
      }
      om_bad += !subseq;
    }
  }
  const std::vector<std::string> verbatim = {
      "Findings are equivocal — {original}. Cannot definitively rule out alternative interpretation.",
      "Results show {original}. However, findings are not entirely clear and may warrant further evaluation.",
      "{original}. Note: image quality/sample quality limits definitive interpretation.",
  };
  o.require(lex.ambiguity_templates == verbatim, "ambiguity templates differ from the published wording");
  o.require(amb_bad == 0, std::to_string(amb_bad) + " ambiguity violations");
  o.require(om_bad == 0, std::to_string(om_bad) + " omission violations");
  o.detail << "1000 findings: " << amb_bad << " ambiguity violations; " << om_runs << " omission runs, " << om_bad
           << " violations";
}

// 7 ------------------------------------------------------------------------

void judge_probe(Outcome& o) {
  const auto pairs = load_probe_pairs(dxtest::data_dir() / "probe_pairs.json");
  const auto problems = validate_probe_set(pairs);
  o.require(problems.empty(), problems.empty() ? "" : problems.front());
  auto syn = SynonymTable::defaults();
  syn.merge(SynonymTable::load(dxtest::data_dir() / "synonyms.json"));
  OracleJudge judge(syn);
  const auto report = run_probe(pairs, judge);
  for (const auto& [bucket, s] : report.buckets) {
    o.require(s.n == kProbeBucketSize, std::string(to_string(bucket)) + " size");
    o.require(s.accuracy == 1.0 && s.mae == 0.0, std::string(to_string(bucket)) + " accuracy " + fixed(s.accuracy));
    o.detail << to_string(bucket) << " n=" << s.n << " acc=" << fixed(s.accuracy, 3) << " mae=" << fixed(s.mae, 3)
             << "; ";
  }
  int half = 0, multi = 0;
  for (const auto& out : report.outcomes) {
    if (out.pair.bucket != ProbeBucket::MultiPartial) continue;
    ++multi;
    half += out.r_hat == 0.5;
  }
  o.require(multi == static_cast<int>(kProbeBucketSize) && half == multi, "MultiPartial r_dx = 0.5 on every pair");
  o.detail << "MultiPartial r_dx=0.5 on " << half << "/" << multi;
}

// 8 ------------------------------------------------------------------------

void bootstrap_correctness(Outcome& o) {
  const int datasets = 1000, n = 200, B = 2000;
  const double mu = 0.6, sigma = 0.1;
  int covered = 0;
  Rng data(808);
  for (int d = 0; d < datasets; ++d) {
    std::vector<double> xs(n);
    for (auto& x : xs) x = data.normal(mu, sigma);
    Rng rng(derive_seed(809, std::to_string(d)));
    const auto r = bootstrap(xs, B, rng);
    covered += r.ci_low <= mu && mu <= r.ci_high;
  }
  const double coverage = double(covered) / datasets;
  o.require(std::fabs(coverage - 0.95) <= 0.02, "coverage " + fixed(coverage));

  Rng rng(1);
  const auto flat = bootstrap(std::vector<double>(n, 0.5), B, rng);
  o.require(flat.ci_low == 0.5 && flat.ci_high == 0.5 && flat.half_width() == 0.0, "degenerate CI not zero width");
  std::vector<double> xs(n);
  for (auto& x : xs) x = data.uniform01();
  const auto paired = paired_bootstrap(xs, xs, B, rng);
  o.require(paired.p_value == 1.0, "paired identical p = " + fixed(paired.p_value));
  o.detail << "coverage " << fixed(coverage, 3) << " over " << datasets << " datasets (n=" << n << ", B=" << B
           << ", target 0.95 +- 0.02); degenerate half-width " << flat.half_width() << "; paired identical p="
           << paired.p_value;
}

// 9, 10 --------------------------------------------------------------------

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

int cli(const std::string& args, const fs::path& dir) { return dxtest::run_cli(args, dir / "cli.log"); }

// Every non-manifest file under `dir`, by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename().string();
    if (name.ends_with(".manifest.json") || name == "cli.log") continue;
    out[fs::relative(e.path(), dir).string()] = dxtest::read_file(e.path());
  }
  return out;
}

void determinism(Outcome& o) {
  const auto cases = dxtest::data_dir() / "sample_cases.jsonl";
  const auto tax = dxtest::data_dir() / "taxonomy.json";
  std::vector<std::map<std::string, std::string>> runs;
  for (int r = 0; r < 2; ++r) {
    dxtest::TempDir d;
    int rc = 0;
    rc |= cli("run-episodes --cases " + q(cases) + " --out " + q(d / "t.jsonl") +
                  " --agent random --noise --seed 21 --workers 4 --taxonomy " + q(tax) + " --distractors 4",
              d.path());
    rc |= cli("run-episodes --cases " + q(cases) + " --out " + q(d / "ideal.jsonl") + " --noise --seed 21",
              d.path());
    rc |= cli("run-episodes --cases " + q(cases) + " --out " + q(d / "echo.jsonl") +
                  " --agent random --patient llm --patient-kind echo --seed 21 --workers 3",
              d.path());
    rc |= cli("score --transcripts " + q(d / "t.jsonl") + " --cases " + q(cases) + " --taxonomy " + q(tax) +
                  " --out " + q(d / "s.jsonl"),
              d.path());
    rc |= cli("score --transcripts " + q(d / "ideal.jsonl") + " --cases " + q(cases) + " --out " +
                  q(d / "s_ideal.jsonl"),
              d.path());
    rc |= cli("gen-conversations --cases " + q(cases) + " --out " + q(d / "sft.jsonl") + " --transcripts-out " +
                  q(d / "raw.jsonl") + " --seed 21 --workers 4 --p-conv 0.8 --p-exam 0.5",
              d.path());
    rc |= cli("build-corpus --cases " + q(cases) + " --out-dir " + q(d / "corpus") +
                  " --sft 4 --rl 2 --test 2 --seed 21 --taxonomy " + q(tax) + " --distractors 5",
              d.path());
    o.require(rc == 0, "a CLI command failed in run " + std::to_string(r + 1) + ": " + dxtest::read_file(d / "cli.log"));
    runs.push_back(snapshot(d.path()));
  }
  for (const auto* f : {"t.jsonl", "ideal.jsonl", "echo.jsonl", "s.jsonl", "s_ideal.jsonl", "sft.jsonl", "raw.jsonl",
                        "corpus/sft.jsonl", "corpus/rl.jsonl", "corpus/test.jsonl", "corpus/ood_test.jsonl"}) {
    o.require(runs[0].count(f) == 1, std::string(f) + " missing");
  }
  std::size_t differing = 0;
  for (const auto& [name, content] : runs[0]) {
    auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != content) {
      ++differing;
      o.require(false, name + " differs between runs");
    }
  }
  o.require(runs[0].size() == runs[1].size(), "different output sets");
  o.detail << runs[0].size() << " output files from run-episodes x3, score x2, gen-conversations, build-corpus; "
           << differing << " differ (manifests excluded)";
}

void end_to_end(Outcome& o) {
  const auto cases = dxtest::data_dir() / "sample_cases.jsonl";
  dxtest::TempDir d;
  int rc = cli("run-episodes --cases " + q(cases) + " --out " + q(d / "t.jsonl") + " --agent ideal --seed 1",
               d.path());
  rc |= cli("score --transcripts " + q(d / "t.jsonl") + " --cases " + q(cases) + " --judge oracle --out " +
                q(d / "s.jsonl"),
            d.path());
  rc |= cli("report --scores " + q(d / "s.jsonl") + " --bootstrap 1000 --out " + q(d / "r.json"), d.path());
  o.require(rc == 0, "CLI pipeline failed: " + dxtest::read_file(d / "cli.log"));
  if (rc != 0) return;
  const auto scores = load_scores(d / "s.jsonl").items;
  o.require(scores.size() == 10, "expected 10 scored cases, got " + std::to_string(scores.size()));
  const auto metrics = read_json_file(d / "r.json").at("systems")[0].at("metrics");
  auto mean = [&](const char* m) { return metrics.at(m).at("mean").get<double>(); };
  double direct = 0.0;
  for (const auto& s : scores) direct += s.reward.total;
  direct /= static_cast<double>(scores.size());
  o.require(near(mean("reward"), 1.5, 1e-9) && near(direct, 1.5, 1e-9), "mean total " + fixed(mean("reward"), 12));
  o.require(mean("call_f1") == 1.0, "Call F1 " + fixed(mean("call_f1")));
  o.require(mean("dollar_f1") == 1.0, "$ F1 " + fixed(mean("dollar_f1")));
  o.require(mean("acc") == 1.0, "Acc " + fixed(mean("acc")));
  o.detail << "10 cases: mean total " << fixed(mean("reward"), 12) << " (1.5 +- 1e-9), Call F1 " << mean("call_f1")
           << ", $ F1 " << mean("dollar_f1") << ", Acc " << mean("acc");
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<Criterion> criteria = {
      {1, "reward algebra", 1, reward_algebra},
      {2, "tool-reward oracle equivalence", 60, tool_reward_oracle},
      {3, "Jaccard count-form equivalence", 1, jaccard_count_form},
      {4, "episode protocol byte-exactness", 30, episode_protocol},
      {5, "noise statistics", 60, noise_statistics},
      {6, "exam-noise transformations", 10, exam_noise_transforms},
      {7, "judge probe harness", 5, judge_probe},
      {8, "bootstrap correctness", 120, bootstrap_correctness},
      {9, "determinism", 60, determinism},
      {10, "end-to-end smoke", 10, end_to_end},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(secs < c.budget_s, "runtime over " + fixed(c.budget_s, 0) + " s budget");
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.title << " — " << o.detail.str()
              << " [" << fixed(secs, 2) << " s / " << fixed(c.budget_s, 0) << " s]" << std::endl;
  }
  std::cout << (failed == 0 ? "all 10 criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
