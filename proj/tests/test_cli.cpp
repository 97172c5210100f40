#include <gtest/gtest.h>

#include "dxenv/corpus.hpp"
#include "dxenv/episode_engine.hpp"
#include "dxenv/pipeline.hpp"
#include "test_support.hpp"

using namespace dxenv;
using dxtest::TempDir;

namespace {

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::filesystem::path sample_cases() { return dxtest::data_dir() / "sample_cases.jsonl"; }

class Cli : public ::testing::Test {
 protected:
  int run(const std::string& args) {
    const int code = dxtest::run_cli(args, dir / "cli.log");
    last_log = dxtest::read_file(dir / "cli.log");
    return code;
  }

  void write_cases(const std::vector<CaseProfile>& cases, const std::filesystem::path& path) {
    std::string s;
    for (const auto& c : cases) s += Json(c).dump() + "\n";
    dxtest::write_file(path, s);
  }

  TempDir dir;
  std::string last_log;
};

}  // namespace

TEST_F(Cli, RunEpisodesIsDeterministic) {
  dxtest::write_file(dir / "two.jsonl", [] {
    const auto lines = dxtest::read_lines(sample_cases());
    return lines[0] + "\n" + lines[4] + "\n";
  }());
  for (const auto* out : {"a.jsonl", "b.jsonl"}) {
    ASSERT_EQ(run("run-episodes --cases " + q(dir / "two.jsonl") + " --out " + q(dir / out) +
                  " --agent random --noise --seed 11 --workers 2"),
              0)
        << last_log;
  }
  EXPECT_EQ(dxtest::read_file(dir / "a.jsonl"), dxtest::read_file(dir / "b.jsonl"));
  EXPECT_EQ(dxtest::read_lines(dir / "a.jsonl").size(), 2u);
  const auto manifest = read_json_file(dir / "a.jsonl.manifest.json");
  EXPECT_EQ(manifest.at("command"), "run-episodes");
  EXPECT_EQ(manifest.at("seeds").at("seed"), "11");
}

TEST_F(Cli, UnreachableBackendFailsFastWithoutManifest) {
  EXPECT_NE(run("run-episodes --cases " + q(sample_cases()) + " --out " + q(dir / "t.jsonl") +
                " --agent llm --agent-kind http --agent-url http://127.0.0.1:9/v1"),
            0);
  EXPECT_NE(last_log.find("agent"), std::string::npos) << last_log;
  EXPECT_FALSE(std::filesystem::exists(dir / "t.jsonl.manifest.json"));
}

TEST_F(Cli, ScoreIdealDoctorIsPerfect) {
  ASSERT_EQ(run("run-episodes --cases " + q(sample_cases()) + " --out " + q(dir / "t.jsonl") + " --seed 3"), 0)
      << last_log;
  ASSERT_EQ(run("score --transcripts " + q(dir / "t.jsonl") + " --cases " + q(sample_cases()) + " --out " +
                q(dir / "s.jsonl")),
            0)
      << last_log;
  const auto lines = dxtest::read_lines(dir / "s.jsonl");
  ASSERT_EQ(lines.size(), 10u);
  for (const auto& l : lines) {
    const auto s = Json::parse(l).get<EpisodeScore>();
    EXPECT_NEAR(s.reward.total, 1.5, 1e-9) << s.case_id;
    EXPECT_EQ(s.acc, 1);
    EXPECT_DOUBLE_EQ(s.call_f1, 1.0);
  }
  const auto first = dxtest::read_file(dir / "s.jsonl");
  ASSERT_EQ(run("score --transcripts " + q(dir / "t.jsonl") + " --cases " + q(sample_cases()) + " --out " +
                q(dir / "s.jsonl")),
            0);
  EXPECT_EQ(dxtest::read_file(dir / "s.jsonl"), first);
}

TEST_F(Cli, ScoreChargesUnnecessaryExam) {
  const auto profile = dxtest::make_profile();
  write_cases({profile}, dir / "c.jsonl");
  // Ideal run plus one colonoscopy, tiers (3, 3).
  const auto lex = NoiseLexicon::defaults();
  const auto personas = PersonaTable::defaults();
  ScriptedPatient patient;
  EpisodeConfig cfg;
  cfg.noise_enabled = false;
  Episode ep(profile, cfg, patient, lex, personas);
  ep.step("What brings you in?");
  ep.step(R"(<tool_call>{"name": "abdominal_ultrasound", "arguments": {"region": "right upper quadrant"}}</tool_call>)");
  ep.step(R"(<tool_call>{"name": "cbc", "arguments": {}}</tool_call>)");
  ep.step(R"(<tool_call>{"name": "colonoscopy", "arguments": {}}</tool_call>)");
  ep.step("[DIAGNOSIS: Acute cholecystitis]");
  store_transcripts(dir / "t.jsonl", {ep.transcript()}, false);
  ASSERT_EQ(run("score --transcripts " + q(dir / "t.jsonl") + " --cases " + q(dir / "c.jsonl") + " --out " +
                q(dir / "s.jsonl")),
            0)
      << last_log;
  const auto s = Json::parse(dxtest::read_lines(dir / "s.jsonl").at(0)).get<EpisodeScore>();
  EXPECT_DOUBLE_EQ(s.reward.r_cost, 1.0);
  EXPECT_DOUBLE_EQ(s.reward.r_dx, 1.0);
  ASSERT_EQ(s.reward.unnecessary.size(), 1u);
  EXPECT_EQ(s.reward.unnecessary[0].name, "colonoscopy");
}

TEST_F(Cli, ScoreWeightsFromConfigAndFlags) {
  ASSERT_EQ(run("run-episodes --cases " + q(sample_cases()) + " --out " + q(dir / "t.jsonl")), 0);
  dxtest::write_file(dir / "cfg.json", R"({"score": {"w_tool": 0.2, "w_cost": 0.3}})");
  ASSERT_EQ(run("score --config " + q(dir / "cfg.json") + " --transcripts " + q(dir / "t.jsonl") + " --cases " +
                q(sample_cases()) + " --out " + q(dir / "s.jsonl") + " --w-cost 0.05"),
            0)
      << last_log;
  const auto s = Json::parse(dxtest::read_lines(dir / "s.jsonl").at(0)).get<EpisodeScore>();
  EXPECT_DOUBLE_EQ(s.reward.weights.w_tool, 0.2);
  EXPECT_DOUBLE_EQ(s.reward.weights.w_cost, 0.05);
  EXPECT_NEAR(s.reward.total, 1.2, 1e-12);
}

TEST_F(Cli, ReportSingleAndPaired) {
  ASSERT_EQ(run("run-episodes --cases " + q(sample_cases()) + " --out " + q(dir / "t.jsonl")), 0);
  ASSERT_EQ(run("score --transcripts " + q(dir / "t.jsonl") + " --cases " + q(sample_cases()) + " --out " +
                q(dir / "s.jsonl")),
            0);
  ASSERT_EQ(run("report --scores " + q(dir / "s.jsonl") + " --bootstrap 500 --out " + q(dir / "r1.json")), 0)
      << last_log;
  EXPECT_NE(last_log.find("Call F1"), std::string::npos);
  const auto r1 = read_json_file(dir / "r1.json");
  EXPECT_TRUE(r1.at("systems")[0].at("metrics").at("reward").at("p_values").empty());
  EXPECT_NEAR(r1.at("systems")[0].at("metrics").at("reward").at("mean").get<double>(), 1.5, 1e-9);

  ASSERT_EQ(run("report --scores " + q(dir / "s.jsonl") + " " + q(dir / "s.jsonl") +
                " --names base other --bootstrap 500 --out " + q(dir / "r2.json")),
            0)
      << last_log;
  const auto r2 = read_json_file(dir / "r2.json");
  EXPECT_DOUBLE_EQ(r2.at("systems")[1].at("metrics").at("jac").at("p_values").at("base").get<double>(), 1.0);
}

TEST_F(Cli, ProbeJudgeOracleAndMalformedFile) {
  ASSERT_EQ(run("probe-judge --probes " + q(dxtest::data_dir() / "probe_pairs.json") + " --synonyms " +
                q(dxtest::data_dir() / "synonyms.json") + " --out " + q(dir / "p.json")),
            0)
      << last_log;
  const auto rep = read_json_file(dir / "p.json");
  for (const auto& [bucket, s] : rep.at("buckets").items()) {
    EXPECT_DOUBLE_EQ(s.at("accuracy").get<double>(), 1.0) << bucket;
    EXPECT_DOUBLE_EQ(s.at("mae").get<double>(), 0.0) << bucket;
  }
  dxtest::write_file(dir / "bad.json", R"([{"bucket": "Synonym", "ground_truth": "flu"}])");
  EXPECT_NE(run("probe-judge --probes " + q(dir / "bad.json") + " --out " + q(dir / "bad.report.json")), 0);
  EXPECT_FALSE(std::filesystem::exists(dir / "bad.report.json"));
}

TEST_F(Cli, GenConversationsWritesRecords) {
  dxtest::write_file(dir / "three.jsonl", [] {
    const auto lines = dxtest::read_lines(sample_cases());
    return lines[0] + "\n" + lines[1] + "\n" + lines[5] + "\n";
  }());
  ASSERT_EQ(run("gen-conversations --cases " + q(dir / "three.jsonl") + " --out " + q(dir / "sft.jsonl") +
                " --transcripts-out " + q(dir / "raw.jsonl") + " --seed 4"),
            0)
      << last_log;
  const auto lines = dxtest::read_lines(dir / "sft.jsonl");
  ASSERT_EQ(lines.size(), 3u);
  for (const auto& l : lines) {
    const auto j = Json::parse(l);
    EXPECT_EQ(j.at("messages")[0].at("role"), "system");
  }
  EXPECT_EQ(load_transcripts(dir / "raw.jsonl").items.size(), 3u);
}

TEST_F(Cli, BuildCorpusSplitsAndRejectsOversizedCounts) {
  ASSERT_EQ(run("build-corpus --cases " + q(sample_cases()) + " --out-dir " + q(dir / "corpus") +
                " --sft 4 --rl 2 --test 2 --seed 1"),
            0)
      << last_log;
  EXPECT_EQ(dxtest::read_lines(dir / "corpus" / "sft.jsonl").size(), 4u);
  EXPECT_EQ(dxtest::read_lines(dir / "corpus" / "ood_test.jsonl").size(), 2u);
  EXPECT_NE(run("build-corpus --cases " + q(sample_cases()) + " --out-dir " + q(dir / "big") + " --sft 20"), 0);
  EXPECT_NE(last_log.find("need"), std::string::npos) << last_log;
}

TEST_F(Cli, MissingInputsAndUnknownModes) {
  EXPECT_NE(run("score --transcripts " + q(dir / "none.jsonl") + " --cases " + q(sample_cases()) + " --out " +
                q(dir / "s.jsonl")),
            0);
  EXPECT_NE(run("run-episodes --cases " + q(sample_cases()) + " --out " + q(dir / "t.jsonl") + " --agent psychic"), 0);
  EXPECT_NE(run("no-such-command"), 0);
}

TEST(MergeConfig, FlagsOverrideFileOverrideDefaults) {
  const Json defaults = {{"seed", 0}, {"w_tool", 0.5}, {"backend", {{"kind", "echo"}, {"model", "m0"}}}};
  const Json file = {{"seed", 5}, {"backend", {{"model", "m1"}}}};
  const Json flags = {{"w_tool", 0.9}, {"backend", {{"kind", "http"}}}};
  const Json m = merge_config(defaults, file, flags);
  EXPECT_EQ(m.at("seed"), 5);
  EXPECT_EQ(m.at("w_tool"), 0.9);
  EXPECT_EQ(m.at("backend").at("kind"), "http");
  EXPECT_EQ(m.at("backend").at("model"), "m1");
  EXPECT_THROW(merge_config(defaults, Json::array(), Json::object()), SchemaError);
}
