#include <gtest/gtest.h>

#include "dxenv/judge.hpp"
#include "dxenv/reward.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace dxenv;

namespace {

std::shared_ptr<Gateway> scripted_gateway(std::vector<std::string> replies,
                                          std::shared_ptr<ScriptedTransport>* out = nullptr) {
  auto t = ScriptedTransport::from_replies(std::move(replies));
  if (out) *out = t;
  auto clock = std::make_shared<ManualClock>();
  return std::make_shared<Gateway>(t, GatewayOptions{}, clock, std::make_shared<RateLimiter>(1000, clock));
}

std::string squash(const std::string& s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
    } else {
      if (space && !out.empty()) out += ' ';
      space = false;
      out += c;
    }
  }
  return out;
}

std::vector<ProbePair> bucket_pairs(ProbeBucket b, std::size_t n) {
  std::vector<ProbePair> out;
  for (std::size_t i = 0; i < n; ++i) {
    ProbePair p;
    p.bucket = b;
    p.expected = expected_counts(b);
    p.ground_truth = "condition alpha " + std::string(1, char('a' + i % 26)) + std::to_string(i) + "x";
    p.prediction = b == ProbeBucket::Distractor ? "unrelated beta " + std::to_string(i) + "y" : p.ground_truth;
    if (b == ProbeBucket::MultiPartial) p.ground_truth += " and second gamma";
    out.push_back(p);
  }
  return out;
}

std::vector<ProbePair> compliant_set() {
  std::vector<ProbePair> all;
  for (auto b : {ProbeBucket::Synonym, ProbeBucket::Distractor, ProbeBucket::MultiPartial}) {
    auto v = bucket_pairs(b, 33);
    all.insert(all.end(), v.begin(), v.end());
  }
  return all;
}

}  // namespace

TEST(JudgePrompt, MatchesPublishedTemplate) {
  const std::string expected =
      "You are a medical expert evaluating a diagnosis prediction.\n\n"
      "  Ground truth diagnosis: GT\n  Predicted diagnosis: PRED\n\n  Instructions:\n  \n"
      "  1. Identify the individual medical conditions in the ground truth. Note\n"
      "     that a comma may be part of a single condition name (e.g.\n"
      "     \"seminoma, classic type\" is ONE condition, \"Follicular lymphoma,\n"
      "     grade 2\" is ONE condition). Semicolons or \"and\" typically separate\n"
      "     distinct conditions.\n     \n"
      "  2. Identify the individual medical conditions in the prediction, using\n     the same logic.\n     \n"
      "  3. For each ground truth condition, check if any predicted condition\n"
      "     refers to the same disease. Consider synonyms (e.g. \"heart attack\" =\n"
      "     \"myocardial infarction\"), abbreviations, and minor wording\n     differences.\n     \n"
      "  4. Count how many ground truth conditions have a match in the\n     predictions.\n\n"
      "  You MUST respond in exactly this format (numbers only):\n  \n"
      "  gt_count: <number of ground truth conditions>\n  \n"
      "  pred_count: <number of predicted conditions>\n  \n"
      "  matched: <number of matched conditions>\n";
  EXPECT_EQ(squash(render_judge_prompt("GT", "PRED")), squash(expected));
}

TEST(JudgeParse, FixtureCounts) {
  EXPECT_EQ(parse_judge_response("gt_count: 2\npred_count: 1\nmatched: 1"), (DiagnosisCounts{2, 1, 1}));
}

TEST(JudgeParse, ToleratesBlankLinesIndentAndChatter) {
  EXPECT_EQ(parse_judge_response("Sure.\n\n  gt_count: 3\n\n  pred_count:2\n\nmatched : 2\n"),
            (DiagnosisCounts{3, 2, 2}));
}

TEST(JudgeParse, FirstOccurrenceWins) {
  EXPECT_EQ(parse_judge_response("gt_count: 1\npred_count: 1\nmatched: 1\ngt_count: 4"), (DiagnosisCounts{1, 1, 1}));
}

TEST(JudgeParse, RejectsNonNumericAndMissingFields) {
  EXPECT_FALSE(parse_judge_response("sure! gt_count: one"));
  EXPECT_FALSE(parse_judge_response("gt_count: 1\npred_count: 1"));
  EXPECT_FALSE(parse_judge_response("gt_count: 0\npred_count: 1\nmatched: 0"));
}

TEST(JudgeClamp, MatchedAboveMinimumIsClamped) {
  DiagnosisCounts c{2, 1, 2};
  EXPECT_TRUE(clamp_counts(c));
  EXPECT_EQ(c, (DiagnosisCounts{2, 1, 1}));
  DiagnosisCounts ok{2, 2, 1};
  EXPECT_FALSE(clamp_counts(ok));
}

TEST(LlmJudge, ParsesFixtureResponse) {
  LlmJudge judge(scripted_gateway({"gt_count: 2\npred_count: 1\nmatched: 1"}));
  const auto c = judge.judge("Hypertension and diabetes", "Hypertension");
  EXPECT_EQ(c.counts, (DiagnosisCounts{2, 1, 1}));
  EXPECT_EQ(c.attempts, 1);
  EXPECT_FALSE(c.clamped);
}

TEST(LlmJudge, RetriesThenSucceeds) {
  LlmJudge judge(scripted_gateway({"hmm", "gt_count: 1\npred_count: 1\nmatched: 1"}));
  EXPECT_EQ(judge.judge("a", "b").attempts, 2);
}

TEST(LlmJudge, UnparseableAfterRetries) {
  std::shared_ptr<ScriptedTransport> t;
  LlmJudge judge(scripted_gateway({"sure! gt_count: one"}, &t));
  try {
    judge.judge("Influenza", "Flu");
    FAIL() << "expected JudgeUnparseable";
  } catch (const JudgeUnparseable& e) {
    EXPECT_EQ(e.attempts(), kJudgeAttempts);
    EXPECT_EQ(e.last_raw(), "sure! gt_count: one");
  }
  EXPECT_EQ(t->chat_calls(), 3);
}

TEST(LlmJudge, ClampsAndFlags) {
  LlmJudge judge(scripted_gateway({"gt_count: 1\npred_count: 1\nmatched: 3"}));
  const auto c = judge.judge("a", "b");
  EXPECT_TRUE(c.clamped);
  EXPECT_EQ(c.counts.matched, 1);
}

TEST(LlmJudge, UsesConfiguredTemperature) {
  std::vector<double> temps;
  auto t = std::make_shared<ScriptedTransport>([&](const ChatRequest& r) {
    temps.push_back(r.temperature);
    return std::string("gt_count: 1\npred_count: 1\nmatched: 1");
  });
  auto clock = std::make_shared<ManualClock>();
  auto gw = std::make_shared<Gateway>(t, GatewayOptions{}, clock, std::make_shared<RateLimiter>(1000, clock));
  LlmJudge(gw).judge("a", "b");
  LlmJudge(gw, kProbeTemperature).judge("a", "b");
  EXPECT_EQ(temps, (std::vector<double>{0.7, 0.0}));
}

TEST(OracleJudge, SynonymFluIsInfluenza) {
  OracleJudge judge;
  EXPECT_EQ(judge.judge("influenza", "flu").counts, (DiagnosisCounts{1, 1, 1}));
  EXPECT_EQ(judge.judge("Heart attack", "myocardial infarction").counts, (DiagnosisCounts{1, 1, 1}));
}

TEST(OracleJudge, CommaIsNotASeparator) {
  OracleJudge judge;
  EXPECT_EQ(judge.judge("seminoma, classic type", "seminoma, classic type").counts, (DiagnosisCounts{1, 1, 1}));
}

TEST(OracleJudge, AndSplitsConditions) {
  OracleJudge judge;
  EXPECT_EQ(judge.judge("A and B", "A").counts, (DiagnosisCounts{2, 1, 1}));
  EXPECT_EQ(judge.judge("A; B; C", "C; A").counts, (DiagnosisCounts{3, 2, 2}));
}

TEST(OracleJudge, IdenticalStringsGiveKKK) {
  OracleJudge judge;
  Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> conds;
    const auto k = 1 + rng.uniform_index(4);
    std::set<std::string> uniq;
    while (uniq.size() < k) uniq.insert("zq" + dxtest::random_word(rng));
    conds.assign(uniq.begin(), uniq.end());
    std::string dx = conds[0];
    for (std::size_t j = 1; j < conds.size(); ++j) dx += (rng.bernoulli(0.5) ? "; " : " and ") + conds[j];
    const int kk = static_cast<int>(k);
    EXPECT_EQ(judge.judge(dx, dx).counts, (DiagnosisCounts{kk, kk, kk})) << dx;
  }
}

TEST(OracleJudgeProperty, DeterministicAndMatchesSetJaccard) {
  OracleJudge judge;
  const SynonymTable syn = SynonymTable::defaults();
  Rng rng(22);
  const std::vector<std::string> pool = {"influenza", "flu", "pneumonia", "asthma", "heart attack",
                                         "myocardial infarction", "gout", "migraine", "zqx syndrome"};
  for (int i = 0; i < 3000; ++i) {
    auto make = [&] {
      std::string s = pool[rng.uniform_index(pool.size())];
      for (std::size_t j = 0, n = rng.uniform_index(3); j < n; ++j) {
        s += (rng.bernoulli(0.5) ? "; " : " and ") + pool[rng.uniform_index(pool.size())];
      }
      return s;
    };
    const auto g = make(), p = make();
    const auto c1 = judge.judge(g, p), c2 = judge.judge(g, p);
    EXPECT_EQ(c1.counts, c2.counts);
    // Direct set Jaccard over the canonicalized condition sets.
    const auto G = condition_set(g, syn), P = condition_set(p, syn);
    std::size_t inter = 0;
    for (const auto& x : G) inter += P.count(x);
    const double direct = double(inter) / double(G.size() + P.size() - inter);
    EXPECT_NEAR(diagnosis_reward(c1.counts), direct, 1e-12) << g << " | " << p;
  }
}

TEST(SynonymTable, UserEntriesExtendDefaults) {
  auto syn = SynonymTable::defaults();
  syn.merge(SynonymTable::from_json(Json{{"stomach flu", Json::array({"gastroenteritis"})}}));
  OracleJudge judge(syn);
  EXPECT_EQ(judge.judge("Gastroenteritis", "stomach flu").counts.matched, 1);
}

TEST(Probe, OracleOnConsistentPairsIsPerfect) {
  const auto pairs = compliant_set();
  ASSERT_TRUE(validate_probe_set(pairs).empty());
  OracleJudge judge;
  const auto report = run_probe(pairs, judge);
  for (const auto& [b, s] : report.buckets) {
    EXPECT_EQ(s.n, 33u);
    EXPECT_DOUBLE_EQ(s.accuracy, 1.0);
    EXPECT_DOUBLE_EQ(s.mae, 0.0);
  }
}

TEST(Probe, WrongCountsInSynonymBucketAreIncorrect) {
  ProbePair p;
  p.bucket = ProbeBucket::Synonym;
  p.expected = {1, 1, 1};
  p.ground_truth = "influenza";
  p.prediction = "flu";
  LlmJudge judge(scripted_gateway({"gt_count: 1\npred_count: 1\nmatched: 0"}));
  const auto report = run_probe({p}, judge);
  const auto& s = report.buckets.at(ProbeBucket::Synonym);
  EXPECT_EQ(s.correct, 0u);
  EXPECT_DOUBLE_EQ(s.mae, 1.0);
}

TEST(Probe, JudgeFailureCountsAsIncorrect) {
  LlmJudge judge(scripted_gateway({"no idea"}));
  const auto report = run_probe(bucket_pairs(ProbeBucket::Distractor, 2), judge);
  EXPECT_EQ(report.buckets.at(ProbeBucket::Distractor).correct, 0u);
  EXPECT_FALSE(report.outcomes[0].error.empty());
}

TEST(ProbeValidation, CompliantSetHasNoViolations) { EXPECT_TRUE(validate_probe_set(compliant_set()).empty()); }

TEST(ProbeValidation, DistractorSubstringIsViolation) {
  auto pairs = compliant_set();
  pairs[33].ground_truth = "otitis";
  pairs[33].prediction = "otitis media";
  const auto v = validate_probe_set(pairs);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("substring"), std::string::npos);
}

TEST(ProbeValidation, AcuityAndIntegerCouplingFilters) {
  auto pairs = compliant_set();
  pairs[34].ground_truth = "acute gastritis";
  pairs[34].prediction = "chronic gastritis";
  pairs[35].ground_truth = "diabetes mellitus type 1";
  pairs[35].prediction = "diabetes mellitus type 2";
  const auto v = validate_probe_set(pairs);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_NE(v[0].find("acuity"), std::string::npos);
  EXPECT_NE(v[1].find("trailing integer"), std::string::npos);
}

TEST(ProbeValidation, BucketOf32IsSizeViolation) {
  auto pairs = compliant_set();
  pairs.pop_back();
  const auto v = validate_probe_set(pairs);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("MultiPartial has 32"), std::string::npos);
}

TEST(ProbeValidation, ExpectationMustMatchBucket) {
  auto pairs = compliant_set();
  pairs[0].expected = {1, 1, 0};
  EXPECT_EQ(validate_probe_set(pairs).size(), 1u);
}

TEST(ProbeReport, JsonAndTable) {
  OracleJudge judge;
  const auto report = run_probe(compliant_set(), judge);
  const Json j = report.to_json();
  EXPECT_TRUE(j.contains("buckets"));
  EXPECT_NE(report.to_table().find("MultiPartial"), std::string::npos);
}
