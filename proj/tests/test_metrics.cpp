#include <gtest/gtest.h>

#include <cmath>

#include "dxenv/metrics.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace dxenv;

namespace {

ToolCall call(const std::string& name) { return ToolCall{name, Json::object()}; }

TierTable abc_tiers() { return TierTable({{"a", {1, 1}}, {"b", {2, 2}}, {"c", {3, 3}}}); }

EpisodeScore score(const std::string& id, double v) {
  EpisodeScore s;
  s.case_id = id;
  s.sim = s.jac = v;
  s.acc = v > 0.5;
  s.calls = 2;
  s.call_f1 = s.dollar_f1 = v;
  s.reward.total = v;
  return s;
}

}  // namespace

TEST(JacAcc, CountFormExamples) {
  auto r = jac_acc({2, 2, 1});
  EXPECT_DOUBLE_EQ(r.jac, 1.0 / 3.0);
  EXPECT_EQ(r.acc, 0);
  r = jac_acc({2, 3, 2});
  EXPECT_DOUBLE_EQ(r.jac, 2.0 / 3.0);
  EXPECT_EQ(r.acc, 1);
  EXPECT_THROW(jac_acc({0, 1, 0}), InvalidCounts);
}

TEST(JacAccProperty, MatchesExplicitSetsExhaustively) {
  for (int g = 1; g <= 5; ++g) {
    for (int p = 0; p <= 5; ++p) {
      for (int m = 0; m <= std::min(g, p); ++m) {
        const auto r = jac_acc({g, p, m});
        const auto o = oracle::set_metrics(g, p, m);
        EXPECT_EQ(r.jac, o.jac) << g << p << m;
        EXPECT_EQ(r.acc, o.acc) << g << p << m;
      }
    }
  }
}

TEST(Sim, IdenticalOrthogonalAndNegative) {
  const std::vector<double> u = {0.6, 0.8};
  EXPECT_NEAR(sim_from_embeddings(u, u), 1.0, 1e-6);
  EXPECT_DOUBLE_EQ(sim_from_embeddings({1, 0}, {0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(sim_from_embeddings({1, 0}, {-0.3, std::sqrt(1 - 0.09)}), 0.0);
}

TEST(Sim, ThroughScriptedEmbedder) {
  auto t = std::make_shared<ScriptedTransport>(
      [](const ChatRequest&) { return std::string(); },
      [](const std::vector<std::string>& xs) {
        std::vector<std::vector<double>> out;
        for (const auto& x : xs) out.push_back(x == "flu" ? std::vector<double>{1, 1} : std::vector<double>{1, 0});
        return out;
      });
  auto clock = std::make_shared<ManualClock>();
  Gateway gw(t, GatewayOptions{}, clock, std::make_shared<RateLimiter>(1000, clock));
  EXPECT_NEAR(sim_score("flu", "influenza", gw), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(sim_score("flu", "flu", gw), 1.0, 1e-12);
}

TEST(ToolEfficiency, DuplicatesAndDistractor) {
  const std::vector<ToolCall> calls = {call("a"), call("a"), call("c")};
  const auto t = TierTable({{"a", {1, 1}}, {"b", {2, 2}}, {"c", {3, 3}}});
  const auto e = tool_efficiency(calls, {"a", "b"}, t);
  EXPECT_EQ(e.calls, 3);
  EXPECT_DOUBLE_EQ(e.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(e.recall, 0.5);
  EXPECT_NEAR(e.call_f1, 4.0 / 7.0, 1e-12);
  // $ precision 4/10, $ recall 2/6.
  EXPECT_NEAR(e.dollar_f1, 2 * 0.4 * (1.0 / 3) / (0.4 + 1.0 / 3), 1e-12);
  EXPECT_NEAR(e.dollar_f1, 0.364, 1e-3);
}

TEST(ToolEfficiency, ExactCoverIsPerfect) {
  const std::vector<ToolCall> calls = {call("b"), call("a")};
  const auto e = tool_efficiency(calls, {"a", "b"}, abc_tiers());
  EXPECT_DOUBLE_EQ(e.call_f1, 1.0);
  EXPECT_DOUBLE_EQ(e.dollar_f1, 1.0);
}

TEST(ToolEfficiency, RepeatedGroundTruthCallKeepsPerfectScore) {
  const std::vector<ToolCall> calls = {call("a"), call("a")};
  const auto e = tool_efficiency(calls, {"a"}, abc_tiers());
  EXPECT_DOUBLE_EQ(e.precision, 1.0);
  EXPECT_DOUBLE_EQ(e.call_f1, 1.0);
}

TEST(ToolEfficiency, NoCallsScoresZero) {
  const auto e = tool_efficiency(std::span<const ToolCall>{}, {"a"}, abc_tiers());
  EXPECT_EQ(e.calls, 0);
  EXPECT_DOUBLE_EQ(e.precision, 1.0);
  EXPECT_DOUBLE_EQ(e.recall, 0.0);
  EXPECT_DOUBLE_EQ(e.call_f1, 0.0);
  EXPECT_DOUBLE_EQ(e.dollar_f1, 0.0);
}

TEST(ToolEfficiencyProperty, BoundsAndPerfectIffExactCover) {
  Rng rng(31);
  const std::vector<std::string> names = {"a", "b", "c", "d"};
  const auto t = TierTable({{"a", {1, 1}}, {"b", {2, 2}}, {"c", {3, 3}}, {"d", {1, 3}}});
  for (int i = 0; i < 5000; ++i) {
    std::vector<ToolCall> calls;
    for (std::size_t k = 0, n = rng.uniform_index(5); k < n; ++k) calls.push_back(call(names[rng.uniform_index(4)]));
    std::set<std::string> gts;
    for (std::size_t k = 0, n = 1 + rng.uniform_index(3); k < n; ++k) gts.insert(names[rng.uniform_index(4)]);
    const std::vector<std::string> gt(gts.begin(), gts.end());
    const auto e = tool_efficiency(calls, gt, t);
    for (double v : {e.precision, e.recall, e.call_f1, e.dollar_precision, e.dollar_recall, e.dollar_f1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    // Call-weighted precision credits repeated GT calls, so perfection
    // only requires the called name set to equal the GT set.
    std::set<std::string> called;
    for (const auto& c : calls) called.insert(c.name);
    const bool covers = called == gts;
    EXPECT_EQ(e.call_f1 == 1.0, covers);
    EXPECT_EQ(e.dollar_f1 == 1.0, covers);
  }
}

TEST(Bootstrap, ConstantSamplesGiveZeroWidth) {
  const std::vector<double> xs(50, 0.7);
  Rng rng(1);
  const auto r = bootstrap(xs, 500, rng);
  EXPECT_DOUBLE_EQ(r.mean, 0.7);
  EXPECT_DOUBLE_EQ(r.ci_low, 0.7);
  EXPECT_DOUBLE_EQ(r.ci_high, 0.7);
  EXPECT_EQ(r.half_width(), 0.0);
}

TEST(Bootstrap, PairedIdenticalGivesPOne) {
  Rng gen(2);
  std::vector<double> xs;
  for (int i = 0; i < 100; ++i) xs.push_back(gen.uniform01());
  Rng rng(3);
  const auto r = paired_bootstrap(xs, xs, 1000, rng);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0);
  EXPECT_DOUBLE_EQ(r.diff.mean, 0.0);
}

TEST(Bootstrap, ClearDifferenceHasSmallP) {
  Rng gen(4);
  std::vector<double> a, b;
  for (int i = 0; i < 100; ++i) {
    a.push_back(gen.normal(0.5, 0.1));
    b.push_back(a.back() + 0.2 + gen.normal(0, 0.05));
  }
  Rng rng(5);
  const auto r = paired_bootstrap(a, b, 2000, rng);
  EXPECT_LT(r.p_value, 0.01);
  EXPECT_GT(r.diff.ci_low, 0.0);
}

TEST(Bootstrap, HalfWidthNearNormalTheory) {
  Rng gen(6);
  std::vector<double> xs;
  for (int i = 0; i < 200; ++i) xs.push_back(gen.normal(0.6, 0.1));
  Rng rng(7);
  const auto r = bootstrap(xs, 10000, rng);
  // 1.96 * 0.1 / sqrt(200) = 0.01386.
  EXPECT_NEAR(r.half_width(), 0.01386, 0.2 * 0.01386);
  EXPECT_LE(r.ci_low, r.mean);
  EXPECT_GE(r.ci_high, r.mean);
}

TEST(Bootstrap, SeededAndReproducible) {
  const std::vector<double> xs = {0.1, 0.9, 0.4, 0.3, 0.8};
  Rng r1(9), r2(9);
  const auto a = bootstrap(xs, 300, r1), b = bootstrap(xs, 300, r2);
  EXPECT_EQ(a.ci_low, b.ci_low);
  EXPECT_EQ(a.ci_high, b.ci_high);
}

TEST(Bootstrap, InputErrors) {
  Rng rng(1);
  EXPECT_THROW(bootstrap(std::vector<double>{1.0}, 10, rng), InsufficientSamples);
  EXPECT_THROW(bootstrap(std::vector<double>{}, 10, rng), InsufficientSamples);
  EXPECT_THROW(paired_bootstrap(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}, 10, rng), MisalignedPairs);
}

TEST(AlignPairs, ReordersAndRejectsMismatch) {
  const std::vector<EpisodeScore> a = {score("x", 0.1), score("y", 0.2)};
  const std::vector<EpisodeScore> b = {score("y", 0.5), score("x", 0.6)};
  const auto al = align_pairs(a, b);
  EXPECT_EQ(al[0].case_id, "x");
  EXPECT_DOUBLE_EQ(al[0].jac, 0.6);
  EXPECT_THROW(align_pairs(a, {score("x", 0.1), score("z", 0.1)}), MisalignedPairs);
  EXPECT_THROW(align_pairs(a, {score("x", 0.1)}), MisalignedPairs);
}

TEST(FormatCi, MeanPlusMinusHalfWidth) {
  BootstrapReport r;
  r.mean = 0.5;
  r.ci_low = 0.45;
  r.ci_high = 0.57;
  EXPECT_EQ(format_ci(r), "0.500 ± 0.060");
}

TEST(EpisodeScore, JsonRoundTrip) {
  auto s = score("c1", 0.25);
  s.flags = {"TurnLimit"};
  s.error = "judge failed";
  const Json j = s;
  const auto back = j.get<EpisodeScore>();
  EXPECT_EQ(Json(back).dump(), j.dump());
}

TEST(BuildReport, SingleSystemHasNoPValues) {
  std::vector<EpisodeScore> xs;
  for (int i = 0; i < 20; ++i) xs.push_back(score("c" + std::to_string(i), i / 20.0));
  const auto rep = build_report({{"sys", xs}}, 200, 11);
  ASSERT_EQ(rep.systems.size(), 1u);
  for (const auto& [m, r] : rep.systems[0].metrics) EXPECT_TRUE(r.p_values.empty()) << m;
  const auto text = rep.to_text();
  EXPECT_NE(text.find("Call F1"), std::string::npos);
  EXPECT_NE(text.find("±"), std::string::npos);
}

TEST(BuildReport, IdenticalSystemsHavePOneAndSameText) {
  std::vector<EpisodeScore> xs;
  for (int i = 0; i < 20; ++i) xs.push_back(score("c" + std::to_string(i), (i % 7) / 7.0));
  auto ys = xs;
  std::reverse(ys.begin(), ys.end());
  const auto rep = build_report({{"a", xs}, {"b", ys}}, 200, 11);
  for (const auto& [m, r] : rep.systems[1].metrics) EXPECT_DOUBLE_EQ(r.p_values.at("a"), 1.0) << m;
  EXPECT_EQ(rep.to_json().dump(), build_report({{"a", xs}, {"b", ys}}, 200, 11).to_json().dump());
}
