#include <gtest/gtest.h>

#include "dxenv/corpus.hpp"
#include "dxenv/judge.hpp"
#include "dxenv/noise_engine.hpp"
#include "dxenv/patient_sim.hpp"
#include "dxenv/text_util.hpp"
#include "test_support.hpp"

using namespace dxenv;

TEST(DataFiles, PersonasMatchBuiltIns) {
  const auto t = PersonaTable::load(dxtest::data_dir() / "personas.json");
  EXPECT_EQ(t.personas(), PersonaTable::defaults().personas());
}

TEST(DataFiles, LexiconMatchesBuiltIns) {
  const auto l = NoiseLexicon::load(dxtest::data_dir() / "noise_lexicon.json");
  EXPECT_EQ(Json(l).dump(), Json(NoiseLexicon::defaults()).dump());
}

TEST(DataFiles, SynonymsExtendBuiltIns) {
  const auto file = SynonymTable::load(dxtest::data_dir() / "synonyms.json");
  auto merged = SynonymTable::defaults();
  merged.merge(file);
  EXPECT_GE(merged.size(), SynonymTable::defaults().size());
  EXPECT_GT(file.size(), 0u);
}

TEST(DataFiles, ProbePairsSatisfyBucketInvariants) {
  const auto pairs = load_probe_pairs(dxtest::data_dir() / "probe_pairs.json");
  EXPECT_EQ(pairs.size(), 3 * kProbeBucketSize);
  const auto v = validate_probe_set(pairs);
  EXPECT_TRUE(v.empty()) << (v.empty() ? "" : v.front());
}

TEST(DataFiles, SampleCasesAreValidAndHideDiagnosis) {
  const auto r = load_cases(dxtest::data_dir() / "sample_cases.jsonl", kDefaultDistractors);
  EXPECT_TRUE(r.diagnostics.empty());
  ASSERT_EQ(r.items.size(), 10u);
  std::set<CaseSource> sources;
  for (const auto& c : r.items) {
    sources.insert(c.source);
    for (const auto& s : c.self_reported_symptoms) EXPECT_FALSE(text::icontains(s, c.ground_truth_dx)) << c.case_id;
    for (const auto& [name, e] : c.exam_map) {
      EXPECT_FALSE(text::icontains(e.canonical_findings, c.ground_truth_dx)) << c.case_id << " " << name;
    }
    EXPECT_FALSE(text::icontains(c.demographics + " " + c.medical_history, c.ground_truth_dx)) << c.case_id;
  }
  EXPECT_EQ(sources.size(), 3u);
}

TEST(DataFiles, TaxonomyCoversSampleExams) {
  const auto tax = ExamTaxonomy::load(dxtest::data_dir() / "taxonomy.json");
  for (const auto& c : load_cases(dxtest::data_dir() / "sample_cases.jsonl").items) {
    for (const auto& t : c.available_tools) {
      ASSERT_TRUE(tax.entries.count(t.name)) << t.name;
      EXPECT_EQ(tax.entries.at(t.name).schema.cost_financial, t.cost_financial) << t.name;
      EXPECT_EQ(tax.entries.at(t.name).schema.cost_discomfort, t.cost_discomfort) << t.name;
    }
  }
}
