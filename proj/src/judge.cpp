#include "dxenv/judge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include <spdlog/spdlog.h>

#include "dxenv/text_util.hpp"

namespace dxenv {

void to_json(Json& j, const JudgeCounts& c) {
  j = Json{{"gt_count", c.counts.gt_count},
           {"pred_count", c.counts.pred_count},
           {"matched", c.counts.matched},
           {"raw_response", c.raw_response},
           {"attempts", c.attempts},
           {"clamped", c.clamped}};
}

std::string render_judge_prompt(const std::string& ground_truth, const std::string& predicted) {
  return "You are a medical expert evaluating a diagnosis prediction.\n"
         "\n"
         "  Ground truth diagnosis: " + ground_truth + "\n"
         "  Predicted diagnosis: " + predicted + "\n"
         "\n"
         "  Instructions:\n"
         "\n"
         "  1. Identify the individual medical conditions in the ground truth. Note\n"
         "     that a comma may be part of a single condition name (e.g.\n"
         "     \"seminoma, classic type\" is ONE condition, \"Follicular lymphoma,\n"
         "     grade 2\" is ONE condition). Semicolons or \"and\" typically separate\n"
         "     distinct conditions.\n"
         "\n"
         "  2. Identify the individual medical conditions in the prediction, using\n"
         "     the same logic.\n"
         "\n"
         "  3. For each ground truth condition, check if any predicted condition\n"
         "     refers to the same disease. Consider synonyms (e.g. \"heart attack\" =\n"
         "     \"myocardial infarction\"), abbreviations, and minor wording\n"
         "     differences.\n"
         "\n"
         "  4. Count how many ground truth conditions have a match in the\n"
         "     predictions.\n"
         "\n"
         "  You MUST respond in exactly this format (numbers only):\n"
         "\n"
         "  gt_count: <number of ground truth conditions>\n"
         "\n"
         "  pred_count: <number of predicted conditions>\n"
         "\n"
         "  matched: <number of matched conditions>\n";
}

std::optional<DiagnosisCounts> parse_judge_response(const std::string& raw) {
  static const std::regex line_re(R"(^(gt_count|pred_count|matched)\s*:\s*([0-9]+)$)");
  std::optional<int> gt, pred, matched;
  std::istringstream in(raw);
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = text::trim(line);
    std::smatch m;
    if (!std::regex_match(t, m, line_re)) continue;
    int value = 0;
    try {
      value = std::stoi(m[2].str());
    } catch (const std::exception&) {
      return std::nullopt;
    }
    const std::string key = m[1].str();
    auto& slot = key == "gt_count" ? gt : key == "pred_count" ? pred : matched;
    if (!slot) slot = value;
  }
  if (!gt || !pred || !matched || *gt < 1) return std::nullopt;
  return DiagnosisCounts{*gt, *pred, *matched};
}

bool clamp_counts(DiagnosisCounts& c) {
  const int hi = std::max(0, std::min(c.gt_count, c.pred_count));
  const int clamped = std::clamp(c.matched, 0, hi);
  const bool changed = clamped != c.matched;
  c.matched = clamped;
  return changed;
}

LlmJudge::LlmJudge(std::shared_ptr<Gateway> gateway, double temperature, int max_attempts)
    : gateway_(std::move(gateway)), temperature_(temperature), max_attempts_(max_attempts) {
  if (!gateway_) throw std::invalid_argument("LlmJudge needs a gateway");
  if (max_attempts_ < 1) throw std::invalid_argument("judge needs at least one attempt");
}

JudgeCounts LlmJudge::judge(const std::string& ground_truth, const std::string& predicted) {
  if (ground_truth.empty() || predicted.empty()) {
    throw std::invalid_argument("judge needs non-empty ground truth and prediction");
  }
  const std::vector<ChatMessage> messages = {{"user", render_judge_prompt(ground_truth, predicted)}};
  std::string raw;
  for (int attempt = 1; attempt <= max_attempts_; ++attempt) {
    raw = gateway_->chat(messages, temperature_, 64);
    if (auto counts = parse_judge_response(raw)) {
      JudgeCounts out;
      out.counts = *counts;
      out.raw_response = raw;
      out.attempts = attempt;
      out.clamped = clamp_counts(out.counts);
      if (out.clamped) spdlog::warn("judge counts clamped for ground truth '{}'", ground_truth);
      return out;
    }
    spdlog::debug("unparseable judge response (attempt {}): {}", attempt, raw);
  }
  throw JudgeUnparseable("judge response unparseable after " + std::to_string(max_attempts_) + " attempts",
                         raw, max_attempts_);
}

// ---------------------------------------------------------------------------

namespace {

std::string normalize_condition(const std::string& s) {
  std::string t = text::to_lower(text::trim(s));
  while (!t.empty() && (t.back() == '.' || std::isspace(static_cast<unsigned char>(t.back())))) t.pop_back();
  // Collapse internal whitespace runs.
  std::string out;
  bool space = false;
  for (char c : t) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += c;
  }
  return out;
}

}  // namespace

SynonymTable SynonymTable::defaults() {
  SynonymTable t;
  t.add("influenza", "flu");
  t.add("influenza", "the flu");
  t.add("influenza", "grippe");
  t.add("myocardial infarction", "heart attack");
  t.add("myocardial infarction", "mi");
  t.add("myocardial infarction", "acute myocardial infarction");
  t.add("cerebrovascular accident", "stroke");
  t.add("hypertension", "high blood pressure");
  t.add("gastroesophageal reflux disease", "gerd");
  t.add("gastroesophageal reflux disease", "acid reflux disease");
  t.add("urinary tract infection", "uti");
  t.add("chronic obstructive pulmonary disease", "copd");
  t.add("pulmonary embolism", "pe");
  t.add("deep vein thrombosis", "dvt");
  return t;
}

void SynonymTable::add(const std::string& canonical, const std::string& alias) {
  const std::string c = normalize_condition(canonical);
  alias_[normalize_condition(alias)] = c;
  alias_.emplace(c, c);
}

std::string SynonymTable::canonicalize(const std::string& condition) const {
  const std::string n = normalize_condition(condition);
  auto it = alias_.find(n);
  return it == alias_.end() ? n : it->second;
}

void SynonymTable::merge(const SynonymTable& other) {
  for (const auto& [a, c] : other.alias_) alias_[a] = c;
}

SynonymTable SynonymTable::from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("synonym table must be a JSON object");
  SynonymTable t;
  for (const auto& [canonical, aliases] : j.items()) {
    if (canonical == "version") continue;
    if (!aliases.is_array()) throw SchemaError("synonyms for '" + canonical + "' must be a list");
    t.add(canonical, canonical);
    for (const auto& a : aliases) t.add(canonical, a.get<std::string>());
  }
  return t;
}

SynonymTable SynonymTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open synonym table: " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

Json SynonymTable::to_json() const {
  Json j = Json::object();
  for (const auto& [alias, canonical] : alias_) {
    if (!j.contains(canonical)) j[canonical] = Json::array();
    if (alias != canonical) j[canonical].push_back(alias);
  }
  return j;
}

std::vector<std::string> split_conditions(const std::string& diagnosis) {
  static const std::regex and_re(R"(\s+and\s+)", std::regex::icase);
  std::vector<std::string> out;
  for (const auto& part : text::split(diagnosis, ";")) {
    std::sregex_token_iterator it(part.begin(), part.end(), and_re, -1);
    for (std::sregex_token_iterator end; it != end; ++it) {
      std::string c = normalize_condition(it->str());
      if (!c.empty()) out.push_back(std::move(c));
    }
  }
  return out;
}

std::set<std::string> condition_set(const std::string& diagnosis, const SynonymTable& synonyms) {
  std::set<std::string> out;
  for (const auto& c : split_conditions(diagnosis)) out.insert(synonyms.canonicalize(c));
  return out;
}

OracleJudge::OracleJudge(SynonymTable synonyms) : synonyms_(std::move(synonyms)) {}

JudgeCounts OracleJudge::judge(const std::string& ground_truth, const std::string& predicted) {
  const auto g = condition_set(ground_truth, synonyms_);
  const auto p = condition_set(predicted, synonyms_);
  int matched = 0;
  for (const auto& c : g) matched += static_cast<int>(p.count(c));
  JudgeCounts out;
  out.counts = DiagnosisCounts{static_cast<int>(g.size()), static_cast<int>(p.size()), matched};
  out.raw_response = "gt_count: " + std::to_string(out.counts.gt_count) +
                     "\npred_count: " + std::to_string(out.counts.pred_count) +
                     "\nmatched: " + std::to_string(out.counts.matched);
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ProbeBucket b) {
  switch (b) {
    case ProbeBucket::Synonym: return "Synonym";
    case ProbeBucket::Distractor: return "Distractor";
    case ProbeBucket::MultiPartial: return "MultiPartial";
  }
  return "?";
}

ProbeBucket probe_bucket_from_string(std::string_view s) {
  if (s == "Synonym") return ProbeBucket::Synonym;
  if (s == "Distractor") return ProbeBucket::Distractor;
  if (s == "MultiPartial") return ProbeBucket::MultiPartial;
  throw SchemaError("unknown probe bucket: " + std::string(s));
}

DiagnosisCounts expected_counts(ProbeBucket b) {
  switch (b) {
    case ProbeBucket::Synonym: return {1, 1, 1};
    case ProbeBucket::Distractor: return {1, 1, 0};
    case ProbeBucket::MultiPartial: return {2, 1, 1};
  }
  return {};
}

void to_json(Json& j, const ProbePair& p) {
  j = Json{{"bucket", std::string(to_string(p.bucket))},
           {"ground_truth", p.ground_truth},
           {"prediction", p.prediction},
           {"expected", p.expected}};
}

void from_json(const Json& j, ProbePair& p) {
  try {
    p.bucket = probe_bucket_from_string(j.at("bucket").get<std::string>());
    p.ground_truth = j.at("ground_truth").get<std::string>();
    p.prediction = j.at("prediction").get<std::string>();
    p.expected = j.contains("expected") ? j.at("expected").get<DiagnosisCounts>() : expected_counts(p.bucket);
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("probe pair: ") + e.what());
  }
}

std::vector<ProbePair> load_probe_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open probe file: " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  const Json& arr = j.is_object() ? j.at("pairs") : j;
  if (!arr.is_array()) throw SchemaError(path.string() + ": expected a list of pairs");
  return arr.get<std::vector<ProbePair>>();
}

namespace {

// Strips one leading acuity word, if present.
std::string strip_acuity(const std::string& name) {
  for (const auto& p : kAcuityPrefixes) {
    if (name.size() > p.size() && name.starts_with(p) && name[p.size()] == ' ') {
      return text::trim(name.substr(p.size()));
    }
  }
  return name;
}

// Strips a trailing integer token, if present.
std::string strip_trailing_integer(const std::string& name) {
  std::size_t end = name.size();
  std::size_t i = end;
  while (i > 0 && std::isdigit(static_cast<unsigned char>(name[i - 1]))) --i;
  if (i == end) return name;
  return text::trim(name.substr(0, i));
}

}  // namespace

std::vector<std::string> validate_probe_set(const std::vector<ProbePair>& pairs, std::size_t bucket_size) {
  std::vector<std::string> out;
  std::map<ProbeBucket, std::size_t> sizes;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const std::string where = "pair " + std::to_string(i) + " (" + std::string(to_string(p.bucket)) + ")";
    ++sizes[p.bucket];
    if (p.ground_truth.empty() || p.prediction.empty()) out.push_back(where + ": empty diagnosis string");
    if (!(p.expected == expected_counts(p.bucket))) {
      out.push_back(where + ": expected counts do not match the bucket");
    }
    if (p.bucket != ProbeBucket::Distractor) continue;
    const std::string g = normalize_condition(p.ground_truth);
    const std::string q = normalize_condition(p.prediction);
    if (text::contains(g, q) || text::contains(q, g)) {
      out.push_back(where + ": substring violation between '" + p.ground_truth + "' and '" + p.prediction + "'");
    }
    if (strip_acuity(g) == strip_acuity(q) && g != q) {
      out.push_back(where + ": names differ only by an acuity prefix");
    }
    if (strip_trailing_integer(g) == strip_trailing_integer(q) && g != q) {
      out.push_back(where + ": names differ only by a trailing integer");
    }
  }
  for (ProbeBucket b : {ProbeBucket::Synonym, ProbeBucket::Distractor, ProbeBucket::MultiPartial}) {
    const std::size_t n = sizes.count(b) ? sizes[b] : 0;
    if (n != bucket_size) {
      out.push_back("bucket " + std::string(to_string(b)) + " has " + std::to_string(n) + " pairs, expected " +
                    std::to_string(bucket_size));
    }
  }
  return out;
}

ProbeReport run_probe(const std::vector<ProbePair>& pairs, Judge& judge) {
  ProbeReport report;
  for (const auto& pair : pairs) {
    ProbeOutcome o;
    o.pair = pair;
    o.r_expected = diagnosis_reward(pair.expected);
    try {
      JudgeCounts c = judge.judge(pair.ground_truth, pair.prediction);
      o.correct = c.counts == pair.expected;
      try {
        o.r_hat = diagnosis_reward(c.counts);
      } catch (const InvalidCounts& e) {
        o.error = e.what();
        o.r_hat = 0.0;
      }
      o.counts = std::move(c);
    } catch (const std::exception& e) {
      o.error = e.what();
      o.correct = false;
      o.r_hat = 0.0;
    }
    auto& stats = report.buckets[pair.bucket];
    ++stats.n;
    if (o.correct) ++stats.correct;
    stats.mae += std::fabs(o.r_hat - o.r_expected);
    report.outcomes.push_back(std::move(o));
  }
  for (auto& [_, s] : report.buckets) {
    if (s.n == 0) continue;
    s.accuracy = static_cast<double>(s.correct) / static_cast<double>(s.n);
    s.mae /= static_cast<double>(s.n);
  }
  return report;
}

Json ProbeReport::to_json() const {
  Json b = Json::object();
  for (const auto& [bucket, s] : buckets) {
    b[std::string(to_string(bucket))] = {{"n", s.n}, {"correct", s.correct}, {"accuracy", s.accuracy}, {"mae", s.mae}};
  }
  Json audit = Json::array();
  for (const auto& o : outcomes) {
    Json e{{"pair", o.pair}, {"r_hat", o.r_hat}, {"r_expected", o.r_expected}, {"correct", o.correct}};
    e["counts"] = o.counts ? Json(*o.counts) : Json(nullptr);
    if (!o.error.empty()) e["error"] = o.error;
    audit.push_back(std::move(e));
  }
  return Json{{"buckets", b}, {"audit", audit}};
}

std::string ProbeReport::to_table() const {
  std::ostringstream os;
  os << "Bucket         n    Accuracy  MAE\n";
  for (const auto& [bucket, s] : buckets) {
    char line[128];
    std::snprintf(line, sizeof line, "%-13s %3zu   %6.1f%%   %.3f\n", std::string(to_string(bucket)).c_str(), s.n,
                  100.0 * s.accuracy, s.mae);
    os << line;
  }
  return os.str();
}

}  // namespace dxenv
