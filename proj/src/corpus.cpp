#include "dxenv/corpus.hpp"

#include <set>

#include <spdlog/spdlog.h>

namespace dxenv {

LoadResult<CaseProfile> load_cases(const std::filesystem::path& path, int min_distractors) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open case corpus " + path.string());

  LoadResult<CaseProfile> result;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  std::size_t nonblank = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++nonblank;
    CaseProfile profile;
    try {
      profile = Json::parse(line).get<CaseProfile>();
    } catch (const std::exception& e) {
      result.diagnostics.push_back({lineno, e.what()});
      continue;
    }
    auto violations = validate_case(profile, min_distractors);
    if (!ids.insert(profile.case_id).second) violations.push_back("case_id: duplicate '" + profile.case_id + "'");
    if (!violations.empty()) {
      std::string msg = "case " + profile.case_id + ":";
      for (const auto& v : violations) msg += " " + v + ";";
      msg.pop_back();
      result.diagnostics.push_back({lineno, msg});
      continue;
    }
    result.items.push_back(std::move(profile));
  }
  if (nonblank == 0) {
    spdlog::warn("case corpus {} is empty", path.string());
  } else if (result.items.empty()) {
    throw SchemaError("every line of " + path.string() + " failed; first error (line " +
                      std::to_string(result.diagnostics.front().line) + "): " + result.diagnostics.front().message);
  }
  for (const auto& d : result.diagnostics) spdlog::warn("{}:{}: {}", path.string(), d.line, d.message);
  return result;
}

ExamTaxonomy ExamTaxonomy::from_json(const Json& j) {
  ExamTaxonomy t;
  try {
    t.version = j.value("version", std::string("unversioned"));
    for (const auto& e : j.at("entries")) {
      TaxonomyEntry entry;
      entry.schema = e.at("schema").get<ToolSchema>();
      entry.category = e.value("category", std::string());
      const auto& s = entry.schema;
      if (s.cost_financial < 1 || s.cost_financial > 3 || s.cost_discomfort < 1 || s.cost_discomfort > 3) {
        throw SchemaError("taxonomy entry '" + s.name + "': tiers must lie in 1..3");
      }
      if (!t.entries.emplace(s.name, entry).second) throw SchemaError("taxonomy: duplicate exam '" + s.name + "'");
    }
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("taxonomy: ") + e.what());
  }
  return t;
}

ExamTaxonomy ExamTaxonomy::load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }

Json ExamTaxonomy::to_json() const {
  Json arr = Json::array();
  for (const auto& [_, e] : entries) arr.push_back({{"schema", e.schema}, {"category", e.category}});
  return Json{{"version", version}, {"entries", arr}};
}

TierTable ExamTaxonomy::tiers() const {
  std::map<std::string, CostTiers> m;
  for (const auto& [name, e] : entries) m[name] = CostTiers{e.schema.cost_financial, e.schema.cost_discomfort};
  return TierTable(std::move(m));
}

CaseProfile sample_distractors(const CaseProfile& profile, const ExamTaxonomy& taxonomy, int k, Rng& rng) {
  if (k < 0) throw std::invalid_argument("distractor count must be >= 0");
  std::vector<const TaxonomyEntry*> candidates;
  for (const auto& [name, e] : taxonomy.entries) {
    if (!profile.exam_map.count(name)) candidates.push_back(&e);
  }
  if (candidates.size() < static_cast<std::size_t>(k)) {
    throw InsufficientTaxonomy("case " + profile.case_id + ": need " + std::to_string(k) + " distractors, taxonomy has " +
                               std::to_string(candidates.size()));
  }

  CaseProfile out = profile;
  out.available_tools.clear();
  for (const auto& [name, _] : profile.exam_map) {
    if (const ToolSchema* t = profile.find_tool(name)) {
      out.available_tools.push_back(*t);
    } else if (auto it = taxonomy.entries.find(name); it != taxonomy.entries.end()) {
      out.available_tools.push_back(it->second.schema);
    } else {
      ToolSchema t;
      t.name = name;
      t.cost_financial = 3;
      t.cost_discomfort = 3;
      out.available_tools.push_back(t);
    }
  }
  for (std::size_t idx : rng.sample_without_replacement(candidates.size(), static_cast<std::size_t>(k))) {
    out.available_tools.push_back(candidates[idx]->schema);
  }
  rng.shuffle(out.available_tools);
  return out;
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path, bool truncate) : path_(path) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(path_, truncate ? std::ios::out | std::ios::trunc : std::ios::out | std::ios::app);
  if (!out_) throw IoError("cannot open " + path_.string() + " for writing");
}

void JsonlWriter::write(const Json& record) {
  std::string line = record.dump();
  line += '\n';
  std::lock_guard lock(mu_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
  if (!out_) throw IoError("write failed on " + path_.string());
  ++written_;
}

std::size_t JsonlWriter::written() const {
  std::lock_guard lock(mu_);
  return written_;
}

void store_transcripts(const std::filesystem::path& path, const std::vector<Transcript>& transcripts, bool append) {
  JsonlWriter w(path, !append);
  for (const auto& t : transcripts) w.write(t);
}

LoadResult<Transcript> load_transcripts(const std::filesystem::path& path) {
  return load_jsonl<Transcript>(path, [](const Json& j) { return j.get<Transcript>(); });
}

void store_scores(const std::filesystem::path& path, const std::vector<EpisodeScore>& scores, bool append) {
  JsonlWriter w(path, !append);
  for (const auto& s : scores) w.write(s);
}

LoadResult<EpisodeScore> load_scores(const std::filesystem::path& path) {
  return load_jsonl<EpisodeScore>(path, [](const Json& j) { return j.get<EpisodeScore>(); });
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::out | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json_atomic(const std::filesystem::path& path, const Json& value) {
  write_text_atomic(path, value.dump(2) + "\n");
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    Json j;
    in >> j;
    return j;
  } catch (const Json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace dxenv
