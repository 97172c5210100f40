#pragma once

// Data files in and out: case corpora, the exam taxonomy, distractor
// sampling, and append-only JSONL stores for transcripts and scores.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "dxenv/core_model.hpp"
#include "dxenv/metrics.hpp"
#include "dxenv/reward.hpp"
#include "dxenv/rng.hpp"

namespace dxenv {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientTaxonomy : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadDiagnostic {
  std::size_t line = 0;  // 1-based
  std::string message;
};

template <typename T>
struct LoadResult {
  std::vector<T> items;
  std::vector<LoadDiagnostic> diagnostics;
};

/// One CaseProfile per line. Lines that fail to parse or validate become
/// diagnostics; throws SchemaError only when every non-blank line fails.
LoadResult<CaseProfile> load_cases(const std::filesystem::path& path, int min_distractors = 0);

struct TaxonomyEntry {
  ToolSchema schema;
  std::string category;
};

struct ExamTaxonomy {
  std::string version;
  std::map<std::string, TaxonomyEntry> entries;

  static ExamTaxonomy load(const std::filesystem::path& path);
  static ExamTaxonomy from_json(const Json& j);
  Json to_json() const;
  TierTable tiers() const;
};

inline constexpr int kDefaultDistractors = 5;

/// Rebuilds available_tools as the ground-truth exams plus k distinct
/// taxonomy entries outside the exam map, in shuffled order. Throws
/// InsufficientTaxonomy when fewer than k such entries exist.
CaseProfile sample_distractors(const CaseProfile& profile, const ExamTaxonomy& taxonomy, int k, Rng& rng);

/// Thread-safe append-only JSONL file. Each record is written as one
/// complete line under a lock and flushed.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path, bool truncate = false);
  void write(const Json& record);
  std::size_t written() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::ofstream out_;
  std::size_t written_ = 0;
};

/// Reads a JSONL file, decoding each line with `decode`. Bad lines become
/// diagnostics.
template <typename T, typename Decode>
LoadResult<T> load_jsonl(const std::filesystem::path& path, Decode decode) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  LoadResult<T> result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      result.items.push_back(decode(Json::parse(line)));
    } catch (const std::exception& e) {
      result.diagnostics.push_back({lineno, e.what()});
    }
  }
  return result;
}

void store_transcripts(const std::filesystem::path& path, const std::vector<Transcript>& transcripts,
                       bool append = true);
LoadResult<Transcript> load_transcripts(const std::filesystem::path& path);

void store_scores(const std::filesystem::path& path, const std::vector<EpisodeScore>& scores, bool append = true);
LoadResult<EpisodeScore> load_scores(const std::filesystem::path& path);

/// Writes to a sibling temp file then renames over `path`.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);
void write_json_atomic(const std::filesystem::path& path, const Json& value);

Json read_json_file(const std::filesystem::path& path);

}  // namespace dxenv
