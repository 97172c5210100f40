#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dxenv::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Splits on every occurrence of `sep`. Empty pieces are kept.
std::vector<std::string> split(std::string_view s, std::string_view sep);
std::string join(std::span<const std::string> parts, std::string_view sep);

bool contains(std::string_view haystack, std::string_view needle);
bool icontains(std::string_view haystack, std::string_view needle);

/// Lowercase alphanumeric word tokens ("Chest-pain, 3 days" -> chest, pain, 3, days).
std::vector<std::string> words(std::string_view s);

struct PhraseMatch {
  std::size_t pos = 0;
  std::size_t length = 0;
  std::string phrase;  // the key that matched, as stored in the table
};

/// Earliest case-insensitive whole-word occurrence of any of `phrases` in
/// `text`. Ties on position go to the longest phrase.
std::optional<PhraseMatch> find_first_phrase(std::string_view text,
                                             std::span<const std::string> phrases);

/// Replaces every case-insensitive whole-word occurrence of `phrase`.
/// Returns the number of replacements.
std::size_t replace_phrase(std::string& text, std::string_view phrase,
                           std::string_view replacement);

/// Copies the capitalization of the first character of `like` onto `word`.
std::string match_case(std::string_view word, std::string_view like);

}  // namespace dxenv::text
