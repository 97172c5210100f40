#include "dxenv/text_util.hpp"

#include <algorithm>
#include <cctype>

namespace dxenv::text {
namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

bool boundary_before(std::string_view s, std::size_t pos) {
  return pos == 0 || !is_word_char(s[pos - 1]);
}

bool boundary_after(std::string_view s, std::size_t end) {
  return end >= s.size() || !is_word_char(s[end]);
}

std::size_t find_word(std::string_view lowered, std::string_view needle,
                      std::size_t from) {
  while (from <= lowered.size()) {
    const auto pos = lowered.find(needle, from);
    if (pos == std::string_view::npos) return pos;
    if (boundary_before(lowered, pos) &&
        boundary_after(lowered, pos + needle.size())) {
      return pos;
    }
    from = pos + 1;
  }
  return std::string_view::npos;
}

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

std::vector<std::string> split(std::string_view s, std::string_view sep) {
  std::vector<std::string> out;
  if (sep.empty()) {
    out.emplace_back(s);
    return out;
  }
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + sep.size();
  }
  return out;
}

std::string join(std::span<const std::string> parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

bool contains(std::string_view haystack, std::string_view needle) {
  return haystack.find(needle) != std::string_view::npos;
}

bool icontains(std::string_view haystack, std::string_view needle) {
  return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string current;
  for (char c : s) {
    if (is_word_char(c)) {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::optional<PhraseMatch> find_first_phrase(std::string_view text,
                                             std::span<const std::string> phrases) {
  const std::string lowered = to_lower(text);
  std::optional<PhraseMatch> best;
  for (const auto& phrase : phrases) {
    if (phrase.empty()) continue;
    const std::string needle = to_lower(phrase);
    const auto pos = find_word(lowered, needle, 0);
    if (pos == std::string::npos) continue;
    if (!best || pos < best->pos ||
        (pos == best->pos && needle.size() > best->length)) {
      best = PhraseMatch{pos, needle.size(), phrase};
    }
  }
  return best;
}

std::size_t replace_phrase(std::string& text, std::string_view phrase,
                           std::string_view replacement) {
  if (phrase.empty()) return 0;
  const std::string needle = to_lower(phrase);
  std::size_t count = 0;
  std::size_t from = 0;
  while (true) {
    const std::string lowered = to_lower(text);
    const auto pos = find_word(lowered, needle, from);
    if (pos == std::string::npos) break;
    const std::string original = text.substr(pos, needle.size());
    const std::string with_case = match_case(replacement, original);
    text.replace(pos, needle.size(), with_case);
    from = pos + with_case.size();
    ++count;
  }
  return count;
}

std::string match_case(std::string_view word, std::string_view like) {
  std::string out(word);
  if (out.empty() || like.empty()) return out;
  if (std::isupper(static_cast<unsigned char>(like.front()))) {
    out.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(out.front())));
  }
  return out;
}

}  // namespace dxenv::text
