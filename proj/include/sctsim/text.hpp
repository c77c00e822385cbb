#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace sctsim::text {

/// Lowercased runs of letters, digits and apostrophes.
inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline bool is_stopword(std::string_view w) {
  static constexpr std::array<std::string_view, 64> kStop = {
      "a",     "about", "an",   "and",   "are",  "as",    "at",    "be",
      "been",  "but",   "by",   "can",   "could", "did",  "do",    "does",
      "for",   "from",  "had",  "has",   "have", "how",   "i",     "if",
      "in",    "into",  "is",   "it",    "its",  "me",    "more",  "my",
      "no",    "of",    "on",   "or",    "our",  "so",    "some",  "than",
      "that",  "the",   "their", "them", "then", "there", "these", "they",
      "this",  "those", "to",   "was",   "we",   "were",  "what",  "when",
      "which", "who",   "will", "with",  "would", "you",  "your",  "yours"};
  return std::find(kStop.begin(), kStop.end(), w) != kStop.end();
}

inline std::vector<std::string> content_tokens(std::string_view s) {
  auto toks = tokenize(s);
  std::erase_if(toks, [](const std::string& t) { return is_stopword(t); });
  return toks;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

/// Non-overlapping occurrences of `needle` in `hay`, matched at word starts.
inline int count_phrase(std::string_view hay, std::string_view needle) {
  if (needle.empty()) return 0;
  int n = 0;
  std::size_t pos = 0;
  while ((pos = hay.find(needle, pos)) != std::string_view::npos) {
    const bool word_start =
        pos == 0 || !std::isalnum(static_cast<unsigned char>(hay[pos - 1]));
    if (word_start) ++n;
    pos += needle.size();
  }
  return n;
}

/// Splits on sentence terminators; trims surrounding whitespace.
inline std::vector<std::string> sentences(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    const auto b = cur.find_first_not_of(" \t\r\n");
    if (b != std::string::npos) {
      const auto e = cur.find_last_not_of(" \t\r\n");
      out.push_back(cur.substr(b, e - b + 1));
    }
    cur.clear();
  };
  for (char c : s) {
    cur.push_back(c);
    if (c == '.' || c == '!' || c == '?' || c == '\n') flush();
  }
  flush();
  return out;
}

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

/// Fixed-precision decimal form.
inline std::string format_fixed(double v, int digits) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                 std::chars_format::fixed, digits);
  return std::string(buf.data(), ptr);
}

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

}  // namespace sctsim::text
