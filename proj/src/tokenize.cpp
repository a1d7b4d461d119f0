#include "lsplit/tokenize.hpp"

#include <array>
#include <cctype>

namespace lsplit {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

constexpr std::string_view kLeading = "\"'`([{<$#";
constexpr std::string_view kTrailing = "\"')]}>,;:?!%";

bool ends_with_ci(std::string_view s, std::string_view suffix) {
  if (s.size() < suffix.size()) return false;
  for (std::size_t i = 0; i < suffix.size(); ++i) {
    const char a = static_cast<char>(std::tolower(static_cast<unsigned char>(s[s.size() - suffix.size() + i])));
    if (a != suffix[i]) return false;
  }
  return true;
}

// Appends the word, splitting off one contraction suffix if present.
void push_core(std::string_view core, std::vector<std::string>& out) {
  if (core.empty()) return;
  if (core.size() > 3 && ends_with_ci(core, "n't")) {
    out.emplace_back(core.substr(0, core.size() - 3));
    out.emplace_back(core.substr(core.size() - 3));
    return;
  }
  static constexpr std::array<std::string_view, 6> kSuffixes = {"'ll", "'re", "'ve", "'s", "'d", "'m"};
  for (auto suffix : kSuffixes) {
    if (core.size() > suffix.size() && ends_with_ci(core, suffix)) {
      out.emplace_back(core.substr(0, core.size() - suffix.size()));
      out.emplace_back(core.substr(core.size() - suffix.size()));
      return;
    }
  }
  out.emplace_back(core);
}

void tokenize_chunk(std::string_view chunk, bool last_chunk, std::vector<std::string>& out) {
  std::size_t begin = 0;
  while (begin < chunk.size() && kLeading.find(chunk[begin]) != std::string_view::npos) {
    out.emplace_back(1, chunk[begin]);
    ++begin;
  }
  std::string_view rest = chunk.substr(begin);
  std::vector<std::string> trailing;  // in reverse order
  for (;;) {
    if (rest.empty()) break;
    if (rest.size() >= 3 && rest.substr(rest.size() - 3) == "...") {
      trailing.emplace_back("...");
      rest.remove_suffix(3);
      continue;
    }
    const char c = rest.back();
    if (kTrailing.find(c) != std::string_view::npos) {
      trailing.emplace_back(1, c);
      rest.remove_suffix(1);
      continue;
    }
    if (c == '.') {
      const std::string_view stem = rest.substr(0, rest.size() - 1);
      if (last_chunk || stem.find('.') == std::string_view::npos) {
        trailing.emplace_back(".");
        rest.remove_suffix(1);
        continue;
      }
    }
    break;
  }
  push_core(rest, out);
  for (auto it = trailing.rbegin(); it != trailing.rend(); ++it) out.push_back(std::move(*it));
}

}  // namespace

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> tokenize(std::string_view text, const TokenizeOptions& opts) {
  std::vector<std::string_view> chunks;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) chunks.push_back(text.substr(i, j - i));
    i = j;
  }
  std::vector<std::string> out;
  for (std::size_t c = 0; c < chunks.size(); ++c) tokenize_chunk(chunks[c], c + 1 == chunks.size(), out);
  if (opts.lowercase) {
    for (auto& t : out) t = ascii_lower(t);
  }
  return out;
}

}  // namespace lsplit
