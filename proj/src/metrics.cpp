#include "shardpipe/metrics.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <array>
#include <map>

namespace shardpipe {

namespace {

bool is_article(std::string_view t) { return t == "a" || t == "an" || t == "the"; }

bool is_separator(UChar32 c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f' || u_isUWhiteSpace(c);
}

bool is_punct(UChar32 c) {
  if (c < 0x80) return c > 0x20 && c < 0x7f && !(c >= '0' && c <= '9') && !(c >= 'A' && c <= 'Z') && !(c >= 'a' && c <= 'z');
  return u_ispunct(c);
}

void append_utf8(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool err = false;
  U8_APPEND(reinterpret_cast<uint8_t*>(buf), len, U8_MAX_LENGTH, c, err);
  if (!err) out.append(buf, static_cast<std::size_t>(len));
}

std::map<std::string, std::size_t> counts(const std::vector<std::string>& tokens) {
  std::map<std::string, std::size_t> m;
  for (const auto& t : tokens) ++m[t];
  return m;
}

}  // namespace

std::vector<std::string> normalize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && !is_article(cur)) tokens.push_back(cur);
    cur.clear();
  };
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto n = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < n) {
    UChar32 c;
    U8_NEXT(s, i, n, c);
    if (c < 0) c = 0xfffd;
    if (is_separator(c)) {
      flush();
      continue;
    }
    if (is_punct(c)) continue;
    // tolower handles U+0130 (dotted capital I) which simple folding leaves alone
    append_utf8(cur, u_foldCase(u_tolower(c), U_FOLD_CASE_DEFAULT));
  }
  flush();
  return tokens;
}

F1Score token_f1(std::string_view pred, std::string_view gold) {
  auto p = normalize(pred);
  auto g = normalize(gold);
  if (p.empty() || g.empty()) return {};
  auto pc = counts(p);
  auto gc = counts(g);
  std::size_t overlap = 0;
  for (const auto& [tok, c] : pc) {
    if (auto it = gc.find(tok); it != gc.end()) overlap += std::min(c, it->second);
  }
  if (overlap == 0) return {};
  F1Score s;
  s.precision = static_cast<double>(overlap) / static_cast<double>(p.size());
  s.recall = static_cast<double>(overlap) / static_cast<double>(g.size());
  // 2pr/(p+r) rewritten over integers; exact and symmetric
  s.f1 = 2.0 * static_cast<double>(overlap) / static_cast<double>(p.size() + g.size());
  return s;
}

double best_f1(std::string_view pred, std::span<const std::string> refs) {
  if (refs.empty()) throw EmptyReferenceSet();
  double best = 0;
  for (const auto& r : refs) best = std::max(best, token_f1(pred, r).f1);
  return best;
}

int exact_match(std::string_view pred, std::span<const std::string> refs) {
  if (refs.empty()) throw EmptyReferenceSet();
  auto p = normalize(pred);
  for (const auto& r : refs) {
    if (normalize(r) == p) return 1;
  }
  return 0;
}

namespace {

enum class Block { Think, ToolCall, ToolResponse, Answer };

constexpr std::array<std::string_view, 4> kNames{"think", "tool_call", "tool_response", "answer"};

bool ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

bool contains_any_tag(std::string_view body) {
  for (auto name : kNames) {
    if (body.find("<" + std::string(name) + ">") != std::string_view::npos) return true;
    if (body.find("</" + std::string(name) + ">") != std::string_view::npos) return true;
  }
  return false;
}

}  // namespace

int format_gate(std::string_view t) {
  std::size_t pos = 0;
  // what may come next
  std::vector<Block> expect{Block::Think};
  for (;;) {
    while (pos < t.size() && ascii_space(t[pos])) ++pos;
    if (pos == t.size()) return 0;  // ended without an answer
    bool matched = false;
    for (Block b : expect) {
      std::string open = "<" + std::string(kNames[static_cast<int>(b)]) + ">";
      if (t.compare(pos, open.size(), open) != 0) continue;
      std::string close = "</" + std::string(kNames[static_cast<int>(b)]) + ">";
      auto body_start = pos + open.size();
      auto end = t.find(close, body_start);
      if (end == std::string_view::npos) return 0;
      if (contains_any_tag(t.substr(body_start, end - body_start))) return 0;
      pos = end + close.size();
      matched = true;
      switch (b) {
        case Block::Think: expect = {Block::ToolCall, Block::Answer}; break;
        case Block::ToolCall: expect = {Block::ToolResponse}; break;
        case Block::ToolResponse: expect = {Block::Think}; break;
        case Block::Answer:
          while (pos < t.size() && ascii_space(t[pos])) ++pos;
          return pos == t.size() ? 1 : 0;
      }
      break;
    }
    if (!matched) return 0;
  }
}

std::optional<std::string> extract_last_answer(std::string_view t) {
  auto open = t.rfind("<answer>");
  if (open == std::string_view::npos) return std::nullopt;
  auto start = open + 8;
  auto close = t.find("</answer>", start);
  if (close == std::string_view::npos) return std::nullopt;
  return std::string(t.substr(start, close - start));
}

double reward(std::string_view trajectory, std::span<const std::string> refs) {
  if (refs.empty()) throw EmptyReferenceSet();
  if (!format_gate(trajectory)) return 0.0;
  auto answer = extract_last_answer(trajectory);
  if (!answer) return 0.0;
  return best_f1(*answer, refs);
}

}  // namespace shardpipe
