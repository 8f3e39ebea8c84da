#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <random>
#include <sstream>

#include "generators.hpp"
#include "shardpipe/metrics.hpp"

using namespace shardpipe;

namespace {

using Tokens = std::vector<std::string>;

const std::string kTrajectory =
    "<think>I need the head office of the hotel group.</think>\n"
    "<tool_call>\n{\"name\": \"shell\", \"arguments\": {\"command\": \"rg -F 'Oberoi Group' corpus.jsonl | head -n 3\"}}\n"
    "</tool_call>\n"
    "<tool_response>\n{\"id\": \"1\", \"contents\": \"The Oberoi Group is headquartered in Delhi.\"}\n</tool_response>\n"
    "<think>The result names Delhi.</think>\n"
    "<answer>\nDelhi\n</answer>\n";

std::string with_answer(const std::string& a) {
  return "<think>reasoning</think><tool_call>{}</tool_call><tool_response>x</tool_response><think>done</think><answer>" +
         a + "</answer>";
}

// ASCII-only reference normalizer for the random property checks
Tokens ascii_normalize(const std::string& s) {
  std::string cleaned;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      cleaned.push_back(' ');
    } else if (std::isalnum(c)) {
      cleaned.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  std::istringstream in(cleaned);
  Tokens out;
  for (std::string w; in >> w;) {
    if (w != "a" && w != "an" && w != "the") out.push_back(w);
  }
  return out;
}

double oracle_f1(const std::string& a, const std::string& b) {
  Tokens p = ascii_normalize(a), g = ascii_normalize(b);
  if (p.empty() || g.empty()) return 0;
  std::map<std::string, int> pc, gc;
  for (auto& t : p) ++pc[t];
  for (auto& t : g) ++gc[t];
  int o = 0;
  for (auto& [t, c] : pc) o += std::min(c, gc[t]);
  if (o == 0) return 0;
  double pr = static_cast<double>(o) / p.size(), rc = static_cast<double>(o) / g.size();
  return 2 * pr * rc / (pr + rc);
}

}  // namespace

TEST_CASE("normalize") {
  CHECK(normalize("The Oberoi Group.") == Tokens{"oberoi", "group"});
  CHECK(normalize("the").empty());
  CHECK(normalize("Rockstar San Diego") == Tokens{"rockstar", "san", "diego"});
  CHECK(normalize("The.") == Tokens{});
  CHECK(normalize("multi-hop QA") == Tokens{"multihop", "qa"});
  CHECK(normalize("İstanbul") == normalize("Istanbul"));
  CHECK(normalize("ÉCOLE «normale»") == Tokens{"école", "normale"});
  CHECK(normalize("a b　c") == Tokens{"b", "c"});
  CHECK(normalize("Straße") == Tokens{"straße"});
}

TEST_CASE("token_f1") {
  CHECK(token_f1("picric acid", "picric acid").f1 == 1.0);
  auto r = token_f1("Rockstar Games", "Rockstar San Diego");
  CHECK(r.precision == 0.5);
  CHECK(r.recall == doctest::Approx(1.0 / 3));
  CHECK(r.f1 == 0.4);
  CHECK(token_f1("the", "the").f1 == 0.0);
  CHECK(token_f1("", "x").f1 == 0.0);
  CHECK(token_f1("x y", "z").f1 == 0.0);
  CHECK(token_f1("a a b", "a b b").f1 == doctest::Approx(2.0 / 3));
}

TEST_CASE("best_f1 and exact_match") {
  std::vector<std::string> istanbul{"Istanbul", "İstanbul"};
  CHECK(best_f1("Istanbul", istanbul) == 1.0);
  std::vector<std::string> unrelated{"Paris", "Rome"};
  CHECK(best_f1("Berlin", unrelated) == 0.0);
  std::vector<std::string> one{"Rockstar San Diego"};
  CHECK(best_f1("Rockstar Games", one) == token_f1("Rockstar Games", "Rockstar San Diego").f1);
  CHECK_THROWS_AS(best_f1("x", std::vector<std::string>{}), EmptyReferenceSet);

  std::vector<std::string> oberoi{"Oberoi Group"};
  CHECK(exact_match("the Oberoi Group", oberoi) == 1);
  CHECK(exact_match("Rockstar Games", one) == 0);
  std::vector<std::string> acid{"picric acid"};
  CHECK(exact_match("PICRIC ACID.", acid) == 1);
  CHECK(exact_match("An apple", std::vector<std::string>{"apple"}) == 1);
  CHECK_THROWS_AS(exact_match("x", std::vector<std::string>{}), EmptyReferenceSet);
}

TEST_CASE("format_gate") {
  CHECK(format_gate(kTrajectory) == 1);
  CHECK(format_gate("<think>t</think><answer>x</answer>") == 1);
  CHECK(format_gate("  <think>t</think>\n<answer>x</answer>\n\n") == 1);
  CHECK(format_gate("<think>t</think><answer>x") == 0);
  CHECK(format_gate("<think>t</think><tool_call><think>x</think></tool_call>") == 0);
  CHECK(format_gate("<think>t</think><tool_call>c</tool_call><tool_response>r</tool_response><think>u</think>") == 0);
  CHECK(format_gate("<answer>x</answer>") == 0);
  CHECK(format_gate("<think>t</think>stray<answer>x</answer>") == 0);
  CHECK(format_gate("<think>t</think><answer>x</answer>trailing") == 0);
  CHECK(format_gate("<think>t</think><answer>x</answer><answer>y</answer>") == 0);
  CHECK(format_gate("<think>t</think><tool_call>c</tool_call><think>u</think><answer>x</answer>") == 0);
  CHECK(format_gate("<think>t<think>u</think></think><answer>x</answer>") == 0);
  CHECK(format_gate("") == 0);
}

TEST_CASE("extract_last_answer") {
  CHECK(extract_last_answer(kTrajectory) == std::optional<std::string>("\nDelhi\n"));
  CHECK(extract_last_answer("<answer>a</answer><answer>b</answer>") == std::optional<std::string>("b"));
  CHECK_FALSE(extract_last_answer("<think>t</think>"));
}

TEST_CASE("reward") {
  std::vector<std::string> delhi{"Delhi"};
  CHECK(reward(kTrajectory, delhi) == 1.0);
  std::string broken = kTrajectory.substr(0, kTrajectory.size() - 10);
  CHECK(reward(broken, delhi) == 0.0);
  std::vector<std::string> rockstar{"Rockstar San Diego"};
  CHECK(reward(with_answer("Rockstar Games"), rockstar) == 0.4);
  CHECK_THROWS_AS(reward(kTrajectory, std::vector<std::string>{}), EmptyReferenceSet);
}

TEST_CASE("metric properties on random pairs") {
  std::mt19937 rng(31);
  for (int i = 0; i < 2000; ++i) {
    std::string a = testutil::random_answer(rng), b = testutil::random_answer(rng), c = testutil::random_answer(rng);
    CAPTURE(a);
    CAPTURE(b);
    auto s = token_f1(a, b);
    CHECK(s.f1 >= 0.0);
    CHECK(s.f1 <= 1.0);
    CHECK(s.precision <= 1.0);
    CHECK(s.recall <= 1.0);
    CHECK(s.f1 == token_f1(b, a).f1);
    CHECK(s.f1 == doctest::Approx(oracle_f1(a, b)).epsilon(1e-12));
    CHECK(normalize(a) == ascii_normalize(a));

    Tokens n = normalize(a);
    std::string joined;
    for (auto& t : n) joined += t + " ";
    CHECK(normalize(joined) == n);

    std::vector<std::string> refs{b};
    double before = best_f1(a, refs);
    refs.push_back(c);
    CHECK(best_f1(a, refs) >= before);

    CHECK(reward("<think>x</think>" + with_answer(a), refs) == 0.0);
    double r = reward(with_answer(a), refs);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
  }
}
