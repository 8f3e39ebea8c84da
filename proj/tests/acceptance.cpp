// Acceptance run: one [PASS]/[FAIL]/[SKIP] line per criterion, exit 1 on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "classification_table.hpp"
#include "generators.hpp"
#include "shardpipe/classifier.hpp"
#include "shardpipe/daemon.hpp"
#include "shardpipe/digest.hpp"
#include "shardpipe/engine.hpp"
#include "shardpipe/harness.hpp"
#include "shardpipe/metrics.hpp"
#include "shardpipe/pipeline.hpp"
#include "shardpipe/protocol.hpp"
#include "shardpipe/sharder.hpp"
#include "test_util.hpp"

using namespace shardpipe;
using nlohmann::json;
using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 2) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(digits);
  ss << v;
  return ss.str();
}

std::vector<std::string> split_lines(const std::string& bytes) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < bytes.size()) {
    auto nl = bytes.find('\n', start);
    if (nl == std::string::npos) nl = bytes.size();
    lines.push_back(bytes.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

// ---- 1: fuzz-diff equivalence

Outcome equivalence() {
  TempDir tmp;
  FuzzOptions opts;
  opts.seed = 1;
  opts.pipelines = 500;
  opts.lines = 100'000;
  opts.shard_counts = {1, 2, 3, 4, 8};
  opts.work_dir = tmp.path();
  FuzzReport r = fuzz_session(opts);

  std::ostringstream d;
  d << r.passed << "/" << r.total << " pipelines, " << r.parallel_runs << " sharded runs, " << fmt(r.seconds, 1)
    << " s;";
  bool classes_ok = true;
  for (const char* k : {"Concat", "Head", "Count", "SortHead", "Sequential"}) {
    std::size_t n = r.histogram.count(k) ? r.histogram.at(k) : 0;
    d << " " << k << "=" << n;
    if (n < 20) classes_ok = false;
  }
  for (const auto& f : r.failures) d << "\n    failing: " << f.command;
  return {r.ok() && classes_ok && r.total == 500 ? Status::Pass : Status::Fail, d.str()};
}

// ---- 2: classification table

Outcome classification() {
  const auto& table = testutil::classification_table();
  std::size_t ok = 0;
  std::string misses;
  for (const auto& row : table) {
    std::string got;
    try {
      got = describe(classify(parse_pipeline(row.command)));
    } catch (const ParseError& e) {
      got = "Rejected:" + std::string(to_string(e.code()));
    }
    if (got == row.expected) {
      ++ok;
    } else {
      misses += "\n    " + row.command + " -> " + got + " (want " + row.expected + ")";
    }
  }
  bool pass = table.size() >= 30 && ok == table.size();
  return {pass ? Status::Pass : Status::Fail, std::to_string(ok) + "/" + std::to_string(table.size()) + " rows" + misses};
}

// ---- 3: SortHead counterexample

Outcome counterexample() {
  Counterexample c = sorthead_counterexample();

  // oracle: drop lines containing z, sort, unique, first two
  std::vector<std::string> kept;
  for (auto& l : split_lines(c.corpus)) {
    if (l.find('z') == std::string::npos) kept.push_back(l);
  }
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  std::string oracle;
  for (std::size_t i = 0; i < 2 && i < kept.size(); ++i) oracle += kept[i] + "\n";

  TempDir tmp;
  testutil::write_file(tmp / "corpus.jsonl", c.corpus);
  ExecEnv buggy;
  buggy.sorthead_local_uniq = false;
  DiffRunner bad(tmp / "corpus.jsonl", tmp / "bad", {c.shard_count}, buggy);
  DiffRunner good(tmp / "corpus.jsonl", tmp / "good", {c.shard_count});
  Verdict vb = bad.diff_run(c.command);
  Verdict vg = good.diff_run(c.command);

  auto show = [](std::string s) {
    for (std::size_t p; (p = s.find('\n')) != std::string::npos;) s.replace(p, 1, "\\n");
    return s;
  };
  // a passing case keeps no copy of its output: it equals the sequential one
  auto out_of = [](const Verdict& v) {
    if (v.cases.empty()) return std::string("<none>");
    return v.cases[0].pass ? v.sequential_out : v.cases[0].parallel_out;
  };
  const std::string bad_out = out_of(vb);
  const std::string good_out = out_of(vg);
  bool pass = oracle == c.expected && vb.sequential_out == oracle && !vb.pass && bad_out != oracle && vg.pass &&
              good_out == oracle && !vg.cases.empty() && vg.cases[0].ran_parallel;
  return {pass ? Status::Pass : Status::Fail, "oracle \"" + show(oracle) + "\", without local uniq \"" +
                                                   show(bad_out) + "\" (" + (vb.pass ? "PASS" : "FAIL") +
                                                   "), shipped \"" + show(good_out) + "\" (" +
                                                   (vg.pass ? "PASS" : "FAIL") + ")"};
}

// ---- 4: Count linearity

struct Filter {
  std::string command;
  std::function<bool(const std::string&)> keep;
};

std::string ascii_lower(std::string s) {
  for (auto& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

Outcome count_linearity() {
  TempDir tmp;
  const fs::path corpus = tmp / "corpus.jsonl";
  gen_corpus(corpus, 404, 30'000);
  const std::string bytes = testutil::read_file(corpus);
  const std::vector<std::string> lines = split_lines(bytes);

  std::vector<std::string> patterns;
  for (const auto& p : planted_phrases()) {
    if (std::all_of(p.begin(), p.end(), [](unsigned char ch) { return ch < 0x80; })) patterns.push_back(p);
  }
  for (const char* w : {"acid", "the", "Group", "river", "1998", "city", "Games", "born", "of", "zzqx"}) {
    patterns.emplace_back(w);
  }

  const std::string T = default_search_tool();
  auto q = [](const std::string& s) { return "\"" + s + "\""; };
  std::mt19937 rng(77);
  auto pick = [&] { return patterns[rng() % patterns.size()]; };

  std::vector<Filter> filters;
  while (filters.size() < 50) {
    std::string a = pick(), b = pick();
    switch (filters.size() % 5) {
      case 0:
        filters.push_back({T + " -F " + q(a) + " corpus.jsonl | wc -l",
                           [a](const std::string& l) { return l.find(a) != std::string::npos; }});
        break;
      case 1:
        filters.push_back({T + " -v -F " + q(a) + " corpus.jsonl | wc -l",
                           [a](const std::string& l) { return l.find(a) == std::string::npos; }});
        break;
      case 2:
        filters.push_back({T + " -i -F " + q(a) + " corpus.jsonl | wc -l", [a](const std::string& l) {
                             return ascii_lower(l).find(ascii_lower(a)) != std::string::npos;
                           }});
        break;
      case 3:
        filters.push_back({T + " -F " + q(a) + " corpus.jsonl | " + T + " -F " + q(b) + " | wc -l",
                           [a, b](const std::string& l) {
                             return l.find(a) != std::string::npos && l.find(b) != std::string::npos;
                           }});
        break;
      default:
        filters.push_back({T + " -F " + q(a) + " corpus.jsonl | " + T + " -v -F " + q(b) + " | wc -l",
                           [a, b](const std::string& l) {
                             return l.find(a) != std::string::npos && l.find(b) == std::string::npos;
                           }});
    }
  }

  const std::vector<std::size_t> counts{1, 2, 3, 4, 8};
  std::vector<Engine> engines;
  for (auto s : counts) engines.emplace_back(corpus, shard(corpus, s, tmp / ("s" + std::to_string(s))));

  std::size_t ok = 0;
  std::string misses;
  for (const auto& f : filters) {
    std::size_t expect = static_cast<std::size_t>(std::count_if(lines.begin(), lines.end(), f.keep));
    bool good = true;
    std::string seen;
    for (std::size_t i = 0; i < engines.size(); ++i) {
      ExecOutcome o = engines[i].run(f.command);
      if (o.telemetry.strategy.kind != StrategyKind::Count || !o.telemetry.ran_parallel()) good = false;
      std::string text = o.out;
      while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.pop_back();
      if (text != std::to_string(expect)) good = false;
      seen += " S=" + std::to_string(counts[i]) + ":" + text;
    }
    if (good) {
      ++ok;
    } else {
      misses += "\n    " + f.command + " oracle " + std::to_string(expect) + " got" + seen;
    }
  }
  return {ok == filters.size() ? Status::Pass : Status::Fail,
          std::to_string(ok) + "/" + std::to_string(filters.size()) + " filters equal the line-count oracle at S=1,2,3,4,8" +
              misses};
}

// ---- 5: scaling

Outcome scaling() {
  unsigned hw = std::thread::hardware_concurrency();
  const char* force = std::getenv("SHARDPIPE_ACCEPT_FORCE_SCALING");
  bool forced = force != nullptr && std::string(force) == "1";
  if (hw < 8 && !forced) {
    return {Status::Skip, "needs >= 8 hardware threads, this host has " + std::to_string(hw) +
                              " (SHARDPIPE_ACCEPT_FORCE_SCALING=1 runs it anyway)"};
  }
  TempDir tmp;
  const fs::path corpus = tmp / "corpus.jsonl";
  std::size_t lines = 1'000'000'000ull / 96 + 1;
  if (const char* l = std::getenv("SHARDPIPE_ACCEPT_SCALING_LINES")) lines = std::stoull(l);
  gen_corpus(corpus, 5, lines);

  const std::string cmd = default_search_tool() + " -F \"picric acid\" corpus.jsonl | wc -l";
  std::vector<std::pair<std::size_t, double>> medians;
  for (std::size_t s : {1, 2, 4, 8}) {
    ShardSet set = shard(corpus, s, tmp / ("s" + std::to_string(s)));
    warm(set);
    Engine engine(corpus, set);
    engine.run(cmd);
    std::vector<double> ms;
    for (int rep = 0; rep < 5; ++rep) {
      auto t0 = Clock::now();
      engine.run(cmd);
      ms.push_back(seconds_since(t0) * 1000);
    }
    std::sort(ms.begin(), ms.end());
    medians.emplace_back(s, ms[ms.size() / 2]);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < medians.size(); ++i) {
    if (medians[i].second > medians[i - 1].second * 1.10) monotone = false;
  }
  double ratio = medians.back().second / medians.front().second;
  std::ostringstream d;
  d << fs::file_size(corpus) / (1u << 20) << " MiB, hw=" << hw << ", median ms";
  for (auto& [s, m] : medians) d << " S=" << s << ":" << fmt(m, 1);
  d << ", t(8)/t(1)=" << fmt(ratio, 3);
  return {ratio <= 0.6 && monotone ? Status::Pass : Status::Fail, d.str()};
}

// ---- 6: daemon

Outcome daemon_round_trips() {
  auto t0 = Clock::now();
  TempDir tmp;
  const fs::path corpus = tmp / "corpus.jsonl";
  gen_corpus(corpus, 606, 20'000);
  Engine engine(corpus, shard(corpus, 4, tmp / "s"));
  Server server(engine, {tmp / "d.sock", std::nullopt});
  server.start();
  std::thread serving([&] { server.serve(); });

  PipelineGrammar grammar;
  std::size_t same = 0, truncated = 0;
  std::string first_diff;
  {
    Client client(tmp / "d.sock");
    for (std::uint64_t i = 0; i < 1000; ++i) {
      RequestFrame req;
      req.command = grammar.draw(9000 + i).command;
      if (i % 4 == 1) req.max_output_tokens = 1 + i % 40;
      ResponseFrame got = client.request(req);
      ResponseFrame want = handle_request(engine, req);
      if (got.stdout_bytes == want.stdout_bytes && got.exit_code == want.exit_code &&
          got.truncated == want.truncated && got.stderr_text == want.stderr_text) {
        ++same;
      } else if (first_diff.empty()) {
        first_diff = "\n    first mismatch: " + req.command;
      }
      if (got.truncated) ++truncated;
    }
  }
  server.stop();
  serving.join();
  double served_s = seconds_since(t0);

  std::mt19937 rng(6);
  std::size_t frames_ok = 0;
  for (int i = 0; i < 10'000; ++i) {
    json j = testutil::random_json(rng);
    try {
      if (decode_frame(encode_frame(j)) == j) ++frames_ok;
    } catch (const std::exception&) {
    }
  }
  double total_s = seconds_since(t0);
  bool pass = same == 1000 && frames_ok == 10'000 && total_s <= 120 && server.requests_handled() == 1000;
  return {pass ? Status::Pass : Status::Fail,
          std::to_string(same) + "/1000 responses identical to in-process (" + std::to_string(truncated) +
              " truncated), " + std::to_string(frames_ok) + "/10000 frame round trips, " + fmt(served_s, 1) +
              " s serving, " + fmt(total_s, 1) + " s total" + first_diff};
}

// ---- 7: metrics

Outcome metrics() {
  std::vector<std::string> fails;
  const double exact = token_f1("Rockstar Games", "Rockstar San Diego").f1;
  if (exact != 0.4) fails.push_back("F1(Rockstar Games, Rockstar San Diego) = " + fmt(exact, 17));

  const std::vector<std::pair<std::string, std::string>> em_cases{
      {"The Eiffel Tower", "Eiffel Tower"}, {"an apple", "Apple"}, {"A. Lincoln!", "lincoln"}, {"the the", ""}};
  for (const auto& [p, g] : em_cases) {
    std::vector<std::string> refs{g};
    if (exact_match(p, refs) != 1) fails.push_back("EM(" + p + ", " + g + ") != 1");
  }
  {
    std::vector<std::string> refs{"Eiffel Tower"};
    if (exact_match("Eiffel Towers", refs) != 0) fails.push_back("EM(Eiffel Towers) != 0");
  }

  std::mt19937 rng(7);
  std::size_t bad = 0;
  for (int i = 0; i < 10'000; ++i) {
    std::string a = testutil::random_answer(rng), b = testutil::random_answer(rng), c = testutil::random_answer(rng);
    F1Score ab = token_f1(a, b), ba = token_f1(b, a);
    bool ok = ab.f1 >= 0 && ab.f1 <= 1 && ab.precision >= 0 && ab.precision <= 1 && ab.recall >= 0 &&
              ab.recall <= 1 && ab.f1 == ba.f1;
    std::vector<std::string> one{b}, two{b, c};
    ok = ok && best_f1(a, two) >= best_f1(a, one) && exact_match(a, two) >= exact_match(a, one);
    // nothing outside <answer> or a broken tag order scores zero
    std::string good = "<think>x</think>\n<answer>" + a + "</answer>";
    std::string broken = "<answer>" + a + "</answer>";
    std::string unclosed = "<think>x</think><tool_call>" + a + "</tool_call><answer>" + a + "</answer>";
    ok = ok && reward(broken, one) == 0 && reward(unclosed, one) == 0;
    ok = ok && reward(good, one) == best_f1(a, one);
    if (!ok) ++bad;
  }
  if (bad) fails.push_back(std::to_string(bad) + " random pairs broke an invariant");

  std::string d = "F1 = " + fmt(exact, 17) + ", EM article cases ok, 10000 random pairs";
  for (const auto& f : fails) d += "\n    " + f;
  return {fails.empty() ? Status::Pass : Status::Fail, d};
}

// ---- 8: sharder

Outcome sharder() {
  std::mt19937 rng(8);
  TempDir tmp;
  std::size_t corpora = 0, checks = 0, ok = 0;
  std::string first;
  for (int i = 0; i < 100; ++i) {
    std::string bytes;
    std::size_t n = i == 0 ? 0 : rng() % (i % 10 == 0 ? 3 : 200);
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t len = rng() % 40;
      for (std::size_t c = 0; c < len; ++c) bytes.push_back(static_cast<char>(' ' + rng() % 95));
      bytes.push_back('\n');
    }
    if (i % 3 == 1 && !bytes.empty()) bytes.pop_back();  // no trailing newline
    const fs::path corpus = tmp / ("c" + std::to_string(i) + ".jsonl");
    testutil::write_file(corpus, bytes);
    ++corpora;
    for (std::size_t s : {1, 2, 3, 5, 8}) {
      ++checks;
      ShardSet set = shard(corpus, s, tmp / ("s" + std::to_string(i) + "_" + std::to_string(s)));
      Sha256 h;
      std::uint64_t lines = 0;
      for (std::size_t k = 0; k < set.count(); ++k) {
        std::string part = testutil::read_file(set.shard_dir / shard_file_name(k, set.count()));
        lines += set.shards[k].lines;
        h.update(part);
      }
      bool good = h.hex() == sha256_hex(bytes) && set.corpus_digest == sha256_hex(bytes) && set.count() == s &&
                  lines == count_lines(bytes) && verify(set);
      if (good) {
        ++ok;
      } else if (first.empty()) {
        first = "\n    first mismatch: corpus " + std::to_string(i) + " S=" + std::to_string(s);
      }
    }
  }
  return {ok == checks ? Status::Pass : Status::Fail, std::to_string(ok) + "/" + std::to_string(checks) +
                                                          " (corpus, S) pairs reassemble to the corpus digest over " +
                                                          std::to_string(corpora) + " corpora" + first};
}

}  // namespace

// Arguments, if any, pick criteria by number: `shardpipe_acceptance 3 5`.
int main(int argc, char** argv) {
  std::vector<std::string> only(argv + 1, argv + argc);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 byte-exact equivalence (fuzz-diff)", equivalence},
      {"2 classification table", classification},
      {"3 SortHead counterexample", counterexample},
      {"4 Count linearity", count_linearity},
      {"5 scaling", scaling},
      {"6 daemon round trips", daemon_round_trips},
      {"7 QA metrics", metrics},
      {"8 shard reconstruction", sharder},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name.substr(0, name.find(' '))) == only.end()) continue;
    Outcome o;
    auto t0 = Clock::now();
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::Pass ? "[PASS]" : o.status == Status::Fail ? "[FAIL]" : "[SKIP]";
    if (o.status == Status::Fail) ++failed;
    std::cout << tag << " " << name << ": " << o.detail << " (" << fmt(seconds_since(t0), 1) << " s)" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
