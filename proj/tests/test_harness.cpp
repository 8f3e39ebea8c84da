#include <doctest.h>

#include <set>

#include "shardpipe/harness.hpp"
#include "test_util.hpp"

using namespace shardpipe;
using testutil::read_file;
using testutil::TempDir;
using testutil::write_file;

TEST_CASE("gen_corpus") {
  TempDir tmp;
  gen_corpus(tmp / "empty.jsonl", 7, 0);
  CHECK(read_file(tmp / "empty.jsonl").empty());

  gen_corpus(tmp / "a.jsonl", 7, 1000);
  gen_corpus(tmp / "b.jsonl", 7, 1000);
  gen_corpus(tmp / "c.jsonl", 8, 1000);
  const std::string a = read_file(tmp / "a.jsonl");
  CHECK(a == read_file(tmp / "b.jsonl"));
  CHECK(a != read_file(tmp / "c.jsonl"));
  CHECK(count_lines(a) == 1000);
  CHECK(a.back() == '\n');

  std::size_t pos = 0, duplicates = 0, planted = 0;
  std::set<std::string> seen;
  while (pos < a.size()) {
    auto nl = a.find('\n', pos);
    std::string line = a.substr(pos, nl - pos);
    pos = nl + 1;
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("id"));
    CHECK(j["contents"].is_string());
    if (!seen.insert(line).second) ++duplicates;
    for (const auto& p : planted_phrases()) {
      if (line.find(p) != std::string::npos) {
        ++planted;
        break;
      }
    }
  }
  CHECK(duplicates > 0);
  CHECK(planted > 0);
}

TEST_CASE("pipeline grammar covers every class and labels correctly") {
  PipelineGrammar g;
  std::map<std::string, std::size_t> histogram;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    GeneratedPipeline p = g.draw(seed);
    CAPTURE(p.command);
    CHECK(command_class(p.command) == p.expected_class);
    if (p.expected_class != kRejected) CHECK_NOTHROW(parse_pipeline(p.command));
    ++histogram[p.expected_class];
    CHECK(g.draw(seed).command == p.command);
  }
  for (const char* c : {"Concat", "Head", "Count", "SortHead", "Sequential", "Rejected"}) {
    CAPTURE(c);
    CHECK(histogram[c] >= 20);
  }
}

TEST_CASE("diff_run passes for the shipped engine") {
  TempDir tmp;
  gen_corpus(tmp / "c.jsonl", 12, 3000);
  DiffRunner runner(tmp / "c.jsonl", tmp / "w", {1, 2, 3, 4, 8});
  const std::string tool = default_search_tool();
  for (const std::string& cmd : std::vector<std::string>{tool + " -F e corpus.jsonl", tool + " -i -F acid corpus.jsonl | head -n 4",
                                tool + " -F a corpus.jsonl | wc -l",
                                tool + " -o -F the corpus.jsonl | sort | uniq | head -n 3",
                                tool + " -F a corpus.jsonl | sort -r | head -n 3", "rg x corpus.jsonl > out"}) {
    CAPTURE(cmd);
    Verdict v = runner.diff_run(cmd);
    CHECK(v.pass);
    CHECK(v.cases.size() == 5);
    CHECK(v.cases.front().shard_count == 1);
  }
  auto parallel = runner.diff_run(tool + " -F e corpus.jsonl");
  CHECK(parallel.strategy == "Concat");
  for (const auto& c : parallel.cases) CHECK(c.ran_parallel);
}

TEST_CASE("single shard passes every generated command") {
  TempDir tmp;
  gen_corpus(tmp / "c.jsonl", 4, 800);
  DiffRunner runner(tmp / "c.jsonl", tmp / "w", {1});
  PipelineGrammar g;
  for (std::uint64_t seed = 100; seed < 160; ++seed) {
    auto p = g.draw(seed);
    CAPTURE(p.command);
    CHECK(runner.diff_run(p.command).pass);
  }
}

TEST_CASE("duplicate-flood counterexample") {
  TempDir tmp;
  Counterexample ce = sorthead_counterexample();
  write_file(tmp / "c.jsonl", ce.corpus);
  // the expected answer itself, from sort | uniq | head over the filtered lines
  CHECK(ce.expected == "a\nb\n");

  DiffRunner good(tmp / "c.jsonl", tmp / "good", {ce.shard_count});
  Verdict ok = good.diff_run(ce.command);
  CHECK(ok.pass);
  CHECK(ok.sequential_out == ce.expected);
  CHECK(ok.cases[0].ran_parallel);

  ExecEnv buggy;
  buggy.sorthead_local_uniq = false;
  DiffRunner bad(tmp / "c.jsonl", tmp / "bad", {ce.shard_count}, buggy);
  Verdict fail = bad.diff_run_with_bundle(ce.command, tmp / "bundles");
  CHECK_FALSE(fail.pass);
  CHECK(fail.cases[0].parallel_out == "a\nc\n");
  REQUIRE(fail.bundle);
  for (const char* f : {"corpus.jsonl", "command.txt", "sequential.out", "parallel.out", "meta.json"}) {
    CHECK(std::filesystem::exists(*fail.bundle / f));
  }
  CHECK(read_file(*fail.bundle / "corpus.jsonl").size() <= ce.corpus.size());
  Verdict replay = replay_bundle(*fail.bundle);
  CHECK_FALSE(replay.pass);
  CHECK(replay.sequential_out == read_file(*fail.bundle / "sequential.out"));
}

TEST_CASE("minimizer shrinks a failing corpus") {
  TempDir tmp;
  Counterexample ce = sorthead_counterexample();
  // pad with lines that do not matter
  std::string padded = ce.corpus;
  for (int i = 0; i < 40; ++i) padded += "z pad " + std::to_string(i) + "\n";
  ExecEnv buggy;
  buggy.sorthead_local_uniq = false;
  std::string slice = minimize_corpus(padded, ce.command, 2, buggy, tmp / "scratch");
  CHECK(count_lines(slice) < count_lines(padded));

  write_file(tmp / "slice.jsonl", slice);
  DiffRunner check(tmp / "slice.jsonl", tmp / "w", {2}, buggy);
  CHECK_FALSE(check.diff_run(ce.command).pass);
}

TEST_CASE("fuzz session reports coverage") {
  TempDir tmp;
  FuzzOptions o;
  o.seed = 3;
  o.pipelines = 60;
  o.lines = 2000;
  o.shard_counts = {1, 3};
  o.work_dir = tmp / "fuzz";
  FuzzReport r = fuzz_session(o);
  CHECK(r.total == 60);
  CHECK(r.passed == r.total);
  CHECK(r.parallel_runs > 0);
  auto j = r.to_json();
  CHECK(j["total"] == 60);
  CHECK(j.contains("histogram"));
}
