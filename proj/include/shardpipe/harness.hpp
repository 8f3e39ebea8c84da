#pragma once

// Differential testing: random corpora and pipelines, each run through the
// engine at several shard counts and compared byte for byte with one
// sequential run over the unsharded corpus.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shardpipe/classifier.hpp"
#include "shardpipe/engine.hpp"
#include "shardpipe/executor.hpp"
#include "shardpipe/sharder.hpp"

namespace shardpipe {

class HarnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic JSONL corpus. Lines look like {"id":N,"contents":"..."};
/// some carry planted phrases and some repeat an earlier line verbatim.
void gen_corpus(const std::filesystem::path& out, std::uint64_t seed, std::size_t lines, std::size_t avg_len = 96);

/// Phrases gen_corpus plants; pipelines search for these.
const std::vector<std::string>& planted_phrases();

/// "rg" when ripgrep is on PATH, otherwise "grep".
std::string default_search_tool();

/// Generator classes: the five strategies plus commands the parser rejects.
inline constexpr std::string_view kRejected = "Rejected";

struct GeneratedPipeline {
  std::string command;
  std::string expected_class;  // to_string(StrategyKind) or kRejected
};

struct PipelineGrammar {
  std::string search_tool = default_search_tool();
  // Concat, Head, Count, SortHead, Sequential, Rejected
  std::vector<double> weights{0.2, 0.2, 0.15, 0.2, 0.15, 0.1};
  std::vector<std::string> vocabulary;  // defaults to planted phrases + common words

  GeneratedPipeline draw(std::uint64_t seed) const;
};

/// Actual class of a command: the classifier verdict, or kRejected.
std::string command_class(const std::string& command, const std::string& corpus_name = "corpus.jsonl");

struct DiffCase {
  std::size_t shard_count = 0;
  std::string parallel_out;
  int parallel_exit = 0;
  bool ran_parallel = false;
  bool pass = false;
};

struct Verdict {
  std::string command;
  std::string strategy;  // command_class
  std::string sequential_out;
  int sequential_exit = 0;
  std::vector<DiffCase> cases;
  bool pass = true;
  std::optional<std::filesystem::path> bundle;

  nlohmann::json to_json() const;
};

/// Shards one corpus at each requested count (cached in work_dir) and
/// compares engine output with exec_sequential.
class DiffRunner {
 public:
  DiffRunner(std::filesystem::path corpus, std::filesystem::path work_dir, std::vector<std::size_t> shard_counts,
             ExecEnv env = {});

  Verdict diff_run(const std::string& command) const;

  /// Like diff_run, and on FAIL writes a minimized reproduction bundle
  /// under bundle_root.
  Verdict diff_run_with_bundle(const std::string& command, const std::filesystem::path& bundle_root) const;

  const ExecEnv& env() const { return env_; }

 private:
  std::filesystem::path corpus_;
  std::filesystem::path work_dir_;
  std::vector<std::size_t> shard_counts_;
  ExecEnv env_;
  std::vector<Engine> engines_;
};

/// Delta-debugging over corpus lines: the smallest slice found (within the
/// run budget) on which `command` still fails for `shard_count`.
std::string minimize_corpus(const std::string& corpus_bytes, const std::string& command, std::size_t shard_count,
                            const ExecEnv& env, const std::filesystem::path& scratch, std::size_t max_runs = 400);

/// Bundle layout: corpus.jsonl, command.txt, meta.json, sequential.out, parallel.out.
std::filesystem::path write_bundle(const std::filesystem::path& dir, const std::string& corpus_bytes,
                                   const std::string& command, std::size_t shard_count, const ExecEnv& env,
                                   const std::string& sequential_out, const std::string& parallel_out);

/// Re-runs a bundle; returns its verdict (a faithful bundle FAILs again).
Verdict replay_bundle(const std::filesystem::path& dir);

struct FuzzOptions {
  std::uint64_t seed = 1;
  std::size_t pipelines = 500;
  std::size_t lines = 100'000;
  std::size_t avg_len = 96;
  std::vector<std::size_t> shard_counts{1, 2, 3, 4, 8};
  bool local_uniq = true;
  std::filesystem::path work_dir;
  std::optional<std::filesystem::path> bundle_dir;
  std::function<void(std::size_t, const Verdict&)> on_verdict;
};

struct FuzzReport {
  std::size_t total = 0;
  std::size_t passed = 0;
  std::size_t parallel_runs = 0;  // (command, S) pairs that really ran on shards
  std::map<std::string, std::size_t> histogram;
  std::vector<Verdict> failures;
  double seconds = 0;

  /// every strategy class and the rejection class drawn at least once
  bool coverage_ok() const;
  bool ok() const { return passed == total && coverage_ok(); }
  nlohmann::json to_json() const;
};

FuzzReport fuzz_session(const FuzzOptions& options);

/// The hand-built SortHead case: duplicates of the smallest key flood one
/// shard so a per-shard `sort | head` without uniq drops a distinct line.
struct Counterexample {
  std::string corpus;
  std::string command;
  std::size_t shard_count;
  std::string expected;
};
Counterexample sorthead_counterexample();

}  // namespace shardpipe
