#pragma once

// Running classified pipelines: once over the whole corpus (the reference
// path every parallel result is checked against) or once per shard.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "shardpipe/classifier.hpp"
#include "shardpipe/pipeline.hpp"
#include "shardpipe/process.hpp"
#include "shardpipe/sharder.hpp"

namespace shardpipe {

struct ExecEnv {
  std::vector<std::pair<std::string, std::string>> env_overrides{{"LC_ALL", "C"}};
  bool inject_flags = true;  // --mmap --no-config for rg
  std::chrono::milliseconds timeout{30'000};
  std::size_t max_children = default_max_children();
  std::size_t output_cap = 32u << 20;  // per-run stdout capture limit, bytes
  std::string corpus_name = "corpus.jsonl";
  /// Local `uniq` in SortHead shard pipelines. Turning it off reproduces the
  /// plain `sort | head -n K` per shard, which loses results on duplicates.
  bool sorthead_local_uniq = true;

  static std::size_t default_max_children();
};

struct ShardResult {
  int shard_index = -1;  // -1 for a whole-corpus run
  std::string out;
  std::string err;
  int exit_code = 0;
  bool timed_out = false;
  bool capped = false;
  std::chrono::milliseconds duration{0};
};

class ExecRefused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// argv vectors for the pipeline with the corpus operand bound to `input`
/// and performance flags injected. Throws ExecRefused for stages that would
/// modify files in place.
std::vector<std::vector<std::string>> bind_argv(const Pipeline& pipeline, const std::string& input,
                                                const ExecEnv& env);

/// The pipeline each shard runs for a parallel strategy.
Pipeline local_pipeline(const Pipeline& pipeline, const ReductionStrategy& strategy, const ExecEnv& env);

ShardResult exec_sequential(const Pipeline& pipeline, const std::filesystem::path& corpus, const ExecEnv& env);

ShardResult exec_on_shard(const Pipeline& pipeline, const ReductionStrategy& strategy,
                          const std::filesystem::path& shard, const ExecEnv& env, int shard_index = 0);

/// Runs every shard with at most env.max_children shard pipelines in flight.
/// Results are in shard order. The first SpawnError (by shard index) is rethrown.
std::vector<ShardResult> fan_out(const Pipeline& pipeline, const ReductionStrategy& strategy,
                                 const ShardSet& shards, const ExecEnv& env);

/// One shard at a time; reference for fan_out.
std::vector<ShardResult> fan_out_serial(const Pipeline& pipeline, const ReductionStrategy& strategy,
                                        const ShardSet& shards, const ExecEnv& env);

/// 2 if any shard errored (>= 2), else 0 if any matched, else 1.
int aggregate_exit(std::span<const ShardResult> results);

/// First occurrence of each distinct stderr, in shard order.
std::string dedup_stderr(std::span<const ShardResult> results);

}  // namespace shardpipe
