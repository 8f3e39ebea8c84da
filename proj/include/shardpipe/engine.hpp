#pragma once

// parse -> classify -> execute -> reduce, with transparent sequential
// fallback whenever a parallel run trips over an internal fault.

#include <chrono>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shardpipe/classifier.hpp"
#include "shardpipe/executor.hpp"
#include "shardpipe/sharder.hpp"

namespace shardpipe {

enum class ExecMode { Parallel, Sequential };

struct Telemetry {
  std::string command;
  std::string canonical_command;  // empty when parsing failed
  std::string parse_error;
  ReductionStrategy strategy;     // the original classification, even after fallback
  std::size_t shard_count = 0;
  ExecMode mode = ExecMode::Parallel;
  bool fallback = false;
  std::string fallback_reason;
  double parse_ms = 0;
  double classify_ms = 0;
  double exec_ms = 0;
  double reduce_ms = 0;
  std::vector<double> shard_ms;
  int exit_code = 0;

  /// true when the request actually ran on shards
  bool ran_parallel() const { return mode == ExecMode::Parallel && strategy.parallel() && !fallback && shard_count > 0; }
  nlohmann::json to_json() const;
};

struct ExecOutcome {
  std::string out;
  std::string err;
  int exit_code = 0;
  bool capped = false;
  Telemetry telemetry;
};

struct RunOptions {
  ExecMode mode = ExecMode::Parallel;
  std::optional<std::chrono::milliseconds> timeout;
};

class Engine {
 public:
  /// Without shards every request runs sequentially over `corpus`.
  Engine(std::filesystem::path corpus, std::optional<ShardSet> shards, ExecEnv env = {});
  /// Uses the corpus recorded in the shard manifest.
  explicit Engine(ShardSet shards, ExecEnv env = {});

  ExecOutcome run(std::string_view command, const RunOptions& options = {}) const;

  const std::filesystem::path& corpus() const { return corpus_; }
  const std::optional<ShardSet>& shards() const { return shards_; }
  const ExecEnv& env() const { return env_; }

  /// Test hook applied to per-shard results before reduction.
  using ShardHook = std::function<void(std::vector<ShardResult>&)>;
  void set_shard_hook(ShardHook hook) { shard_hook_ = std::move(hook); }

 private:
  ExecOutcome run_sequential(const Pipeline& pipeline, const ExecEnv& env, Telemetry telemetry) const;

  std::filesystem::path corpus_;
  std::optional<ShardSet> shards_;
  ExecEnv env_;
  ShardHook shard_hook_;
};

}  // namespace shardpipe
