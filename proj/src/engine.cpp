#include "shardpipe/engine.hpp"

#include <algorithm>

#include "shardpipe/process.hpp"
#include "shardpipe/reducer.hpp"

namespace shardpipe {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

ExecOutcome tool_error(std::string message, Telemetry telemetry) {
  ExecOutcome outcome;
  outcome.err = "shardpipe: " + std::move(message) + "\n";
  outcome.exit_code = 2;
  telemetry.exit_code = 2;
  outcome.telemetry = std::move(telemetry);
  return outcome;
}

}  // namespace

nlohmann::json Telemetry::to_json() const {
  nlohmann::json strategy_json{{"kind", to_string(strategy.kind)}};
  if (strategy.n) strategy_json["n"] = *strategy.n;
  if (strategy.kind == StrategyKind::SortHead) strategy_json["with_uniq"] = strategy.with_uniq;
  nlohmann::json j{{"command", command},
                   {"canonical_command", canonical_command},
                   {"strategy", strategy_json},
                   {"shard_count", shard_count},
                   {"mode", mode == ExecMode::Parallel ? "parallel" : "sequential"},
                   {"fallback", fallback},
                   {"durations_ms",
                    {{"parse", parse_ms}, {"classify", classify_ms}, {"exec", exec_ms}, {"reduce", reduce_ms}}},
                   {"shard_ms", shard_ms},
                   {"exit_code", exit_code}};
  if (fallback) j["fallback_reason"] = fallback_reason;
  if (!parse_error.empty()) j["parse_error"] = parse_error;
  return j;
}

Engine::Engine(std::filesystem::path corpus, std::optional<ShardSet> shards, ExecEnv env)
    : corpus_(std::move(corpus)), shards_(std::move(shards)), env_(std::move(env)) {}

Engine::Engine(ShardSet shards, ExecEnv env)
    : corpus_(shards.corpus_path), shards_(std::move(shards)), env_(std::move(env)) {}

namespace {

// A timeout keeps its own code instead of folding into the generic 2.
int final_exit(std::span<const ShardResult> results, std::string& err, const ExecEnv& env) {
  if (std::none_of(results.begin(), results.end(), [](const ShardResult& r) { return r.timed_out; })) {
    return aggregate_exit(results);
  }
  err += "timed out after " + std::to_string(env.timeout.count()) + " ms\n";
  return kTimeoutExitCode;
}

}  // namespace

ExecOutcome Engine::run_sequential(const Pipeline& pipeline, const ExecEnv& env, Telemetry telemetry) const {
  const auto t = Clock::now();
  ShardResult result;
  try {
    result = exec_sequential(pipeline, corpus_, env);
  } catch (const ExecRefused& e) {
    return tool_error(e.what(), std::move(telemetry));
  } catch (const SpawnError& e) {
    return tool_error(e.what(), std::move(telemetry));
  }
  telemetry.exec_ms = ms_since(t);
  ExecOutcome outcome;
  outcome.capped = result.capped;
  outcome.out = std::move(result.out);
  outcome.err = std::move(result.err);
  outcome.exit_code = final_exit(std::span<const ShardResult>(&result, 1), outcome.err, env);
  telemetry.exit_code = outcome.exit_code;
  outcome.telemetry = std::move(telemetry);
  return outcome;
}

ExecOutcome Engine::run(std::string_view command, const RunOptions& options) const {
  ExecEnv env = env_;
  if (options.timeout) env.timeout = *options.timeout;

  Telemetry telemetry;
  telemetry.command = std::string(command);
  telemetry.mode = options.mode;
  telemetry.shard_count = shards_ ? shards_->count() : 0;

  auto t = Clock::now();
  Pipeline pipeline;
  try {
    pipeline = parse_pipeline(command, ParseOptions{env.corpus_name});
  } catch (const ParseError& e) {
    telemetry.parse_ms = ms_since(t);
    telemetry.parse_error = e.what();
    return tool_error(e.what(), std::move(telemetry));
  }
  telemetry.parse_ms = ms_since(t);
  telemetry.canonical_command = render(pipeline);

  t = Clock::now();
  telemetry.strategy = classify(pipeline);
  telemetry.classify_ms = ms_since(t);

  const ReductionStrategy strategy = telemetry.strategy;
  if (options.mode == ExecMode::Sequential || !strategy.parallel() || !shards_ || shards_->count() == 0) {
    return run_sequential(pipeline, env, std::move(telemetry));
  }

  auto fall_back = [&](std::string reason) {
    telemetry.fallback = true;
    telemetry.fallback_reason = std::move(reason);
    return run_sequential(pipeline, env, std::move(telemetry));
  };

  t = Clock::now();
  std::vector<ShardResult> results;
  try {
    results = fan_out(pipeline, strategy, *shards_, env);
  } catch (const SpawnError& e) {
    return fall_back(e.what());
  } catch (const ExecRefused& e) {
    return fall_back(e.what());
  }
  if (shard_hook_) shard_hook_(results);
  telemetry.exec_ms = ms_since(t);
  for (const auto& r : results) telemetry.shard_ms.push_back(static_cast<double>(r.duration.count()));

  bool any_capped = std::any_of(results.begin(), results.end(), [](const ShardResult& r) { return r.capped; });
  if (any_capped && strategy.kind != StrategyKind::Concat) return fall_back("shard output exceeded capture cap");

  t = Clock::now();
  MergedOutput merged;
  try {
    merged = reduce(strategy, results);
  } catch (const ReduceError& e) {
    return fall_back(e.what());
  }
  telemetry.reduce_ms = ms_since(t);

  ExecOutcome outcome;
  outcome.out = std::move(merged.out);
  if (outcome.out.size() > env.output_cap) {
    outcome.out.resize(env.output_cap);
    outcome.capped = true;
  }
  outcome.capped = outcome.capped || any_capped;
  outcome.err = dedup_stderr(results);
  outcome.exit_code = final_exit(results, outcome.err, env);
  telemetry.exit_code = outcome.exit_code;
  outcome.telemetry = std::move(telemetry);
  return outcome;
}

}  // namespace shardpipe
