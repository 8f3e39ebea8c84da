#include "shardpipe/executor.hpp"

#include <omp.h>

#include <algorithm>
#include <exception>
#include <thread>
#include <unordered_set>

#include "shardpipe/tool_args.hpp"

namespace shardpipe {

std::size_t ExecEnv::default_max_children() {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

namespace {

bool mutates_files(const Stage& stage) {
  if (stage.tool != "sed") return false;
  return scan_args(stage).has_any({"-i", "--in-place"});
}

ShardResult to_shard_result(ProcessResult&& run, int index) {
  ShardResult r;
  r.shard_index = index;
  r.out = std::move(run.out);
  r.err = std::move(run.err);
  r.exit_code = run.exit_code;
  r.timed_out = run.timed_out;
  r.capped = run.out_capped;
  r.duration = run.duration;
  return r;
}

SpawnOptions spawn_options(const ExecEnv& env) {
  SpawnOptions opts;
  opts.env = make_environment(env.env_overrides);
  opts.timeout = env.timeout;
  opts.stdout_cap = env.output_cap;
  return opts;
}

}  // namespace

std::vector<std::vector<std::string>> bind_argv(const Pipeline& pipeline, const std::string& input,
                                                const ExecEnv& env) {
  std::vector<std::vector<std::string>> argvs;
  for (std::size_t i = 0; i < pipeline.stages.size(); ++i) {
    const Stage& stage = pipeline.stages[i];
    if (mutates_files(stage)) throw ExecRefused("refusing to run an in-place edit: " + stage.tool);
    std::vector<std::string> argv{stage.tool};
    if (env.inject_flags && stage.tool == "rg") {
      for (std::string_view flag : {"--mmap", "--no-config"}) {
        if (std::find(stage.args.begin(), stage.args.end(), flag) == stage.args.end()) argv.emplace_back(flag);
      }
    }
    // GNU sed refuses e/r/w commands in sandbox mode
    if (stage.tool == "sed") argv.emplace_back("--sandbox");
    std::vector<std::string> args = stage.args;
    if (i == 0) {
      for (auto idx : path_operands(stage)) {
        if (args[idx] == env.corpus_name) args[idx] = input;
      }
    }
    argv.insert(argv.end(), args.begin(), args.end());
    argvs.push_back(std::move(argv));
  }
  return argvs;
}

Pipeline local_pipeline(const Pipeline& pipeline, const ReductionStrategy& strategy, const ExecEnv& env) {
  Pipeline local = pipeline;
  if (strategy.kind == StrategyKind::SortHead && strategy.with_uniq && !env.sorthead_local_uniq) {
    // prefix | sort | uniq | head -n N  ->  prefix | sort | head -n N
    local.stages.erase(local.stages.end() - 2);
  }
  return local;
}

ShardResult exec_sequential(const Pipeline& pipeline, const std::filesystem::path& corpus, const ExecEnv& env) {
  auto argvs = bind_argv(pipeline, corpus.string(), env);
  return to_shard_result(run_pipeline(argvs, spawn_options(env)), -1);
}

ShardResult exec_on_shard(const Pipeline& pipeline, const ReductionStrategy& strategy,
                          const std::filesystem::path& shard, const ExecEnv& env, int shard_index) {
  auto argvs = bind_argv(local_pipeline(pipeline, strategy, env), shard.string(), env);
  return to_shard_result(run_pipeline(argvs, spawn_options(env)), shard_index);
}

std::vector<ShardResult> fan_out(const Pipeline& pipeline, const ReductionStrategy& strategy,
                                 const ShardSet& shards, const ExecEnv& env) {
  const std::size_t s = shards.count();
  std::vector<ShardResult> results(s);
  std::vector<std::exception_ptr> errors(s);
  const int threads = static_cast<int>(std::clamp<std::size_t>(env.max_children, 1, std::max<std::size_t>(s, 1)));
  const auto n = static_cast<std::ptrdiff_t>(s);

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      results[idx] = exec_on_shard(pipeline, strategy, shards.shards[idx].path, env, static_cast<int>(i));
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

std::vector<ShardResult> fan_out_serial(const Pipeline& pipeline, const ReductionStrategy& strategy,
                                        const ShardSet& shards, const ExecEnv& env) {
  std::vector<ShardResult> results;
  results.reserve(shards.count());
  for (std::size_t i = 0; i < shards.count(); ++i) {
    results.push_back(exec_on_shard(pipeline, strategy, shards.shards[i].path, env, static_cast<int>(i)));
  }
  return results;
}

int aggregate_exit(std::span<const ShardResult> results) {
  bool any_match = false;
  for (const auto& r : results) {
    if (r.exit_code >= 2) return 2;
    if (r.exit_code == 0) any_match = true;
  }
  return any_match ? 0 : 1;
}

std::string dedup_stderr(std::span<const ShardResult> results) {
  std::string out;
  std::unordered_set<std::string_view> seen;
  for (const auto& r : results) {
    if (r.err.empty()) continue;
    if (seen.insert(r.err).second) out += r.err;
  }
  return out;
}

}  // namespace shardpipe
