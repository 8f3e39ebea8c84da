// Parallel fan-out against the serial references, plus the k-way merge kernel.
//
//   shardpipe_bench --benchmark_filter=Count
//   SHARDPIPE_BENCH_LINES=2000000 shardpipe_bench

#include <benchmark/benchmark.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>

#include "shardpipe/classifier.hpp"
#include "shardpipe/executor.hpp"
#include "shardpipe/harness.hpp"
#include "shardpipe/pipeline.hpp"
#include "shardpipe/reducer.hpp"
#include "shardpipe/sharder.hpp"

using namespace shardpipe;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path dir;
  fs::path corpus;
  std::map<std::size_t, ShardSet> sets;

  Workspace() {
    std::size_t lines = 200'000;
    if (const char* l = std::getenv("SHARDPIPE_BENCH_LINES")) lines = std::stoull(l);
    dir = fs::temp_directory_path() / ("shardpipe-bench-" + std::to_string(lines));
    corpus = dir / "corpus.jsonl";
    fs::create_directories(dir);
    if (!fs::exists(corpus)) gen_corpus(corpus, 1, lines);
  }

  const ShardSet& shards(std::size_t s) {
    auto it = sets.find(s);
    if (it == sets.end()) {
      it = sets.emplace(s, shard(corpus, s, dir / ("s" + std::to_string(s)))).first;
      warm(it->second);
    }
    return it->second;
  }
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

const std::string& count_command() {
  static const std::string cmd = default_search_tool() + " -F acid corpus.jsonl | wc -l";
  return cmd;
}

void BM_FanOut(benchmark::State& state) {
  const ShardSet& set = workspace().shards(static_cast<std::size_t>(state.range(0)));
  Pipeline p = parse_pipeline(count_command());
  ReductionStrategy st = classify(p);
  ExecEnv env;
  for (auto _ : state) benchmark::DoNotOptimize(fan_out(p, st, set, env));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * set.corpus_bytes));
}

void BM_FanOutSerial(benchmark::State& state) {
  const ShardSet& set = workspace().shards(static_cast<std::size_t>(state.range(0)));
  Pipeline p = parse_pipeline(count_command());
  ReductionStrategy st = classify(p);
  ExecEnv env;
  for (auto _ : state) benchmark::DoNotOptimize(fan_out_serial(p, st, set, env));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * set.corpus_bytes));
}

void BM_Sequential(benchmark::State& state) {
  Workspace& w = workspace();
  Pipeline p = parse_pipeline(count_command());
  ExecEnv env;
  for (auto _ : state) benchmark::DoNotOptimize(exec_sequential(p, w.corpus, env));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * fs::file_size(w.corpus)));
}

void BM_KwayMerge(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  std::mt19937 rng(3);
  std::vector<std::vector<std::string>> lines(k);
  for (auto& v : lines) {
    for (int i = 0; i < 20'000; ++i) v.push_back(std::to_string(rng() % 100'000'000));
    std::sort(v.begin(), v.end());
  }
  std::vector<std::string> texts;
  for (auto& v : lines) {
    std::string t;
    for (auto& l : v) t += l + "\n";
    texts.push_back(std::move(t));
  }
  std::vector<std::string_view> streams(texts.begin(), texts.end());
  for (auto _ : state) benchmark::DoNotOptimize(kway_merge(streams, SIZE_MAX, state.range(1) != 0));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * k * 20'000));
}

}  // namespace

BENCHMARK(BM_FanOut)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_FanOutSerial)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Sequential)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_KwayMerge)->Args({2, 0})->Args({8, 0})->Args({8, 1})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
