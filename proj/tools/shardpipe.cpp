// shardpipe: shard a corpus, run pipelines over it, serve them over a socket.

#include <unistd.h>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "shardpipe/daemon.hpp"
#include "shardpipe/engine.hpp"
#include "shardpipe/harness.hpp"
#include "shardpipe/metrics.hpp"
#include "shardpipe/protocol.hpp"
#include "shardpipe/sharder.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace shardpipe;

namespace {

constexpr int kOk = 0;
constexpr int kNoMatch = 1;
constexpr int kUsage = 2;
constexpr int kTransport = 3;
constexpr int kInternal = 4;

const char* kExitCodes =
    "Exit codes:\n"
    "  0  success / match\n"
    "  1  no match (or verify found a mismatch)\n"
    "  2  command, parse or tool error\n"
    "  3  transport error (daemon unreachable)\n"
    "  4  internal or verification error\n";

std::atomic<Server*> g_server{nullptr};

void on_signal(int) {
  if (Server* s = g_server.load()) s->stop();
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

std::vector<std::size_t> parse_counts(const std::string& list) {
  std::vector<std::size_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t v = std::stoul(item);
    if (v == 0) throw CLI::ValidationError("shard counts must be >= 1");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("empty shard count list");
  return out;
}

void print_outcome(const std::string& out, const std::string& err) {
  std::fwrite(out.data(), 1, out.size(), stdout);
  std::fflush(stdout);
  std::fwrite(err.data(), 1, err.size(), stderr);
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  double pos = q * static_cast<double>(v.size() - 1);
  auto lo = static_cast<std::size_t>(pos);
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

struct Common {
  bool as_json = false;
  std::string shard_dir = env_or("SHARDPIPE_SHARD_DIR", "");
  std::string corpus;
  double timeout_s = 30;
};

ExecEnv make_env(const Common& c) {
  ExecEnv env;
  env.timeout = std::chrono::milliseconds(static_cast<long long>(c.timeout_s * 1000));
  return env;
}

fs::path require_shard_dir(const Common& c) {
  if (c.shard_dir.empty()) throw CLI::ValidationError("--shard-dir (or SHARDPIPE_SHARD_DIR) is required");
  return fs::absolute(c.shard_dir);
}

json shardset_json(const ShardSet& set) {
  json shards = json::array();
  for (const auto& s : set.shards) {
    shards.push_back({{"path", s.path.string()}, {"lines", s.lines}, {"bytes", s.bytes}, {"digest", s.digest}});
  }
  return {{"corpus_path", set.corpus_path.string()}, {"corpus_digest", set.corpus_digest},
          {"corpus_bytes", set.corpus_bytes},        {"corpus_lines", set.corpus_lines},
          {"shard_count", set.count()},              {"shard_dir", set.shard_dir.string()},
          {"shards", shards}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shardpipe - sharded parallel execution of grep-style shell pipelines over a line corpus"};
  app.footer(kExitCodes);
  app.require_subcommand(1);
  int rc = kOk;

  // shard
  Common shard_opts;
  std::size_t shard_count = 8;
  auto* shard_cmd = app.add_subcommand("shard", "Split a corpus into line-aligned shards (idempotent)");
  shard_cmd->add_option("--corpus", shard_opts.corpus, "Corpus file")->required()->check(CLI::ExistingFile);
  shard_cmd->add_option("--shards,-s", shard_count, "Number of shards")->check(CLI::PositiveNumber);
  shard_cmd->add_option("--shard-dir", shard_opts.shard_dir, "Output directory [$SHARDPIPE_SHARD_DIR]");
  shard_cmd->add_flag("--json", shard_opts.as_json, "Print the manifest as JSON");
  shard_cmd->callback([&] {
    fs::path dir = shard_opts.shard_dir.empty() ? fs::path(shard_opts.corpus + ".shards") : fs::path(shard_opts.shard_dir);
    if (!shard_opts.as_json) std::cerr << "sharding " << shard_opts.corpus << " into " << shard_count << " shards\n";
    ShardSet set = shard(fs::absolute(shard_opts.corpus), shard_count, fs::absolute(dir));
    if (shard_opts.as_json) {
      std::cout << shardset_json(set).dump() << "\n";
    } else {
      for (const auto& s : set.shards) {
        std::cout << s.path.filename().string() << "  lines=" << s.lines << "  bytes=" << s.bytes << "\n";
      }
      std::cout << "corpus " << set.corpus_lines << " lines, " << set.corpus_bytes << " bytes, sha256 "
                << set.corpus_digest << "\nmanifest " << set.manifest_path().string() << "\n";
    }
  });

  // verify
  Common verify_opts;
  auto* verify_cmd = app.add_subcommand("verify", "Check shards against their manifest (exit 1 on mismatch)");
  verify_cmd->add_option("--shard-dir", verify_opts.shard_dir, "Shard directory [$SHARDPIPE_SHARD_DIR]");
  verify_cmd->add_flag("--json", verify_opts.as_json, "JSON output");
  verify_cmd->callback([&] {
    ShardSet set = ShardSet::load(require_shard_dir(verify_opts));
    bool ok = verify(set);
    if (verify_opts.as_json) {
      std::cout << json{{"ok", ok}, {"shard_dir", set.shard_dir.string()}, {"shard_count", set.count()}}.dump() << "\n";
    } else {
      std::cout << (ok ? "OK" : "MISMATCH") << "  " << set.count() << " shards in " << set.shard_dir.string() << "\n";
    }
    rc = ok ? kOk : kNoMatch;
  });

  // warm
  Common warm_opts;
  auto* warm_cmd = app.add_subcommand("warm", "Read every shard once to populate the page cache");
  warm_cmd->add_option("--shard-dir", warm_opts.shard_dir, "Shard directory [$SHARDPIPE_SHARD_DIR]");
  warm_cmd->add_flag("--json", warm_opts.as_json, "JSON output");
  warm_cmd->callback([&] {
    ShardSet set = ShardSet::load(require_shard_dir(warm_opts));
    auto t0 = std::chrono::steady_clock::now();
    std::uint64_t bytes = warm(set);
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (warm_opts.as_json) {
      std::cout << json{{"bytes_read", bytes}, {"corpus_bytes", set.corpus_bytes}, {"ms", ms}}.dump() << "\n";
    } else {
      std::cout << "bytes read " << bytes << " (corpus " << set.corpus_bytes << ") in " << ms << " ms\n";
    }
  });

  // gen-corpus
  std::string gen_out;
  std::size_t gen_lines = 100'000, gen_avg = 96;
  std::uint64_t gen_seed = 7;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Write a deterministic synthetic JSONL corpus");
  gen_cmd->add_option("--out,-o", gen_out, "Output file")->required();
  gen_cmd->add_option("--lines", gen_lines, "Number of lines");
  gen_cmd->add_option("--avg-len", gen_avg, "Average text length per record");
  gen_cmd->add_option("--seed", gen_seed, "RNG seed");
  gen_cmd->callback([&] { gen_corpus(gen_out, gen_seed, gen_lines, gen_avg); });

  // exec
  Common exec_opts;
  std::string exec_command, exec_mode = "parallel";
  auto* exec_cmd = app.add_subcommand("exec", "Run one pipeline in-process");
  exec_cmd->add_option("command", exec_command, "Pipeline, e.g. 'rg -F \"x\" corpus.jsonl | head -n 3'")->required();
  exec_cmd->add_option("--mode", exec_mode, "parallel | sequential | both")
      ->check(CLI::IsMember({"parallel", "sequential", "both"}));
  exec_cmd->add_option("--shard-dir", exec_opts.shard_dir, "Shard directory [$SHARDPIPE_SHARD_DIR]");
  exec_cmd->add_option("--corpus", exec_opts.corpus, "Corpus file (sequential mode without shards)");
  exec_cmd->add_option("--timeout", exec_opts.timeout_s, "Per-run timeout in seconds")->check(CLI::PositiveNumber);
  exec_cmd->add_flag("--json", exec_opts.as_json, "Print stdout, stderr, exit code and telemetry as JSON");
  exec_cmd->callback([&] {
    std::optional<ShardSet> set;
    if (!exec_opts.shard_dir.empty()) set = ShardSet::load(fs::absolute(exec_opts.shard_dir));
    fs::path corpus;
    if (!exec_opts.corpus.empty()) {
      corpus = fs::absolute(exec_opts.corpus);
    } else if (set) {
      corpus = set->corpus_path;
    } else {
      throw CLI::ValidationError("need --shard-dir or --corpus");
    }
    if (exec_mode != "sequential" && !set) throw CLI::ValidationError("parallel mode needs --shard-dir");
    Engine engine(corpus, set, make_env(exec_opts));

    if (exec_mode == "both") {
      ExecOutcome par = engine.run(exec_command, {ExecMode::Parallel, std::nullopt});
      ExecOutcome seq = engine.run(exec_command, {ExecMode::Sequential, std::nullopt});
      bool match = par.out == seq.out && par.exit_code == seq.exit_code;
      if (exec_opts.as_json) {
        std::cout << json{{"match", match},
                          {"parallel", {{"stdout", par.out}, {"exit_code", par.exit_code}, {"telemetry", par.telemetry.to_json()}}},
                          {"sequential", {{"stdout", seq.out}, {"exit_code", seq.exit_code}}}}
                         .dump(-1, ' ', false, json::error_handler_t::replace)
                  << "\n";
      } else {
        std::cout << "--- parallel (" << describe(par.telemetry.strategy) << ", exit " << par.exit_code << ")\n";
        print_outcome(par.out, par.err);
        std::cout << "--- sequential (exit " << seq.exit_code << ")\n";
        print_outcome(seq.out, seq.err);
        std::cout << (match ? "MATCH" : "MISMATCH") << "\n";
      }
      rc = match ? par.exit_code : kInternal;
      return;
    }
    ExecMode mode = exec_mode == "parallel" ? ExecMode::Parallel : ExecMode::Sequential;
    ExecOutcome o = engine.run(exec_command, {mode, std::nullopt});
    if (exec_opts.as_json) {
      ResponseFrame r{o.out, o.err, o.exit_code, false, o.telemetry.to_json()};
      std::cout << r.to_json().dump(-1, ' ', false, json::error_handler_t::replace) << "\n";
    } else {
      print_outcome(o.out, o.err);
    }
    rc = o.exit_code;
  });

  // bench
  Common bench_opts;
  std::string bench_counts = "1,2,4,8", bench_queries, bench_root;
  std::size_t bench_repeat = 5;
  std::uint64_t bench_floor = 1ULL << 30;
  auto* bench_cmd = app.add_subcommand("bench", "Latency per shard count over a query set");
  bench_cmd->add_option("--corpus", bench_opts.corpus, "Corpus file")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--shards", bench_counts, "Comma-separated shard counts");
  bench_cmd->add_option("--queries", bench_queries, "File with one pipeline per line (default: fixed-string scans)");
  bench_cmd->add_option("--work-dir", bench_root, "Where shard sets are kept (default: <corpus>.bench)");
  bench_cmd->add_option("--repeat", bench_repeat, "Runs per query per shard count")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--floor-bytes", bench_floor, "Warn when the corpus is smaller than this");
  bench_cmd->add_option("--timeout", bench_opts.timeout_s, "Per-run timeout in seconds");
  bench_cmd->add_flag("--json", bench_opts.as_json, "JSON lines instead of a table");
  bench_cmd->callback([&] {
    fs::path corpus = fs::absolute(bench_opts.corpus);
    fs::path root = bench_root.empty() ? fs::path(corpus.string() + ".bench") : fs::absolute(bench_root);
    std::vector<std::string> queries;
    if (!bench_queries.empty()) {
      std::ifstream in(bench_queries);
      for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line[0] != '#') queries.push_back(line);
      }
    } else {
      const std::string t = default_search_tool();
      for (const char* p : {"picric acid", "Oberoi Group", "zzz-not-present"}) {
        queries.push_back(t + " -F \"" + p + "\" corpus.jsonl | wc -l");
      }
    }
    if (fs::file_size(corpus) < bench_floor) {
      std::cerr << "warning: corpus is " << fs::file_size(corpus) << " bytes, below the " << bench_floor
                << "-byte floor; latencies will mostly measure process start-up noise\n";
    }
    double t1 = 0;
    if (!bench_opts.as_json) std::printf("%6s %12s %12s %9s\n", "S", "median_ms", "p95_ms", "speedup");
    for (std::size_t s : parse_counts(bench_counts)) {
      ShardSet set = shard(corpus, s, root / ("s" + std::to_string(s)));
      warm(set);
      Engine engine(corpus, set, make_env(bench_opts));
      std::vector<double> samples;
      for (std::size_t r = 0; r < bench_repeat; ++r) {
        for (const auto& q : queries) {
          auto t0 = std::chrono::steady_clock::now();
          engine.run(q);
          samples.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        }
      }
      double med = percentile(samples, 0.5), p95 = percentile(samples, 0.95);
      if (t1 == 0) t1 = med;
      double speedup = med > 0 ? t1 / med : 0;
      if (bench_opts.as_json) {
        std::cout << json{{"shards", s}, {"median_ms", med}, {"p95_ms", p95}, {"speedup", speedup},
                          {"samples", samples.size()}, {"corpus_bytes", fs::file_size(corpus)}}.dump()
                  << "\n";
      } else {
        std::printf("%6zu %12.2f %12.2f %9.2f\n", s, med, p95, speedup);
      }
    }
  });

  // serve
  Common serve_opts;
  std::string serve_socket = default_socket_path().string(), serve_telemetry;
  bool serve_no_warm = false;
  auto* serve_cmd = app.add_subcommand("serve", "Run the daemon on a unix socket until SIGINT/SIGTERM");
  serve_cmd->add_option("--shard-dir", serve_opts.shard_dir, "Shard directory [$SHARDPIPE_SHARD_DIR]");
  serve_cmd->add_option("--socket", serve_socket, "Socket path [$SHARDPIPE_SOCKET]");
  serve_cmd->add_option("--telemetry", serve_telemetry, "Append one JSON record per request to this file");
  serve_cmd->add_option("--timeout", serve_opts.timeout_s, "Default per-request timeout in seconds");
  serve_cmd->add_flag("--no-warm", serve_no_warm, "Skip page-cache warming at startup");
  serve_cmd->add_flag("--json", serve_opts.as_json, "Lifecycle events as JSON lines");
  serve_cmd->callback([&] {
    ShardSet set = ShardSet::load(require_shard_dir(serve_opts));
    Engine engine(set, make_env(serve_opts));
    ServerOptions so;
    so.socket_path = fs::absolute(serve_socket);
    if (!serve_telemetry.empty()) so.telemetry_path = fs::absolute(serve_telemetry);
    so.warm_on_start = !serve_no_warm;
    Server server(engine, so);
    server.start();
    g_server.store(&server);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    if (serve_opts.as_json) {
      std::cout << json{{"event", "listening"}, {"socket", so.socket_path.string()}, {"shards", set.count()},
                        {"bytes_warmed", server.bytes_warmed()}}.dump()
                << std::endl;
    } else {
      std::cerr << "listening on " << so.socket_path.string() << " (" << set.count() << " shards, "
                << server.bytes_warmed() << " bytes warmed)" << std::endl;
    }
    server.serve();
    g_server.store(nullptr);
    if (serve_opts.as_json) {
      std::cout << json{{"event", "stopped"}, {"requests", server.requests_handled()}}.dump() << std::endl;
    } else {
      std::cerr << "stopped after " << server.requests_handled() << " requests" << std::endl;
    }
  });

  // client
  Common client_opts;
  std::string client_socket = default_socket_path().string(), client_command;
  std::size_t client_tokens = kDefaultMaxOutputTokens;
  std::optional<double> client_timeout;
  auto* client_cmd = app.add_subcommand("client", "Send one pipeline to a running daemon");
  client_cmd->add_option("command", client_command, "Pipeline")->required();
  client_cmd->add_option("--socket", client_socket, "Socket path [$SHARDPIPE_SOCKET]");
  client_cmd->add_option("--max-output-tokens", client_tokens, "Whitespace-token budget for stdout")
      ->check(CLI::PositiveNumber);
  client_cmd->add_option("--timeout", client_timeout, "Per-request timeout in seconds");
  client_cmd->add_flag("--json", client_opts.as_json, "Print the whole response frame");
  client_cmd->callback([&] {
    try {
      Client client(client_socket);
      ResponseFrame r = client.request({client_command, client_tokens, client_timeout});
      if (client_opts.as_json) {
        std::cout << r.to_json().dump(-1, ' ', false, json::error_handler_t::replace) << "\n";
      } else {
        print_outcome(r.stdout_bytes, r.stderr_text);
      }
      rc = r.exit_code;
    } catch (const TransportError& e) {
      std::cerr << "shardpipe: " << e.what() << "\n";
      rc = kTransport;
    }
  });

  // fuzz-diff
  std::size_t fuzz_seeds = 500, fuzz_lines = 100'000;
  std::uint64_t fuzz_seed = 1;
  std::string fuzz_counts = "1,2,3,4,8", fuzz_work, fuzz_bundles, fuzz_replay;
  bool fuzz_no_uniq = false, fuzz_json = false, fuzz_verbose = false;
  auto* fuzz_cmd = app.add_subcommand("fuzz-diff", "Differential test: engine vs sequential oracle, byte for byte");
  fuzz_cmd->add_option("--seeds", fuzz_seeds, "Number of generated pipelines");
  fuzz_cmd->add_option("--seed", fuzz_seed, "Base seed for corpus and pipelines");
  fuzz_cmd->add_option("--lines", fuzz_lines, "Synthetic corpus lines");
  fuzz_cmd->add_option("--shards", fuzz_counts, "Comma-separated shard counts");
  fuzz_cmd->add_option("--work-dir", fuzz_work, "Scratch directory (default: a fresh temp dir)");
  fuzz_cmd->add_option("--bundle-dir", fuzz_bundles, "Write minimized reproduction bundles here");
  fuzz_cmd->add_option("--replay", fuzz_replay, "Replay one bundle instead of fuzzing");
  fuzz_cmd->add_flag("--no-local-uniq", fuzz_no_uniq, "Disable per-shard uniq in SortHead (known-bad engine)");
  fuzz_cmd->add_flag("--verbose,-v", fuzz_verbose, "One line per pipeline");
  fuzz_cmd->add_flag("--json", fuzz_json, "Print the report as JSON");
  fuzz_cmd->callback([&] {
    if (!fuzz_replay.empty()) {
      Verdict v = replay_bundle(fuzz_replay);
      if (fuzz_json) {
        std::cout << v.to_json().dump() << "\n";
      } else {
        std::cout << (v.pass ? "PASS  " : "FAIL  ") << v.command << "\n";
      }
      rc = v.pass ? kOk : kInternal;
      return;
    }
    FuzzOptions fo;
    fo.seed = fuzz_seed;
    fo.pipelines = fuzz_seeds;
    fo.lines = fuzz_lines;
    fo.shard_counts = parse_counts(fuzz_counts);
    fo.local_uniq = !fuzz_no_uniq;
    bool temp = fuzz_work.empty();
    fo.work_dir = temp ? fs::temp_directory_path() / ("shardpipe-fuzz-" + std::to_string(::getpid())) : fs::path(fuzz_work);
    if (!fuzz_bundles.empty()) fo.bundle_dir = fs::absolute(fuzz_bundles);
    if (fuzz_verbose) {
      fo.on_verdict = [](std::size_t i, const Verdict& v) {
        std::cerr << i << " " << (v.pass ? "PASS" : "FAIL") << " [" << v.strategy << "] " << v.command << "\n";
      };
    }
    FuzzReport report = fuzz_session(fo);
    if (temp) {
      std::error_code ec;
      fs::remove_all(fo.work_dir, ec);
    }
    if (fuzz_json) {
      std::cout << report.to_json().dump(-1, ' ', false, json::error_handler_t::replace) << "\n";
    } else {
      std::cout << "pipelines " << report.total << "  passed " << report.passed << "  parallel runs "
                << report.parallel_runs << "  " << report.seconds << " s\n";
      for (const auto& [cls, n] : report.histogram) std::cout << "  " << cls << ": " << n << "\n";
      for (const auto& f : report.failures) {
        std::cout << "FAIL " << f.command;
        if (f.bundle) std::cout << "  bundle " << f.bundle->string();
        std::cout << "\n";
      }
      if (!report.coverage_ok()) std::cout << "coverage gate: not every class was drawn\n";
    }
    rc = report.ok() ? kOk : kInternal;
  });

  // score
  std::string score_input;
  bool score_json = false;
  auto* score_cmd = app.add_subcommand(
      "score",
      "Score JSON lines {prediction|trajectory, references[]}: EM, token F1, gated reward.\n"
      "Normalization lowercases, deletes punctuation (hyphens included, so multi-hop -> multihop),\n"
      "drops a/an/the and splits on whitespace.");
  score_cmd->add_option("--input,-i", score_input, "JSON-lines file (default stdin)");
  score_cmd->add_flag("--json", score_json, "JSON lines output");
  score_cmd->callback([&] {
    std::ifstream file;
    std::istream* in = &std::cin;
    if (!score_input.empty()) {
      file.open(score_input);
      if (!file) throw std::runtime_error("cannot read " + score_input);
      in = &file;
    }
    double sum_em = 0, sum_f1 = 0, sum_r = 0;
    std::size_t rows = 0, lineno = 0;
    for (std::string line; std::getline(*in, line);) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json row = json::parse(line);
      auto refs = row.at("references").get<std::vector<std::string>>();
      double em, f1, r;
      if (row.contains("trajectory")) {
        std::string t = row["trajectory"].get<std::string>();
        std::string ans = extract_last_answer(t).value_or("");
        em = exact_match(ans, refs);
        f1 = best_f1(ans, refs);
        r = reward(t, refs);
      } else {
        std::string p = row.at("prediction").get<std::string>();
        em = exact_match(p, refs);
        f1 = best_f1(p, refs);
        r = f1;
      }
      ++rows;
      sum_em += em;
      sum_f1 += f1;
      sum_r += r;
      if (score_json) {
        std::cout << json{{"line", lineno}, {"em", em}, {"f1", f1}, {"reward", r}}.dump() << "\n";
      } else {
        std::printf("%6zu  em=%.0f  f1=%.4f  reward=%.4f\n", lineno, em, f1, r);
      }
    }
    double n = rows ? static_cast<double>(rows) : 1.0;
    if (score_json) {
      std::cout << json{{"rows", rows}, {"mean_em", sum_em / n}, {"mean_f1", sum_f1 / n}, {"mean_reward", sum_r / n}}.dump()
                << "\n";
    } else {
      std::printf("rows %zu  mean em=%.4f  f1=%.4f  reward=%.4f\n", rows, sum_em / n, sum_f1 / n, sum_r / n);
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const ShardError& e) {
    std::cerr << "shardpipe: " << e.what() << "\n";
    return e.code() == ShardError::Code::InvalidShardCount ? kUsage : kInternal;
  } catch (const DaemonError& e) {
    std::cerr << "shardpipe: " << e.what() << "\n";
    return e.code() == DaemonError::Code::BindFailure ? kTransport : kInternal;
  } catch (const EmptyReferenceSet& e) {
    std::cerr << "shardpipe: " << e.what() << "\n";
    return kUsage;
  } catch (const json::exception& e) {
    std::cerr << "shardpipe: bad JSON input: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "shardpipe: " << e.what() << "\n";
    return kInternal;
  }
  return rc;
}
