#include "shardpipe/harness.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "shardpipe/digest.hpp"
#include "shardpipe/pipeline.hpp"

namespace shardpipe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string>& common_words() {
  static const std::vector<std::string> words{
      "the", "of", "and", "in", "to", "was", "is", "for", "on", "as", "by", "with", "he", "she", "at", "from",
      "his", "her", "an", "which", "also", "first", "born", "city", "river", "film", "album", "band", "team",
      "league", "season", "station", "village", "county", "district", "church", "school", "university",
      "company", "founded", "released", "located", "known", "former", "member", "population", "census",
      "record", "game", "series", "north", "south", "east", "west", "new", "old", "head", "office", "group",
      "acid", "games", "york", "war", "state", "national", "american", "british", "french", "german",
      "1998", "2004", "1871", "42", "7", "İstanbul", "café", "Zürich", "naïve", "São", "Kraków", "東京",
      "Ελλάδα", "Москва", "a", "The", "In", "It", "Its", "This"};
  return words;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw HarnessError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw HarnessError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw HarnessError("write failed: " + p.string());
}

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

bool on_path(const std::string& program) {
  const char* path = std::getenv("PATH");
  if (!path) return false;
  std::stringstream ss(path);
  std::string dir;
  while (std::getline(ss, dir, ':')) {
    if (dir.empty()) continue;
    if (::access((fs::path(dir) / program).c_str(), X_OK) == 0) return true;
  }
  return false;
}

struct Outcome {
  std::string out;
  int exit_code = 0;
};

Outcome oracle(const std::string& command, const fs::path& corpus, const ExecEnv& env) {
  Pipeline p;
  try {
    p = parse_pipeline(command, ParseOptions{env.corpus_name});
  } catch (const ParseError&) {
    return {"", 2};
  }
  ShardResult r = exec_sequential(p, corpus, env);
  return {std::move(r.out), aggregate_exit(std::span<const ShardResult>(&r, 1))};
}

std::vector<std::string> split_lines_keep(const std::string& bytes) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    auto nl = bytes.find('\n', pos);
    std::size_t end = nl == std::string::npos ? bytes.size() : nl + 1;
    lines.emplace_back(bytes.substr(pos, end - pos));
    pos = end;
  }
  return lines;
}

std::string join(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l;
  return out;
}

}  // namespace

const std::vector<std::string>& planted_phrases() {
  static const std::vector<std::string> phrases{
      "picric acid",   "Oberoi Group",     "Rockstar San Diego", "Rockstar Games",  "head office",
      "Faith Lutheran", "Citibank",        "Joggers",            "Arndt",           "Vaillant",
      "Scotland Yard", "İstanbul Airport", "trinitrophenol",     "Sam Houser",      "Las Vegas"};
  return phrases;
}

std::string default_search_tool() { return on_path("rg") ? "rg" : "grep"; }

void gen_corpus(const fs::path& out, std::uint64_t seed, std::size_t lines, std::size_t avg_len) {
  std::mt19937_64 rng(seed);
  const auto& words = common_words();
  const auto& phrases = planted_phrases();
  std::uniform_int_distribution<std::size_t> pick_word(0, words.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Zipf-like: earlier phrases are planted more often
  std::vector<double> pw;
  for (std::size_t k = 0; k < phrases.size(); ++k) pw.push_back(1.0 / static_cast<double>(k + 1));
  std::discrete_distribution<std::size_t> pick_phrase(pw.begin(), pw.end());
  std::uniform_int_distribution<std::size_t> len_dist(std::max<std::size_t>(avg_len / 2, 1), avg_len + avg_len / 2);

  std::string buf;
  std::vector<std::string> recent;
  for (std::size_t i = 0; i < lines; ++i) {
    std::string line;
    double u = unit(rng);
    if (u < 0.004) {
      // the same record many times over: sorts first and floods shards
      line = "{\"id\":\"a-flood\",\"contents\":\"picric acid\"}";
    } else if (u < 0.03 && !recent.empty()) {
      line = recent[std::uniform_int_distribution<std::size_t>(0, recent.size() - 1)(rng)];
    } else {
      std::string text;
      const std::size_t target = len_dist(rng);
      bool planted = unit(rng) < 0.06;
      std::size_t plant_at = planted ? std::uniform_int_distribution<std::size_t>(0, 6)(rng) : SIZE_MAX;
      std::size_t n = 0;
      while (text.size() < target) {
        if (!text.empty()) text.push_back(' ');
        if (n == plant_at) {
          text += phrases[pick_phrase(rng)];
        } else {
          text += words[pick_word(rng)];
        }
        ++n;
      }
      if (planted && plant_at >= n) text += " " + phrases[pick_phrase(rng)];
      char id[32];
      std::snprintf(id, sizeof(id), "d%07zu", i);
      line = std::string("{\"id\":\"") + id + "\",\"contents\":\"" + text + "\"}";
      if (recent.size() < 512) {
        recent.push_back(line);
      } else {
        recent[std::uniform_int_distribution<std::size_t>(0, recent.size() - 1)(rng)] = line;
      }
    }
    buf += line;
    buf.push_back('\n');
  }
  try {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_file(out, buf);
  } catch (const std::exception& e) {
    throw HarnessError(std::string("IoFailure: ") + e.what());
  }
}

GeneratedPipeline PipelineGrammar::draw(std::uint64_t seed) const {
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
  auto uniform = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  auto chance = [&](double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; };

  std::vector<std::string> vocab = vocabulary;
  if (vocab.empty()) {
    vocab = planted_phrases();
    for (const char* w : {"acid", "head", "office", "games", "river", "café", "Zürich", "league", "1998", "station"}) {
      vocab.emplace_back(w);
    }
  }
  const std::string& T = search_tool;
  auto pattern = [&]() -> std::string {
    if (chance(0.7)) return planted_phrases()[uniform(0, planted_phrases().size() - 1)];
    return vocab[uniform(0, vocab.size() - 1)];
  };
  auto word = [&]() -> std::string {
    static const std::vector<std::string> w{"acid", "head", "office", "games", "river", "city", "group", "film"};
    return w[uniform(0, w.size() - 1)];
  };

  auto filter = [&]() -> std::string {
    switch (uniform(0, 6)) {
      case 0: return T + " -F " + quoted(pattern()) + " corpus.jsonl";
      case 1: return T + " -i -F " + quoted(pattern()) + " corpus.jsonl";
      case 2: return T + " -w -F " + quoted(word()) + " corpus.jsonl";
      case 3: return T + " -F -e " + quoted(pattern()) + " corpus.jsonl";
      case 4: return T + " -F " + quoted(word()) + " corpus.jsonl | " + T + " -i -F " + quoted(pattern());
      case 5: return T + " -o -i -F " + quoted(word()) + " corpus.jsonl";
      default: return T + " -v -F " + quoted(word()) + " corpus.jsonl | " + T + " -F " + quoted(pattern());
    }
  };
  auto extras = [&]() {
    std::string s;
    std::size_t n = uniform(0, 2);
    for (std::size_t i = 0; i < n; ++i) {
      switch (uniform(0, 6)) {
        case 0: s += " | " + T + " -i -F " + quoted(word()); break;
        case 1: s += " | cut -c 1-" + std::to_string(uniform(10, 80)); break;
        case 2: s += " | cut -d ':' -f " + std::to_string(uniform(1, 3)); break;
        case 3: s += " | tr a-z A-Z"; break;
        case 4: s += " | tr -d '{}'"; break;
        case 5: s += " | sed 's/contents/text/g'"; break;
        default: s += " | sed 's/[0-9]//g'"; break;
      }
    }
    return s;
  };
  auto k = [&] { return std::to_string(uniform(1, 20)); };

  static const std::vector<std::string> classes{"Concat", "Head", "Count", "SortHead", "Sequential",
                                                std::string(kRejected)};
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  const std::size_t cls = pick(rng);
  GeneratedPipeline g;
  g.expected_class = classes[cls];
  switch (cls) {
    case 0: g.command = filter() + extras(); break;
    case 1: g.command = filter() + extras() + " | head -n " + k(); break;
    case 2: g.command = filter() + extras() + " | wc -l"; break;
    case 3: {
      if (chance(0.3)) {
        // record ids: the flood record's id sorts first and repeats within a shard
        g.command = T + " -F " + quoted(chance(0.5) ? "acid" : "picric") + " corpus.jsonl | cut -d '\"' -f 4 | sort" +
                    (chance(0.75) ? " | uniq" : "") + " | head -n " + std::to_string(uniform(2, 6));
        break;
      }
      // -o and narrow cuts make duplicate-heavy input for the merge
      std::string src = chance(0.4) ? T + " -o -F " + quoted(word()) + " corpus.jsonl" : filter() + extras();
      g.command = src + (chance(0.5) ? " | sort | uniq" : " | sort") + " | head -n " + k();
      break;
    }
    case 4: {
      const std::string p = quoted(pattern());
      switch (uniform(0, 10)) {
        case 0: g.command = T + " -n -F " + p + " corpus.jsonl | head -n " + k(); break;
        case 1: g.command = T + " -c -F " + p + " corpus.jsonl"; break;
        case 2: g.command = T + " -C 1 -F " + p + " corpus.jsonl | head -n " + k(); break;
        case 3: g.command = T + " -F " + p + " corpus.jsonl | tail -n " + k(); break;
        case 4: g.command = T + " -F " + p + " corpus.jsonl | head -n " + k() + " | wc -l"; break;
        case 5: g.command = T + " -F " + p + " corpus.jsonl | awk '{print length($0)}' | head -n " + k(); break;
        case 6: g.command = T + " -F " + p + " corpus.jsonl | sort -r | head -n " + k(); break;
        case 7: g.command = T + " -F " + p + " corpus.jsonl | uniq -c | head -n " + k(); break;
        case 8: g.command = "head -n " + k() + " corpus.jsonl"; break;
        case 9: g.command = T + " -m 2 -F " + p + " corpus.jsonl"; break;
        default: g.command = T + " -o -F " + quoted(word()) + " corpus.jsonl | sort | uniq -c | sort -rn | head -n " + k(); break;
      }
      break;
    }
    default: {
      const std::string p = quoted(pattern());
      switch (uniform(0, 7)) {
        case 0: g.command = T + " -F " + p + " corpus.jsonl > out.txt"; break;
        case 1: g.command = T + " -F " + p + " corpus.jsonl; ls"; break;
        case 2: g.command = T + " -F " + p + " corpus.jsonl && ls"; break;
        case 3: g.command = T + " -F $(echo acid) corpus.jsonl"; break;
        case 4: g.command = T + " -F `ls` corpus.jsonl"; break;
        case 5: g.command = T + " -F " + p + " < corpus.jsonl"; break;
        case 6: g.command = T + " -F " + p + " corpus.jsonl | python3 -c 1"; break;
        default: g.command = T + " -F " + p + " /etc/passwd"; break;
      }
      break;
    }
  }
  return g;
}

std::string command_class(const std::string& command, const std::string& corpus_name) {
  try {
    return std::string(to_string(classify(parse_pipeline(command, ParseOptions{corpus_name})).kind));
  } catch (const ParseError&) {
    return std::string(kRejected);
  }
}

json Verdict::to_json() const {
  json cases_json = json::array();
  for (const auto& c : cases) {
    cases_json.push_back({{"shards", c.shard_count},
                          {"pass", c.pass},
                          {"exit", c.parallel_exit},
                          {"ran_parallel", c.ran_parallel}});
  }
  json j{{"command", command},
         {"class", strategy},
         {"pass", pass},
         {"sequential_exit", sequential_exit},
         {"cases", cases_json}};
  if (bundle) j["bundle"] = bundle->string();
  return j;
}

DiffRunner::DiffRunner(fs::path corpus, fs::path work_dir, std::vector<std::size_t> shard_counts, ExecEnv env)
    : corpus_(fs::absolute(corpus)),
      work_dir_(fs::absolute(work_dir)),
      shard_counts_(std::move(shard_counts)),
      env_(std::move(env)) {
  fs::create_directories(work_dir_);
  for (std::size_t s : shard_counts_) {
    ShardSet set = shard(corpus_, s, work_dir_ / ("s" + std::to_string(s)));
    engines_.emplace_back(corpus_, std::move(set), env_);
  }
}

Verdict DiffRunner::diff_run(const std::string& command) const {
  Verdict v;
  v.command = command;
  v.strategy = command_class(command, env_.corpus_name);
  Outcome seq = oracle(command, corpus_, env_);
  v.sequential_out = seq.out;
  v.sequential_exit = seq.exit_code;
  for (std::size_t i = 0; i < engines_.size(); ++i) {
    ExecOutcome o = engines_[i].run(command);
    DiffCase c;
    c.shard_count = shard_counts_[i];
    c.ran_parallel = o.telemetry.ran_parallel();
    c.parallel_exit = o.exit_code;
    c.pass = o.out == seq.out && o.exit_code == seq.exit_code;
    if (!c.pass) c.parallel_out = std::move(o.out);
    v.pass = v.pass && c.pass;
    v.cases.push_back(std::move(c));
  }
  return v;
}

Verdict DiffRunner::diff_run_with_bundle(const std::string& command, const fs::path& bundle_root) const {
  Verdict v = diff_run(command);
  if (v.pass) return v;
  auto failing = std::find_if(v.cases.begin(), v.cases.end(), [](const DiffCase& c) { return !c.pass; });
  const std::size_t s = failing->shard_count;
  const std::string tag = sha256_hex(command + "#" + std::to_string(s)).substr(0, 12);
  const fs::path scratch = work_dir_ / ("min-" + tag);
  std::string slice = minimize_corpus(read_file(corpus_), command, s, env_, scratch);

  // outputs on the minimized slice
  write_file(scratch / "slice.jsonl", slice);
  DiffRunner small(scratch / "slice.jsonl", scratch / "final", {s}, env_);
  Verdict sv = small.diff_run(command);
  v.bundle = write_bundle(bundle_root / ("bundle-" + tag), slice, command, s, env_, sv.sequential_out,
                          sv.cases.front().parallel_out);
  std::error_code ec;
  fs::remove_all(scratch, ec);
  return v;
}

std::string minimize_corpus(const std::string& corpus_bytes, const std::string& command, std::size_t shard_count,
                            const ExecEnv& env, const fs::path& scratch, std::size_t max_runs) {
  fs::create_directories(scratch);
  std::size_t runs = 0;
  auto fails = [&](const std::vector<std::string>& lines) {
    ++runs;
    const fs::path corpus = scratch / "candidate.jsonl";
    write_file(corpus, join(lines));
    ShardSet set = shard(corpus, shard_count, scratch / "shards");
    Engine engine(corpus, std::move(set), env);
    Outcome seq = oracle(command, corpus, env);
    ExecOutcome par = engine.run(command);
    return par.out != seq.out || par.exit_code != seq.exit_code;
  };

  std::vector<std::string> lines = split_lines_keep(corpus_bytes);
  std::size_t n = 2;
  while (lines.size() >= 2 && runs < max_runs) {
    const std::size_t chunk = (lines.size() + n - 1) / n;
    bool reduced = false;
    for (std::size_t start = 0; start < lines.size() && runs < max_runs; start += chunk) {
      std::vector<std::string> candidate;
      candidate.reserve(lines.size());
      candidate.insert(candidate.end(), lines.begin(), lines.begin() + static_cast<std::ptrdiff_t>(start));
      candidate.insert(candidate.end(), lines.begin() + static_cast<std::ptrdiff_t>(std::min(start + chunk, lines.size())),
                       lines.end());
      if (fails(candidate)) {
        lines = std::move(candidate);
        n = std::max<std::size_t>(n - 1, 2);
        reduced = true;
        break;
      }
    }
    if (!reduced) {
      if (n >= lines.size()) break;
      n = std::min(lines.size(), n * 2);
    }
  }
  return join(lines);
}

fs::path write_bundle(const fs::path& dir, const std::string& corpus_bytes, const std::string& command,
                      std::size_t shard_count, const ExecEnv& env, const std::string& sequential_out,
                      const std::string& parallel_out) {
  fs::create_directories(dir);
  write_file(dir / "corpus.jsonl", corpus_bytes);
  write_file(dir / "command.txt", command + "\n");
  write_file(dir / "sequential.out", sequential_out);
  write_file(dir / "parallel.out", parallel_out);
  json meta{{"command", command},
            {"shard_count", shard_count},
            {"sorthead_local_uniq", env.sorthead_local_uniq},
            {"corpus_name", env.corpus_name},
            {"corpus_lines", count_lines(corpus_bytes)}};
  write_file(dir / "meta.json", meta.dump(2) + "\n");
  return dir;
}

Verdict replay_bundle(const fs::path& dir) {
  json meta;
  try {
    meta = json::parse(read_file(dir / "meta.json"));
  } catch (const json::exception& e) {
    throw HarnessError("bad bundle meta: " + std::string(e.what()));
  }
  ExecEnv env;
  env.sorthead_local_uniq = meta.value("sorthead_local_uniq", true);
  env.corpus_name = meta.value("corpus_name", env.corpus_name);
  const std::size_t s = meta.at("shard_count").get<std::size_t>();
  DiffRunner runner(dir / "corpus.jsonl", dir / "replay", {s}, env);
  Verdict v = runner.diff_run(meta.at("command").get<std::string>());
  std::error_code ec;
  fs::remove_all(dir / "replay", ec);
  return v;
}

bool FuzzReport::coverage_ok() const {
  for (const char* c : {"Concat", "Head", "Count", "SortHead", "Sequential", "Rejected"}) {
    auto it = histogram.find(c);
    if (it == histogram.end() || it->second == 0) return false;
  }
  return true;
}

json FuzzReport::to_json() const {
  json failures_json = json::array();
  for (const auto& f : failures) failures_json.push_back(f.to_json());
  return {{"total", total},       {"passed", passed},     {"parallel_runs", parallel_runs},
          {"histogram", histogram}, {"coverage_ok", coverage_ok()}, {"ok", ok()},
          {"seconds", seconds},   {"failures", failures_json}};
}

FuzzReport fuzz_session(const FuzzOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  if (options.work_dir.empty()) throw HarnessError("fuzz_session needs a work directory");
  fs::create_directories(options.work_dir);
  const fs::path corpus = options.work_dir / "corpus.jsonl";
  gen_corpus(corpus, options.seed, options.lines, options.avg_len);

  ExecEnv env;
  env.sorthead_local_uniq = options.local_uniq;
  DiffRunner runner(corpus, options.work_dir / "shards", options.shard_counts, env);
  PipelineGrammar grammar;

  FuzzReport report;
  for (std::size_t i = 0; i < options.pipelines; ++i) {
    GeneratedPipeline g = grammar.draw(options.seed * 1'000'003ULL + i);
    Verdict v = options.bundle_dir ? runner.diff_run_with_bundle(g.command, *options.bundle_dir)
                                   : runner.diff_run(g.command);
    ++report.total;
    ++report.histogram[v.strategy];
    for (const auto& c : v.cases) report.parallel_runs += c.ran_parallel ? 1 : 0;
    if (v.pass) {
      ++report.passed;
    } else {
      report.failures.push_back(v);
    }
    if (options.on_verdict) options.on_verdict(i, v);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

Counterexample sorthead_counterexample() {
  Counterexample c;
  for (int i = 0; i < 5; ++i) c.corpus += "a\n";
  c.corpus += "b\nc\n";
  for (int i = 0; i < 5; ++i) c.corpus += "z\n";
  c.command = default_search_tool() + " -v -F z corpus.jsonl | sort | uniq | head -n 2";
  c.shard_count = 2;
  c.expected = "a\nb\n";
  return c;
}

}  // namespace shardpipe
