#include "shardpipe/classifier.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "shardpipe/tool_args.hpp"

namespace shardpipe {

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Concat: return "Concat";
    case StrategyKind::Head: return "Head";
    case StrategyKind::Count: return "Count";
    case StrategyKind::SortHead: return "SortHead";
    case StrategyKind::Sequential: return "Sequential";
  }
  return "Sequential";
}

std::string describe(const ReductionStrategy& s) {
  std::string out(to_string(s.kind));
  if (s.kind == StrategyKind::Head) {
    out += "(" + std::to_string(*s.n) + ")";
  } else if (s.kind == StrategyKind::SortHead) {
    out += "(" + std::to_string(*s.n) + (s.with_uniq ? ",uniq)" : ")");
  }
  return out;
}

namespace {

bool is_search_tool(std::string_view tool) { return tool == "rg" || tool == "grep"; }

bool options_within(const ScannedArgs& scanned, const std::set<std::string_view>& allowed) {
  return std::all_of(scanned.options.begin(), scanned.options.end(),
                     [&](const ToolOption& o) { return allowed.contains(o.name); });
}

std::optional<std::size_t> parse_positive(std::string_view s) {
  if (s.empty() || s.size() > 18) return std::nullopt;
  std::size_t v = 0;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  if (v == 0) return std::nullopt;
  return v;
}

// Minimal sed script reader: enough to tell plain `s///[g]` substitutions
// apart from addressed, hold-space and multi-line commands.
struct SedScriptInfo {
  bool addressed = false;
  bool hold_or_multiline = false;
  bool only_simple_substitutions = true;
};

SedScriptInfo analyze_sed_script(std::string_view script) {
  SedScriptInfo info;
  std::size_t i = 0;
  auto skip_blank = [&] {
    while (i < script.size() && (script[i] == ' ' || script[i] == '\t' || script[i] == ';')) ++i;
  };
  // Returns false when the delimited section is unterminated.
  auto skip_delimited = [&](char delim) {
    while (i < script.size()) {
      if (script[i] == '\\') {
        i += 2;
        continue;
      }
      if (script[i] == delim) {
        ++i;
        return true;
      }
      ++i;
    }
    return false;
  };

  skip_blank();
  if (i == script.size()) info.only_simple_substitutions = false;
  while (i < script.size()) {
    char c = script[i];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '$' || c == '/' || c == '\\') {
      info.addressed = true;
      info.only_simple_substitutions = false;
      return info;
    }
    if (std::string_view("NDGHnxghP").find(c) != std::string_view::npos) {
      info.hold_or_multiline = true;
      info.only_simple_substitutions = false;
      return info;
    }
    if (c != 's' || i + 1 >= script.size()) {
      info.only_simple_substitutions = false;
      return info;
    }
    char delim = script[i + 1];
    if (delim == '\\' || delim == '\n') {
      info.only_simple_substitutions = false;
      return info;
    }
    i += 2;
    if (!skip_delimited(delim) || !skip_delimited(delim)) {
      info.only_simple_substitutions = false;
      return info;
    }
    std::size_t flags_begin = i;
    while (i < script.size() && script[i] != ';' && script[i] != ' ' && script[i] != '\t') ++i;
    std::string_view flags = script.substr(flags_begin, i - flags_begin);
    if (!(flags.empty() || flags == "g")) {
      info.only_simple_substitutions = false;
      return info;
    }
    skip_blank();
  }
  return info;
}

std::vector<std::string> sed_scripts(const Stage& stage, const ScannedArgs& scanned) {
  std::vector<std::string> scripts;
  for (const auto& o : scanned.options) {
    if ((o.name == "-e" || o.name == "--expression") && o.value) scripts.push_back(*o.value);
  }
  for (auto idx : scanned.operands_with(OperandRole::Pattern)) scripts.push_back(stage.args[idx]);
  return scripts;
}

// A translation set is newline-safe when it cannot name '\n': no escapes, no
// bytes below the space character (ranges could span 0x0a), and only
// bracket classes that exclude newline in the C locale.
bool tr_set_newline_safe(std::string_view set) {
  static const std::set<std::string_view> kClasses{
      "[:alpha:]", "[:alnum:]", "[:digit:]", "[:lower:]", "[:upper:]",
      "[:punct:]", "[:blank:]", "[:xdigit:]", "[:print:]", "[:graph:]"};
  for (std::size_t i = 0; i < set.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(set[i]);
    if (c == '\\' || c < 0x20 || c == 0x7f) return false;
    if (c == '[') {
      auto close = set.find(":]", i);
      if (close == std::string_view::npos) return false;
      if (!kClasses.contains(set.substr(i, close + 2 - i))) return false;
      i = close + 1;
    }
  }
  return true;
}

const std::set<std::string_view> kSearchStatelessFlags{
    "-F", "--fixed-strings", "-i", "--ignore-case", "-w", "--word-regexp", "-v", "--invert-match",
    "-e", "--regexp", "-o", "--only-matching", "--mmap", "--no-config"};

}  // namespace

std::optional<std::size_t> head_limit(const Stage& stage) {
  if (stage.tool != "head") return std::nullopt;
  ScannedArgs scanned = scan_args(stage);
  if (scanned.options.size() != 1 || !scanned.operands.empty()) return std::nullopt;
  const ToolOption& o = scanned.options.front();
  if ((o.name != "-n" && o.name != "--lines") || !o.value) return std::nullopt;
  return parse_positive(*o.value);
}

bool is_line_count(const Stage& stage) {
  if (stage.tool != "wc") return false;
  ScannedArgs scanned = scan_args(stage);
  return scanned.operands.empty() && scanned.options.size() == 1 &&
         (scanned.options[0].name == "-l" || scanned.options[0].name == "--lines") && !scanned.options[0].value;
}

bool is_plain_sort(const Stage& stage) { return stage.tool == "sort" && stage.args.empty(); }
bool is_plain_uniq(const Stage& stage) { return stage.tool == "uniq" && stage.args.empty(); }

SafetyVerdict is_unsafe(const Stage& stage) {
  const std::string& t = stage.tool;
  ScannedArgs scanned = scan_args(stage);
  auto unsafe = [](std::string reason) { return SafetyVerdict{false, std::move(reason)}; };

  if (is_search_tool(t)) {
    if (scanned.has_any({"-n", "--line-number", "--column"})) return unsafe("line-indexing flag");
    if (scanned.has_any({"-c", "--count", "--count-matches"})) return unsafe("count-based mode");
    if (scanned.has_any({"-A", "-B", "-C", "--after-context", "--before-context", "--context"})) {
      return unsafe("contextual windowing");
    }
    if (scanned.has_any({"-m", "--max-count"})) return unsafe("per-file match limit");
    if (scanned.has_any({"-l", "-L", "-H", "--files-with-matches", "--files-without-match", "--with-filename"})) {
      return unsafe("file identity");
    }
    if (scanned.has_any({"-b", "--byte-offset"})) return unsafe("byte offset");
    if (scanned.has_any({"-U", "--multiline", "--multiline-dotall", "-z", "--null-data"})) {
      return unsafe("cross-line matching");
    }
    return {};
  }
  if (t == "sed") {
    if (scanned.has_any({"-i", "--in-place"})) return unsafe("in-place transformation");
    if (scanned.has_any({"-z", "--null-data", "-s", "--separate"})) return unsafe("cross-line record mode");
    for (const auto& script : sed_scripts(stage, scanned)) {
      SedScriptInfo info = analyze_sed_script(script);
      if (info.addressed) return unsafe("line-addressed sed command");
      if (info.hold_or_multiline) return unsafe("hold-space or multi-line sed command");
    }
    return {};
  }
  if (t == "awk") return unsafe("awk program is globally stateful");
  if (t == "tail") return unsafe("tail needs the global suffix");
  if (t == "cat" || t == "find" || t == "ls") return unsafe("whole-input or host-dependent tool");
  if (t == "head") {
    return head_limit(stage) ? SafetyVerdict{} : unsafe("unsupported head mode");
  }
  if (t == "wc") return is_line_count(stage) ? SafetyVerdict{} : unsafe("unsupported wc mode");
  if (t == "sort") return is_plain_sort(stage) ? SafetyVerdict{} : unsafe("unsupported sort flag");
  if (t == "uniq") return is_plain_uniq(stage) ? SafetyVerdict{} : unsafe("unsupported uniq flag");
  if (t == "cut") {
    if (!options_within(scanned, {"-d", "-f", "-c", "--delimiter", "--fields", "--characters"})) {
      return unsafe("unsupported cut flag");
    }
    return {};
  }
  if (t == "tr") {
    if (!options_within(scanned, {"-d", "--delete"})) return unsafe("unsupported tr flag");
    for (const auto& op : scanned.operands) {
      if (!tr_set_newline_safe(stage.args[op.arg_index])) return unsafe("translation set may touch newline");
    }
    return {};
  }
  return unsafe("unknown tool");
}

bool is_stateless(const Stage& stage) {
  if (!is_unsafe(stage).safe) return false;
  const std::string& t = stage.tool;
  ScannedArgs scanned = scan_args(stage);
  if (is_search_tool(t)) return options_within(scanned, kSearchStatelessFlags);
  if (t == "cut") return scanned.has_any({"-f", "-c", "--fields", "--characters"});
  if (t == "tr") {
    bool del = scanned.has_any({"-d", "--delete"});
    return scanned.operands.size() == (del ? 1u : 2u);
  }
  if (t == "sed") {
    if (!options_within(scanned, {"-e", "--expression", "-E", "-r", "--regexp-extended"})) return false;
    auto scripts = sed_scripts(stage, scanned);
    if (scripts.empty()) return false;
    return std::all_of(scripts.begin(), scripts.end(),
                       [](const std::string& s) { return analyze_sed_script(s).only_simple_substitutions; });
  }
  return false;
}

ReductionStrategy classify(const Pipeline& pipeline) {
  const auto& stages = pipeline.stages;
  if (stages.empty() || !is_search_tool(stages.front().tool)) return ReductionStrategy::sequential();
  for (const auto& s : stages) {
    if (!is_unsafe(s).safe) return ReductionStrategy::sequential();
  }

  const std::size_t m = stages.size();
  auto stateless_prefix = [&](std::size_t end) {
    for (std::size_t j = 0; j < end; ++j) {
      if (!is_stateless(stages[j])) return false;
    }
    return true;
  };

  if (auto n = head_limit(stages.back()); n && stateless_prefix(m - 1)) {
    return ReductionStrategy::head(*n);
  }
  if (is_line_count(stages.back()) && stateless_prefix(m - 1)) {
    return ReductionStrategy::count();
  }
  if (auto n = head_limit(stages.back()); n && m >= 3) {
    if (is_plain_sort(stages[m - 2]) && stateless_prefix(m - 2)) {
      return ReductionStrategy::sort_head(*n, false);
    }
    if (m >= 4 && is_plain_uniq(stages[m - 2]) && is_plain_sort(stages[m - 3]) && stateless_prefix(m - 3)) {
      return ReductionStrategy::sort_head(*n, true);
    }
  }
  if (stateless_prefix(m)) return ReductionStrategy::concat();
  return ReductionStrategy::sequential();
}

}  // namespace shardpipe
