#include "shardpipe/tool_args.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace shardpipe {

namespace {

struct Grammar {
  std::string_view short_with_value;
  std::set<std::string_view> long_with_value;
  // Options that supply the pattern/script/program, freeing the first operand.
  std::set<std::string_view> pattern_suppliers;
  bool first_operand_is_pattern = false;
  bool digits_are_option = false;  // head -5, tail -5, grep -5
  std::string_view digits_option;  // canonical name for the digit form
  char optional_attached = 0;      // sed -i[SUFFIX]
};

const Grammar& grammar_for(std::string_view tool) {
  static const Grammar rg{
      "efmABCgtTEMjrd",
      {"--regexp", "--file", "--max-count", "--after-context", "--before-context", "--context",
       "--glob", "--iglob", "--type", "--type-not", "--encoding", "--max-columns", "--threads",
       "--replace", "--max-depth", "--pre", "--pre-glob", "--sort", "--sortr", "--type-add",
       "--type-clear", "--colors", "--color", "--context-separator", "--field-context-separator",
       "--field-match-separator", "--path-separator", "--max-filesize", "--dfa-size-limit",
       "--regex-size-limit", "--engine", "--ignore-file", "--hostname-bin", "--hyperlink-format",
       "--generate"},
      {"-e", "--regexp", "-f", "--file"},
      true};
  static const Grammar grep{
      "efmABCdD",
      {"--regexp", "--file", "--max-count", "--after-context", "--before-context", "--context",
       "--label", "--include", "--exclude", "--exclude-from", "--exclude-dir", "--binary-files",
       "--devices", "--directories", "--group-separator"},
      {"-e", "--regexp", "-f", "--file"},
      true,
      true,
      "-C"};
  static const Grammar sed{"efl", {"--expression", "--file", "--line-length"},
                           {"-e", "--expression", "-f", "--file"},
                           true, false, {}, 'i'};
  static const Grammar awk{"FfvEilW",
                           {"--field-separator", "--assign", "--file", "--exec", "--include", "--load"},
                           {"-f", "--file", "-E", "--exec"},
                           true};
  static const Grammar head{"nc", {"--lines", "--bytes"}, {}, false, true, "-n"};
  static const Grammar tail{"ncs",
                            {"--lines", "--bytes", "--sleep-interval", "--pid", "--max-unchanged-stats"},
                            {}, false, true, "-n"};
  static const Grammar cut{"bcdf", {"--bytes", "--characters", "--delimiter", "--fields", "--output-delimiter"}};
  static const Grammar sort{"ktoTS",
                            {"--key", "--field-separator", "--output", "--temporary-directory",
                             "--buffer-size", "--batch-size", "--compress-program", "--files0-from",
                             "--random-source", "--parallel", "--sort"}};
  static const Grammar uniq{"fsw", {"--skip-fields", "--skip-chars", "--check-chars"}};
  static const Grammar ls{"ITw",
                          {"--ignore", "--hide", "--width", "--tabsize", "--format", "--time-style",
                           "--quoting-style", "--indicator-style", "--block-size", "--sort", "--time"}};
  static const Grammar plain{};

  if (tool == "rg") return rg;
  if (tool == "grep") return grep;
  if (tool == "sed") return sed;
  if (tool == "awk") return awk;
  if (tool == "head") return head;
  if (tool == "tail") return tail;
  if (tool == "cut") return cut;
  if (tool == "sort") return sort;
  if (tool == "uniq") return uniq;
  if (tool == "ls") return ls;
  return plain;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

bool is_awk_assignment(std::string_view s) {
  auto eq = s.find('=');
  if (eq == std::string_view::npos || eq == 0) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(eq),
                     [](unsigned char c) { return std::isalnum(c) || c == '_'; });
}

ScannedArgs scan_find(const Stage& stage) {
  ScannedArgs out;
  bool in_expression = false;
  for (std::size_t i = 0; i < stage.args.size(); ++i) {
    const auto& a = stage.args[i];
    if (!in_expression && !a.empty() && (a[0] == '-' || a == "(" || a == ")" || a == "!" || a == ",")) {
      in_expression = true;
    }
    if (in_expression) {
      if (!a.empty() && a[0] == '-') {
        out.options.push_back({a, std::nullopt, i});
      } else {
        out.operands.push_back({i, OperandRole::Data});
      }
    } else {
      out.operands.push_back({i, OperandRole::Path});
    }
  }
  return out;
}

}  // namespace

bool ScannedArgs::has(std::string_view name) const {
  return std::any_of(options.begin(), options.end(), [&](const ToolOption& o) { return o.name == name; });
}

bool ScannedArgs::has_any(std::initializer_list<std::string_view> names) const {
  return find(names) != nullptr;
}

const ToolOption* ScannedArgs::find(std::initializer_list<std::string_view> names) const {
  for (const auto& o : options) {
    for (auto n : names) {
      if (o.name == n) return &o;
    }
  }
  return nullptr;
}

std::vector<std::size_t> ScannedArgs::operands_with(OperandRole role) const {
  std::vector<std::size_t> out;
  for (const auto& op : operands) {
    if (op.role == role) out.push_back(op.arg_index);
  }
  return out;
}

ScannedArgs scan_args(const Stage& stage) {
  if (stage.tool == "find") return scan_find(stage);

  const Grammar& g = grammar_for(stage.tool);
  ScannedArgs out;
  std::vector<std::size_t> positional;
  const auto& args = stage.args;
  bool options_done = false;

  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (options_done || a.size() < 2 || a[0] != '-') {
      positional.push_back(i);
      continue;
    }
    if (a == "--") {
      options_done = true;
      continue;
    }
    if (a.starts_with("--")) {
      auto eq = a.find('=');
      if (eq != std::string::npos) {
        out.options.push_back({a.substr(0, eq), a.substr(eq + 1), i});
      } else if (g.long_with_value.contains(a) && i + 1 < args.size()) {
        out.options.push_back({a, args[i + 1], i});
        ++i;
      } else {
        out.options.push_back({a, std::nullopt, i});
      }
      continue;
    }
    // Short option bundle.
    std::string_view body = std::string_view(a).substr(1);
    if (g.digits_are_option && all_digits(body)) {
      out.options.push_back({std::string(g.digits_option), std::string(body), i});
      continue;
    }
    for (std::size_t k = 0; k < body.size(); ++k) {
      char c = body[k];
      std::string name{'-', c};
      if (g.optional_attached == c) {
        std::string rest(body.substr(k + 1));
        out.options.push_back({name, rest.empty() ? std::nullopt : std::optional<std::string>(rest), i});
        break;
      }
      if (g.short_with_value.find(c) != std::string_view::npos) {
        std::string rest(body.substr(k + 1));
        if (!rest.empty()) {
          out.options.push_back({name, rest, i});
        } else if (i + 1 < args.size()) {
          out.options.push_back({name, args[i + 1], i});
          ++i;
        } else {
          out.options.push_back({name, std::nullopt, i});
        }
        break;
      }
      out.options.push_back({name, std::nullopt, i});
    }
  }

  bool pattern_supplied = std::any_of(out.options.begin(), out.options.end(), [&](const ToolOption& o) {
    return g.pattern_suppliers.contains(o.name);
  });

  for (std::size_t k = 0; k < positional.size(); ++k) {
    std::size_t idx = positional[k];
    OperandRole role = OperandRole::Path;
    if (k == 0 && g.first_operand_is_pattern && !pattern_supplied) {
      role = OperandRole::Pattern;
    } else if (stage.tool == "tr") {
      role = OperandRole::Data;
    } else if (stage.tool == "awk" && is_awk_assignment(args[idx])) {
      role = OperandRole::Data;
    } else if (stage.tool == "uniq" && k == 1) {
      role = OperandRole::OutputPath;
    }
    out.operands.push_back({idx, role});
  }
  return out;
}

namespace {

// Conservative: any pipe, getline, system() or print/printf redirection in an
// awk program is refused, even where a real awk would read `|` as regex
// alternation or `>` as a comparison inside print.
bool awk_program_has_side_effects(std::string_view prog) {
  bool in_string = false;
  bool print_seen = false;
  std::string word;
  auto end_word = [&] {
    if (word == "print" || word == "printf") print_seen = true;
    bool bad = word == "system" || word == "getline" || word == "close" || word == "fflush";
    word.clear();
    return bad;
  };
  for (std::size_t i = 0; i < prog.size(); ++i) {
    char c = prog[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      word.push_back(c);
      continue;
    }
    if (end_word()) return true;
    switch (c) {
      case '"': in_string = true; break;
      case '|':
        if (i + 1 < prog.size() && prog[i + 1] == '|') {
          ++i;
        } else {
          return true;
        }
        break;
      case '>':
        if (print_seen) return true;
        break;
      case ';':
      case '{':
      case '}':
      case '\n': print_seen = false; break;
      case '@': return true;  // gawk @load / @include
      default: break;
    }
  }
  return end_word();
}

}  // namespace

std::optional<std::string> dangerous_option(const Stage& stage, const ScannedArgs& scanned) {
  static const std::set<std::string_view> find_actions{
      "-exec", "-execdir", "-ok", "-okdir", "-delete", "-fprint", "-fprint0", "-fprintf", "-fls"};
  for (const auto& o : scanned.options) {
    if (stage.tool == "rg" && (o.name == "--pre" || o.name == "--hostname-bin" || o.name == "-z" ||
                               o.name == "--search-zip")) {
      return o.name;
    }
    if (stage.tool == "sort" && o.name == "--compress-program") return o.name;
    if (stage.tool == "find" && find_actions.contains(o.name)) return o.name;
    if (stage.tool == "awk" && (o.name == "-W" || o.name == "--exec")) return o.name;
  }
  if (stage.tool == "awk") {
    for (auto idx : scanned.operands_with(OperandRole::Pattern)) {
      if (awk_program_has_side_effects(stage.args[idx])) return "program (pipe, getline, system or redirection)";
    }
  }
  return std::nullopt;
}

std::optional<std::string> path_valued_option(const Stage& stage, const ScannedArgs& scanned) {
  auto pick = [&](std::initializer_list<std::string_view> names) -> std::optional<std::string> {
    if (auto* o = scanned.find(names)) return o->name;
    return std::nullopt;
  };
  const auto& t = stage.tool;
  if (t == "rg") return pick({"-f", "--file", "--ignore-file"});
  if (t == "grep") return pick({"-f", "--file", "--exclude-from"});
  if (t == "sed") return pick({"-f", "--file"});
  if (t == "awk") return pick({"-f", "--file", "-E", "--exec", "-i", "--include", "-l", "--load"});
  if (t == "sort") return pick({"-o", "--output", "-T", "--temporary-directory", "--files0-from", "--random-source"});
  if (t == "wc") return pick({"--files0-from"});
  return std::nullopt;
}

}  // namespace shardpipe
