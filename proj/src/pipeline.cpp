#include "shardpipe/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "shardpipe/tool_args.hpp"

namespace shardpipe {

std::string_view to_string(ParseErrc code) {
  switch (code) {
    case ParseErrc::MultilineCommand: return "MultilineCommand";
    case ParseErrc::UnterminatedQuote: return "UnterminatedQuote";
    case ParseErrc::ForbiddenConstruct: return "ForbiddenConstruct";
    case ParseErrc::UnknownTool: return "UnknownTool";
    case ParseErrc::EmptyStage: return "EmptyStage";
    case ParseErrc::UnknownPath: return "UnknownPath";
    case ParseErrc::MissingCorpus: return "MissingCorpus";
  }
  return "ParseError";
}

ParseError::ParseError(ParseErrc code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

std::vector<Token> tokenize(std::string_view raw) {
  std::vector<Token> tokens;
  std::string word;
  bool in_word = false;

  auto flush = [&] {
    if (in_word) {
      tokens.push_back({Token::Kind::Word, std::move(word)});
      word.clear();
      in_word = false;
    }
  };
  auto op = [&](Token::Kind kind, std::string text) {
    flush();
    tokens.push_back({kind, std::move(text)});
  };

  for (std::size_t i = 0; i < raw.size(); ++i) {
    const char c = raw[i];
    const char next = i + 1 < raw.size() ? raw[i + 1] : '\0';
    switch (c) {
      case '\n':
      case '\r':
        throw ParseError(ParseErrc::MultilineCommand, "commands must be a single line");
      case ' ':
      case '\t':
        flush();
        break;
      case '\'': {
        auto close = raw.find('\'', i + 1);
        if (close == std::string_view::npos) {
          throw ParseError(ParseErrc::UnterminatedQuote, "unbalanced single quote");
        }
        word.append(raw.substr(i + 1, close - i - 1));
        in_word = true;
        i = close;
        break;
      }
      case '"': {
        std::size_t j = i + 1;
        bool closed = false;
        for (; j < raw.size(); ++j) {
          if (raw[j] == '"') {
            closed = true;
            break;
          }
          // bash still substitutes inside double quotes
          if (raw[j] == '`' || (raw[j] == '$' && j + 1 < raw.size() && raw[j + 1] == '(')) {
            throw ParseError(ParseErrc::ForbiddenConstruct,
                             "'" + std::string(raw[j] == '`' ? "`" : "$(") + "' inside double quotes (command substitution)");
          }
          if (raw[j] == '\\' && j + 1 < raw.size() && (raw[j + 1] == '"' || raw[j + 1] == '\\')) {
            word.push_back(raw[++j]);
          } else {
            word.push_back(raw[j]);
          }
        }
        if (!closed) throw ParseError(ParseErrc::UnterminatedQuote, "unbalanced double quote");
        in_word = true;
        i = j;
        break;
      }
      case '\\':
        if (i + 1 < raw.size()) {
          word.push_back(raw[++i]);
        } else {
          word.push_back('\\');
        }
        in_word = true;
        break;
      case '|':
        if (next == '|') {
          op(Token::Kind::Forbidden, "||");
          ++i;
        } else {
          op(Token::Kind::Pipe, "|");
        }
        break;
      case '&':
        if (next == '&') {
          op(Token::Kind::Forbidden, "&&");
          ++i;
        } else {
          op(Token::Kind::Forbidden, "&");
        }
        break;
      case '>':
      case '<':
      case ';':
      case '`':
        op(Token::Kind::Forbidden, std::string(1, c));
        break;
      case '$':
        if (next == '(') {
          op(Token::Kind::Forbidden, "$(");
          ++i;
          break;
        }
        [[fallthrough]];
      default:
        word.push_back(c);
        in_word = true;
    }
  }
  flush();
  return tokens;
}

bool is_whitelisted_tool(std::string_view tool) {
  static constexpr std::array<std::string_view, 14> kTools{
      "rg", "grep", "find", "sed", "awk", "head", "tail", "cat", "ls", "wc", "sort", "cut", "uniq", "tr"};
  return std::find(kTools.begin(), kTools.end(), tool) != kTools.end();
}

namespace {

void check_operands(const Stage& stage, std::size_t index, const ParseOptions& options) {
  ScannedArgs scanned = scan_args(stage);
  if (auto opt = dangerous_option(stage, scanned)) {
    throw ParseError(ParseErrc::ForbiddenConstruct,
                     (opt->starts_with("-") ? "option " : "") + *opt + " of " + stage.tool +
                         " runs programs or touches other files");
  }
  if (auto opt = path_valued_option(stage, scanned)) {
    throw ParseError(ParseErrc::UnknownPath, "option " + *opt + " of " + stage.tool + " takes a host file path");
  }
  std::size_t corpus_refs = 0;
  for (const auto& operand : scanned.operands) {
    const std::string& arg = stage.args[operand.arg_index];
    if (operand.role == OperandRole::OutputPath) {
      throw ParseError(ParseErrc::UnknownPath, stage.tool + " output file '" + arg + "' is not allowed");
    }
    if (operand.role != OperandRole::Path || arg == "-") continue;
    if (arg != options.corpus_name) {
      throw ParseError(ParseErrc::UnknownPath, "'" + arg + "'; the only readable file is " + options.corpus_name);
    }
    if (index != 0) {
      throw ParseError(ParseErrc::UnknownPath,
                       options.corpus_name + " may only be read by the first stage of the pipeline");
    }
    ++corpus_refs;
  }
  if (index == 0 && corpus_refs != 1) {
    throw ParseError(ParseErrc::MissingCorpus,
                     "the first stage must name " + options.corpus_name + " exactly once");
  }
}

}  // namespace

Pipeline parse_pipeline(std::string_view raw, const ParseOptions& options) {
  std::vector<Token> tokens = tokenize(raw);
  for (const auto& t : tokens) {
    if (t.kind == Token::Kind::Forbidden) {
      throw ParseError(ParseErrc::ForbiddenConstruct, "'" + t.text + "' (redirection, chaining and substitution are not allowed)");
    }
  }

  Pipeline pipeline;
  pipeline.source = std::string(raw);
  std::vector<std::string> current;
  auto close_stage = [&] {
    if (current.empty()) throw ParseError(ParseErrc::EmptyStage, "empty pipeline stage");
    Stage stage{current.front(), {current.begin() + 1, current.end()}};
    if (!is_whitelisted_tool(stage.tool)) {
      throw ParseError(ParseErrc::UnknownTool, "'" + stage.tool + "' is not an allowed tool");
    }
    pipeline.stages.push_back(std::move(stage));
    current.clear();
  };
  for (auto& t : tokens) {
    if (t.kind == Token::Kind::Pipe) {
      close_stage();
    } else {
      current.push_back(std::move(t.text));
    }
  }
  close_stage();

  for (std::size_t i = 0; i < pipeline.stages.size(); ++i) {
    check_operands(pipeline.stages[i], i, options);
  }
  return pipeline;
}

std::string quote_arg(std::string_view arg) {
  if (arg.empty()) return "''";
  bool bare = std::all_of(arg.begin(), arg.end(), [](unsigned char c) {
    return std::isalnum(c) || std::string_view("_-./:=,+@%^").find(static_cast<char>(c)) != std::string_view::npos;
  });
  if (bare) return std::string(arg);
  // 'it'\''s' : close the quote, escaped quote, reopen
  std::string out = "'";
  for (char c : arg) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out.push_back(c);
    }
  }
  out.push_back('\'');
  return out;
}

std::string render(const Pipeline& pipeline) {
  std::string out;
  for (std::size_t i = 0; i < pipeline.stages.size(); ++i) {
    if (i > 0) out += " | ";
    const Stage& s = pipeline.stages[i];
    out += quote_arg(s.tool);
    for (const auto& a : s.args) {
      out.push_back(' ');
      out += quote_arg(a);
    }
  }
  return out;
}

std::vector<std::size_t> path_operands(const Stage& stage) {
  return scan_args(stage).operands_with(OperandRole::Path);
}

}  // namespace shardpipe
