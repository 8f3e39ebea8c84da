#pragma once

// Agent command parsing: tokenizing, whitelisting and canonical rendering of
// single-line search pipelines such as
//
//     rg -F "distinctive phrase" corpus.jsonl | head -n 3
//
// No shell is ever involved. Quotes are resolved here and the resulting argv
// vectors are handed straight to posix_spawn, so nothing is expanded.

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace shardpipe {

enum class ParseErrc {
  MultilineCommand,
  UnterminatedQuote,
  ForbiddenConstruct,
  UnknownTool,
  EmptyStage,
  UnknownPath,
  MissingCorpus,
};

std::string_view to_string(ParseErrc code);

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrc code, const std::string& detail);
  ParseErrc code() const noexcept { return code_; }

 private:
  ParseErrc code_;
};

struct Token {
  enum class Kind {
    Word,       // argument text with quotes removed
    Pipe,       // unquoted '|'
    Forbidden,  // unquoted redirection, chaining or substitution operator
  };
  Kind kind = Kind::Word;
  std::string text;

  bool operator==(const Token&) const = default;
};

/// Shell-like word splitting restricted to single quotes, double quotes and
/// backslash escapes. Throws ParseError{UnterminatedQuote}.
std::vector<Token> tokenize(std::string_view raw);

struct Stage {
  std::string tool;
  std::vector<std::string> args;

  bool operator==(const Stage&) const = default;
};

struct Pipeline {
  std::vector<Stage> stages;
  std::string source;

  const Stage& first() const { return stages.front(); }
  const Stage& last() const { return stages.back(); }
  std::size_t size() const { return stages.size(); }
};

struct ParseOptions {
  /// Logical name the agent uses for the corpus. It may appear only as an
  /// operand of the first stage.
  std::string corpus_name = "corpus.jsonl";
};

bool is_whitelisted_tool(std::string_view tool);

Pipeline parse_pipeline(std::string_view raw, const ParseOptions& options = {});

/// Canonical single-line form; parse_pipeline(render(p)) has the same stages.
std::string render(const Pipeline& pipeline);
std::string quote_arg(std::string_view arg);

/// Indexes into stage.args of the operands that name input files. Option
/// values (for example the 3 in `head -n 3`) and patterns are excluded.
std::vector<std::size_t> path_operands(const Stage& stage);

}  // namespace shardpipe
