#pragma once

// Answer scoring: SQuAD-style normalization, token F1, exact match, and the
// trajectory format gate that multiplies the answer reward.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace shardpipe {

class EmptyReferenceSet : public std::invalid_argument {
 public:
  EmptyReferenceSet() : std::invalid_argument("EmptyReferenceSet: at least one reference answer is required") {}
};

/// Lowercase (Unicode), drop punctuation without inserting spaces, split on
/// whitespace, drop the articles a/an/the.
std::vector<std::string> normalize(std::string_view text);

struct F1Score {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

F1Score token_f1(std::string_view pred, std::string_view gold);
double best_f1(std::string_view pred, std::span<const std::string> refs);
int exact_match(std::string_view pred, std::span<const std::string> refs);

/// 1 iff the text is  <think> (<tool_call> <tool_response> <think>)* <answer>
/// with only whitespace between blocks and nothing after </answer>.
int format_gate(std::string_view trajectory);

/// Content of the last <answer>...</answer> block, if any.
std::optional<std::string> extract_last_answer(std::string_view trajectory);

double reward(std::string_view trajectory, std::span<const std::string> refs);

}  // namespace shardpipe
