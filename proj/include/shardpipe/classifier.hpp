#pragma once

// Reduction-strategy classification. A pipeline runs in parallel only when
// the merged per-shard result is provably byte-identical to one sequential run
// over the whole corpus; everything else is Sequential.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "shardpipe/pipeline.hpp"

namespace shardpipe {

enum class StrategyKind { Concat, Head, Count, SortHead, Sequential };

std::string_view to_string(StrategyKind kind);

struct ReductionStrategy {
  StrategyKind kind = StrategyKind::Sequential;
  std::optional<std::size_t> n;  // Head and SortHead only
  bool with_uniq = false;        // SortHead only

  static ReductionStrategy concat() { return {StrategyKind::Concat, std::nullopt, false}; }
  static ReductionStrategy head(std::size_t n) { return {StrategyKind::Head, n, false}; }
  static ReductionStrategy count() { return {StrategyKind::Count, std::nullopt, false}; }
  static ReductionStrategy sort_head(std::size_t n, bool uniq) { return {StrategyKind::SortHead, n, uniq}; }
  static ReductionStrategy sequential() { return {}; }

  bool parallel() const { return kind != StrategyKind::Sequential; }
  bool operator==(const ReductionStrategy&) const = default;
};

/// "Head(3)", "SortHead(5,uniq)", "Count", ...
std::string describe(const ReductionStrategy& strategy);

struct SafetyVerdict {
  bool safe = true;
  std::string reason;  // non-empty when !safe
};

SafetyVerdict is_unsafe(const Stage& stage);

/// Per-line map or filter: output over a concatenation equals the
/// concatenation of outputs over the parts. Assumes the stage is safe.
bool is_stateless(const Stage& stage);

/// N for `head -n N` with N a positive decimal integer, otherwise nullopt.
std::optional<std::size_t> head_limit(const Stage& stage);
bool is_line_count(const Stage& stage);  // exactly `wc -l`
bool is_plain_sort(const Stage& stage);  // `sort` with no arguments
bool is_plain_uniq(const Stage& stage);  // `uniq` with no arguments

ReductionStrategy classify(const Pipeline& pipeline);

}  // namespace shardpipe
