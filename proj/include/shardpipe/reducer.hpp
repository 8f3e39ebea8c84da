#pragma once

// Merging per-shard outputs back into the byte stream a single sequential run
// would have produced.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shardpipe/classifier.hpp"
#include "shardpipe/executor.hpp"

namespace shardpipe {

/// Raised when shard outputs violate what the strategy guarantees; the engine
/// answers such requests sequentially instead.
class ReduceError : public std::runtime_error {
 public:
  enum class Code { MalformedCount, UnsortedInput };
  ReduceError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

struct MergedOutput {
  std::string out;
  std::size_t lines_examined = 0;
};

/// Byte order of two lines (without their terminators), as `sort` compares
/// them under LC_ALL=C.
inline bool line_less(std::string_view a, std::string_view b) { return a < b; }

MergedOutput reduce_concat(std::span<const ShardResult> results);
MergedOutput reduce_head(std::span<const ShardResult> results, std::size_t n);
MergedOutput reduce_count(std::span<const ShardResult> results);

/// Stable merge of bytewise-ascending line streams; ties go to the lower
/// stream index. `limit` stops after that many output lines; with `unique`
/// adjacent duplicates in the merged stream are dropped before counting.
MergedOutput kway_merge(std::span<const std::string_view> streams, std::size_t limit = SIZE_MAX,
                        bool unique = false);

MergedOutput reduce_sorthead(std::span<const ShardResult> results, std::size_t n, bool with_uniq);

/// Dispatch on strategy (which must not be Sequential).
MergedOutput reduce(const ReductionStrategy& strategy, std::span<const ShardResult> results);

}  // namespace shardpipe
