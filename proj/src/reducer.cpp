#include "shardpipe/reducer.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <queue>

namespace shardpipe {

namespace {

// Cursor over the lines of one stream. The final line may lack '\n'.
struct LineCursor {
  std::string_view rest;

  bool next(std::string_view& line) {
    if (rest.empty()) return false;
    auto nl = rest.find('\n');
    if (nl == std::string_view::npos) {
      line = rest;
      rest = {};
    } else {
      line = rest.substr(0, nl);
      rest.remove_prefix(nl + 1);
    }
    return true;
  }
};

}  // namespace

MergedOutput reduce_concat(std::span<const ShardResult> results) {
  MergedOutput merged;
  std::size_t total = 0;
  for (const auto& r : results) total += r.out.size();
  merged.out.reserve(total);
  for (const auto& r : results) {
    merged.out += r.out;
    merged.lines_examined += static_cast<std::size_t>(std::count(r.out.begin(), r.out.end(), '\n'));
  }
  return merged;
}

MergedOutput reduce_head(std::span<const ShardResult> results, std::size_t n) {
  MergedOutput merged;
  std::size_t remaining = n;
  for (const auto& r : results) {
    if (remaining == 0) break;
    std::string_view out = r.out;
    std::size_t pos = 0;
    while (remaining > 0 && pos < out.size()) {
      auto nl = out.find('\n', pos);
      if (nl == std::string_view::npos) {
        // Unterminated tail: joins with the next shard's first line.
        merged.out.append(out.substr(pos));
        pos = out.size();
        break;
      }
      merged.out.append(out.substr(pos, nl + 1 - pos));
      pos = nl + 1;
      --remaining;
      ++merged.lines_examined;
    }
  }
  return merged;
}

MergedOutput reduce_count(std::span<const ShardResult> results) {
  std::uint64_t sum = 0;
  for (const auto& r : results) {
    std::string_view s = r.out;
    bool ok = s.size() >= 2 && s.back() == '\n';
    if (ok) s.remove_suffix(1);
    ok = ok && s.size() <= 19 &&
         std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
    if (!ok) {
      throw ReduceError(ReduceError::Code::MalformedCount,
                        "shard " + std::to_string(r.shard_index) + " produced a malformed count");
    }
    std::uint64_t v = 0;
    for (char c : s) v = v * 10 + static_cast<std::uint64_t>(c - '0');
    sum += v;
  }
  return {std::to_string(sum) + "\n", results.size()};
}

MergedOutput kway_merge(std::span<const std::string_view> streams, std::size_t limit, bool unique) {
  struct Head {
    std::string_view line;
    std::size_t stream;
  };
  auto later = [](const Head& a, const Head& b) {
    if (a.line != b.line) return line_less(b.line, a.line);
    return a.stream > b.stream;
  };
  std::priority_queue<Head, std::vector<Head>, decltype(later)> heap(later);
  std::vector<LineCursor> cursors;
  cursors.reserve(streams.size());
  for (std::size_t i = 0; i < streams.size(); ++i) {
    cursors.push_back({streams[i]});
    std::string_view line;
    if (cursors[i].next(line)) heap.push({line, i});
  }

  MergedOutput merged;
  std::size_t emitted = 0;
  std::string_view last_emitted;
  bool have_last = false;
  while (!heap.empty() && emitted < limit) {
    Head top = heap.top();
    heap.pop();
    ++merged.lines_examined;
    std::string_view next;
    if (cursors[top.stream].next(next)) {
      if (line_less(next, top.line)) {
        throw ReduceError(ReduceError::Code::UnsortedInput,
                          "stream " + std::to_string(top.stream) + " is not sorted");
      }
      heap.push({next, top.stream});
    }
    if (unique && have_last && top.line == last_emitted) continue;
    merged.out.append(top.line);
    merged.out.push_back('\n');
    last_emitted = top.line;
    have_last = true;
    ++emitted;
  }
  return merged;
}

MergedOutput reduce_sorthead(std::span<const ShardResult> results, std::size_t n, bool with_uniq) {
  std::vector<std::string_view> streams;
  streams.reserve(results.size());
  for (const auto& r : results) streams.emplace_back(r.out);
  return kway_merge(streams, n, with_uniq);
}

MergedOutput reduce(const ReductionStrategy& strategy, std::span<const ShardResult> results) {
  switch (strategy.kind) {
    case StrategyKind::Concat: return reduce_concat(results);
    case StrategyKind::Head: return reduce_head(results, *strategy.n);
    case StrategyKind::Count: return reduce_count(results);
    case StrategyKind::SortHead: return reduce_sorthead(results, *strategy.n, strategy.with_uniq);
    case StrategyKind::Sequential: break;
  }
  throw std::logic_error("reduce: sequential strategy has no reduction");
}

}  // namespace shardpipe
