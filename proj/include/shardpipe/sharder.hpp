#pragma once

// Line-aligned corpus sharding. Shard i of an L-line corpus split S ways holds
// lines ceil(L*(i-1)/S)+1 .. ceil(L*i/S); concatenating the shards in order
// reproduces the corpus byte for byte. A manifest.json in the shard directory
// records per-shard line counts and digests plus the whole-corpus digest.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace shardpipe {

class ShardError : public std::runtime_error {
 public:
  enum class Code { IoFailure, InvalidShardCount, ManifestInvalid };
  ShardError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

struct ShardInfo {
  std::filesystem::path path;  // absolute
  std::uint64_t lines = 0;
  std::uint64_t bytes = 0;
  std::string digest;
};

struct ShardSet {
  std::filesystem::path corpus_path;
  std::filesystem::path shard_dir;
  std::string corpus_digest;
  std::uint64_t corpus_bytes = 0;
  std::uint64_t corpus_lines = 0;
  std::string digest_algo;
  std::string created_at;
  std::vector<ShardInfo> shards;

  std::size_t count() const { return shards.size(); }
  std::filesystem::path manifest_path() const { return shard_dir / "manifest.json"; }

  /// Reads shard_dir/manifest.json. Throws ShardError{ManifestInvalid|IoFailure}.
  static ShardSet load(const std::filesystem::path& shard_dir);
  /// Atomically replaces the manifest (write to temp, rename).
  void save() const;
};

std::string shard_file_name(std::size_t index, std::size_t count);

/// Line counts per shard from the ceil boundaries above: (4,3,3) for 10 lines
/// in 3 shards, (1,0,1,0) for 2 lines in 4.
std::vector<std::uint64_t> line_split(std::uint64_t total_lines, std::size_t shard_count);

/// Number of lines, counting an unterminated final line.
std::uint64_t count_lines(std::string_view bytes);

/// Idempotent: an existing manifest for the same corpus digest and shard
/// count whose shard files are intact is returned without rewriting anything.
ShardSet shard(const std::filesystem::path& corpus, std::size_t shard_count,
               const std::filesystem::path& shard_dir);

/// True iff the in-order concatenation of the shard files hashes to the
/// recorded corpus digest and their line counts sum to the corpus line count.
bool verify(const ShardSet& shards);

/// Reads every shard end to end (in parallel) and returns total bytes read.
std::uint64_t warm(const ShardSet& shards);

}  // namespace shardpipe
