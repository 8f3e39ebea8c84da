#include "shardpipe/sharder.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <exception>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <system_error>

#include "shardpipe/digest.hpp"
#include "shardpipe/mapped_file.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace shardpipe {

namespace {

constexpr std::size_t kIoBlock = 1 << 20;

class DirLock {
 public:
  explicit DirLock(const fs::path& dir) {
    fd_ = ::open((dir / ".lock").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw ShardError(ShardError::Code::IoFailure, "cannot create lock in " + dir.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw ShardError(ShardError::Code::IoFailure, "cannot lock " + dir.string());
    }
  }
  ~DirLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
};

std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  ::gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ShardError(ShardError::Code::IoFailure, "cannot write " + path.string());
  for (std::size_t off = 0; off < bytes.size(); off += kIoBlock) {
    auto piece = bytes.substr(off, kIoBlock);
    out.write(piece.data(), static_cast<std::streamsize>(piece.size()));
  }
  out.flush();
  if (!out) throw ShardError(ShardError::Code::IoFailure, "short write to " + path.string());
}

bool reusable(const ShardSet& existing, const std::string& digest, std::size_t count) {
  if (existing.corpus_digest != digest || existing.count() != count) return false;
  std::error_code ec;
  return std::all_of(existing.shards.begin(), existing.shards.end(), [&](const ShardInfo& s) {
    return fs::is_regular_file(s.path, ec) && fs::file_size(s.path, ec) == s.bytes && !ec;
  });
}

void remove_stale_shards(const fs::path& dir, const std::vector<ShardInfo>& keep) {
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    auto name = entry.path().filename().string();
    if (!name.starts_with("shard.") || !name.ends_with(".part")) continue;
    bool kept = std::any_of(keep.begin(), keep.end(),
                            [&](const ShardInfo& s) { return s.path.filename() == entry.path().filename(); });
    if (!kept) fs::remove(entry.path(), ec);
  }
}

}  // namespace

std::string shard_file_name(std::size_t index, std::size_t count) {
  std::size_t width = std::max<std::size_t>(4, std::to_string(count > 0 ? count - 1 : 0).size());
  std::string digits = std::to_string(index);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return "shard." + digits + ".part";
}

std::vector<std::uint64_t> line_split(std::uint64_t total_lines, std::size_t shard_count) {
  std::vector<std::uint64_t> counts(shard_count);
  auto ceil_div = [](std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; };
  std::uint64_t prev = 0;
  for (std::size_t i = 1; i <= shard_count; ++i) {
    std::uint64_t end = ceil_div(total_lines * i, shard_count);
    counts[i - 1] = end - prev;
    prev = end;
  }
  return counts;
}

std::uint64_t count_lines(std::string_view bytes) {
  std::uint64_t n = 0;
  const char* p = bytes.data();
  const char* end = p + bytes.size();
  while (p < end) {
    const void* hit = std::memchr(p, '\n', static_cast<std::size_t>(end - p));
    if (hit == nullptr) break;
    ++n;
    p = static_cast<const char*>(hit) + 1;
  }
  if (!bytes.empty() && bytes.back() != '\n') ++n;
  return n;
}

ShardSet ShardSet::load(const fs::path& shard_dir) {
  fs::path manifest = shard_dir / "manifest.json";
  std::ifstream in(manifest);
  if (!in) throw ShardError(ShardError::Code::IoFailure, "cannot read " + manifest.string());
  ShardSet set;
  try {
    json doc = json::parse(in);
    set.shard_dir = fs::absolute(shard_dir);
    set.corpus_path = doc.at("corpus_path").get<std::string>();
    set.corpus_digest = doc.at("corpus_digest").get<std::string>();
    set.corpus_bytes = doc.at("corpus_bytes").get<std::uint64_t>();
    set.corpus_lines = doc.at("corpus_lines").get<std::uint64_t>();
    set.digest_algo = doc.at("digest_algo").get<std::string>();
    set.created_at = doc.value("created_at", "");
    for (const auto& s : doc.at("shards")) {
      set.shards.push_back({set.shard_dir / s.at("path").get<std::string>(), s.at("lines").get<std::uint64_t>(),
                            s.at("bytes").get<std::uint64_t>(), s.at("digest").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw ShardError(ShardError::Code::ManifestInvalid, manifest.string() + ": " + e.what());
  }
  if (set.digest_algo != kDigestAlgorithm) {
    throw ShardError(ShardError::Code::ManifestInvalid, "unsupported digest algorithm " + set.digest_algo);
  }
  return set;
}

void ShardSet::save() const {
  json shards_json = json::array();
  for (const auto& s : shards) {
    shards_json.push_back({{"path", s.path.filename().string()},
                           {"lines", s.lines},
                           {"bytes", s.bytes},
                           {"digest", s.digest}});
  }
  json doc{{"corpus_path", corpus_path.string()},
           {"corpus_digest", corpus_digest},
           {"corpus_bytes", corpus_bytes},
           {"corpus_lines", corpus_lines},
           {"digest_algo", digest_algo},
           {"created_at", created_at},
           {"shard_count", shards.size()},
           {"shards", shards_json}};
  fs::path tmp = manifest_path();
  tmp += ".tmp";
  write_file(tmp, doc.dump(2) + "\n");
  fs::rename(tmp, manifest_path());
}

ShardSet shard(const fs::path& corpus, std::size_t shard_count, const fs::path& shard_dir) {
  if (shard_count < 1) throw ShardError(ShardError::Code::InvalidShardCount, "shard count must be >= 1");
  std::error_code ec;
  fs::create_directories(shard_dir, ec);
  if (ec) throw ShardError(ShardError::Code::IoFailure, "cannot create " + shard_dir.string() + ": " + ec.message());
  DirLock lock(shard_dir);

  std::optional<MappedFile> mapped;
  try {
    mapped.emplace(corpus);
  } catch (const std::system_error& e) {
    throw ShardError(ShardError::Code::IoFailure, e.what());
  }
  const std::string_view bytes = mapped->bytes();
  const std::string digest = sha256_hex(bytes);

  if (fs::exists(shard_dir / "manifest.json")) {
    try {
      ShardSet existing = ShardSet::load(shard_dir);
      if (reusable(existing, digest, shard_count)) return existing;
    } catch (const ShardError&) {
      // Unreadable manifest: rebuild below.
    }
  }

  ShardSet set;
  set.corpus_path = fs::absolute(corpus);
  set.shard_dir = fs::absolute(shard_dir);
  set.corpus_digest = digest;
  set.corpus_bytes = bytes.size();
  set.corpus_lines = count_lines(bytes);
  set.digest_algo = std::string(kDigestAlgorithm);
  set.created_at = utc_timestamp();

  // Byte offsets of each shard boundary.
  std::vector<std::uint64_t> counts = line_split(set.corpus_lines, shard_count);
  std::vector<std::size_t> offsets(shard_count + 1, 0);
  {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < shard_count; ++i) {
      for (std::uint64_t k = 0; k < counts[i]; ++k) {
        const void* hit = std::memchr(bytes.data() + pos, '\n', bytes.size() - pos);
        pos = hit == nullptr ? bytes.size() : static_cast<std::size_t>(static_cast<const char*>(hit) - bytes.data()) + 1;
      }
      offsets[i + 1] = pos;
    }
    offsets[shard_count] = bytes.size();
  }

  set.shards.resize(shard_count);
  std::vector<std::exception_ptr> errors(shard_count);
  const auto n = static_cast<std::ptrdiff_t>(shard_count);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      std::string_view piece = bytes.substr(offsets[idx], offsets[idx + 1] - offsets[idx]);
      ShardInfo& info = set.shards[idx];
      info.path = set.shard_dir / shard_file_name(idx, shard_count);
      info.lines = counts[idx];
      info.bytes = piece.size();
      info.digest = sha256_hex(piece);
      fs::path tmp = info.path;
      tmp += ".tmp";
      write_file(tmp, piece);
      fs::rename(tmp, info.path);
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  remove_stale_shards(set.shard_dir, set.shards);
  set.save();
  return set;
}

bool verify(const ShardSet& shards) {
  Sha256 whole;
  std::uint64_t lines = 0;
  std::string buf(kIoBlock, '\0');
  char last = '\n';
  bool any = false;
  for (const auto& s : shards.shards) {
    std::ifstream in(s.path, std::ios::binary);
    if (!in) return false;
    std::uint64_t shard_lines = 0;
    char shard_last = '\n';
    bool shard_any = false;
    while (in) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      auto got = static_cast<std::size_t>(in.gcount());
      if (got == 0) break;
      std::string_view piece(buf.data(), got);
      whole.update(piece);
      shard_lines += static_cast<std::uint64_t>(std::count(piece.begin(), piece.end(), '\n'));
      shard_last = piece.back();
      shard_any = true;
    }
    if (in.bad()) throw ShardError(ShardError::Code::IoFailure, "read " + s.path.string());
    if (shard_any) {
      // Only the final non-empty shard may end mid-line.
      if (any && last != '\n') return false;
      last = shard_last;
      any = true;
    }
    lines += shard_lines;
  }
  if (any && last != '\n') ++lines;
  return whole.hex() == shards.corpus_digest && lines == shards.corpus_lines;
}

std::uint64_t warm(const ShardSet& shards) {
  const auto n = static_cast<std::ptrdiff_t>(shards.count());
  std::uint64_t total = 0;
  bool failed = false;
#pragma omp parallel for schedule(dynamic, 1) reduction(+ : total) reduction(|| : failed)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    int fd = ::open(shards.shards[static_cast<std::size_t>(i)].path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) {
      failed = true;
      continue;
    }
    ::posix_fadvise(fd, 0, 0, POSIX_FADV_SEQUENTIAL);
    std::string buf(kIoBlock, '\0');
    ssize_t got = 0;
    while ((got = ::read(fd, buf.data(), buf.size())) > 0) total += static_cast<std::uint64_t>(got);
    if (got < 0) failed = true;
    ::close(fd);
  }
  if (failed) throw ShardError(ShardError::Code::IoFailure, "warm: cannot read every shard");
  return total;
}

}  // namespace shardpipe
