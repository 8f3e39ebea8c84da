#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

namespace shardpipe {

inline constexpr std::string_view kDigestAlgorithm = "sha256";

/// Streaming SHA-256; hex() finalizes.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(Sha256&&) noexcept;
  Sha256& operator=(Sha256&&) noexcept;

  void update(std::string_view bytes);
  std::string hex();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view bytes);

/// Digest of a file's contents; throws std::system_error on I/O failure.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace shardpipe
