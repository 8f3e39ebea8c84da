#pragma once

// Wire format between the daemon and its clients: a 4-byte big-endian length
// followed by exactly that many bytes of UTF-8 JSON.

#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "shardpipe/engine.hpp"

namespace shardpipe {

inline constexpr std::size_t kMaxFrameBytes = 64u << 20;
inline constexpr std::size_t kDefaultMaxOutputTokens = 2048;
inline constexpr std::string_view kTruncationMarker = "\n[truncated]\n";

class FrameError : public std::runtime_error {
 public:
  enum class Code { FrameTooLarge, TruncatedFrame, MalformedJson };
  FrameError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

std::string encode_frame(const nlohmann::json& payload);

/// Inverse of encode_frame for one complete frame; trailing bytes are an error.
nlohmann::json decode_frame(std::string_view bytes);

/// Parses the 4-byte prefix. Throws FrameTooLarge / TruncatedFrame.
std::uint32_t frame_length(std::string_view prefix);

struct RequestFrame {
  std::string command;
  std::size_t max_output_tokens = kDefaultMaxOutputTokens;
  std::optional<double> timeout_s;

  nlohmann::json to_json() const;
  /// Throws std::invalid_argument on schema violations.
  static RequestFrame from_json(const nlohmann::json& j);
};

struct ResponseFrame {
  std::string stdout_bytes;
  std::string stderr_text;
  int exit_code = 0;
  bool truncated = false;
  nlohmann::json telemetry = nlohmann::json::object();

  /// stdout travels as a JSON string when it is valid UTF-8, otherwise as
  /// base64 with "stdout_encoding": "base64".
  nlohmann::json to_json() const;
  static ResponseFrame from_json(const nlohmann::json& j);
};

struct Truncated {
  std::string text;
  bool truncated = false;
};

/// Keeps the first `max_tokens` whitespace-delimited tokens (with the bytes
/// between them) and appends kTruncationMarker when anything was cut.
Truncated truncate_output(std::string_view out, std::size_t max_tokens);

bool is_valid_utf8(std::string_view bytes);
std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// The daemon's request handler, usable in-process.
ResponseFrame handle_request(const Engine& engine, const RequestFrame& request);

}  // namespace shardpipe
