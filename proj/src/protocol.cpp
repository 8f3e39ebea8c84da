#include "shardpipe/protocol.hpp"

#include <array>
#include <cctype>
#include <cmath>

namespace shardpipe {

using nlohmann::json;

std::string encode_frame(const json& payload) {
  std::string body = payload.dump(-1, ' ', false, json::error_handler_t::replace);
  if (body.size() > kMaxFrameBytes) {
    throw FrameError(FrameError::Code::FrameTooLarge, "frame of " + std::to_string(body.size()) + " bytes");
  }
  auto len = static_cast<std::uint32_t>(body.size());
  std::string frame;
  frame.reserve(4 + body.size());
  frame.push_back(static_cast<char>((len >> 24) & 0xff));
  frame.push_back(static_cast<char>((len >> 16) & 0xff));
  frame.push_back(static_cast<char>((len >> 8) & 0xff));
  frame.push_back(static_cast<char>(len & 0xff));
  frame += body;
  return frame;
}

std::uint32_t frame_length(std::string_view prefix) {
  if (prefix.size() < 4) throw FrameError(FrameError::Code::TruncatedFrame, "missing length prefix");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len = (len << 8) | static_cast<unsigned char>(prefix[static_cast<std::size_t>(i)]);
  if (len > kMaxFrameBytes) {
    throw FrameError(FrameError::Code::FrameTooLarge, "frame of " + std::to_string(len) + " bytes");
  }
  if (len == 0) throw FrameError(FrameError::Code::TruncatedFrame, "empty payload");
  return len;
}

json decode_frame(std::string_view bytes) {
  std::uint32_t len = frame_length(bytes);
  std::string_view body = bytes.substr(4);
  if (body.size() < len) throw FrameError(FrameError::Code::TruncatedFrame, "payload shorter than its prefix");
  if (body.size() > len) throw FrameError(FrameError::Code::MalformedJson, "trailing bytes after payload");
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw FrameError(FrameError::Code::MalformedJson, e.what());
  }
}

json RequestFrame::to_json() const {
  json j{{"command", command}, {"max_output_tokens", max_output_tokens}};
  if (timeout_s) j["timeout_s"] = *timeout_s;
  return j;
}

RequestFrame RequestFrame::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("request must be a JSON object");
  for (const char* key : {"shards", "shard_count"}) {
    if (j.contains(key)) throw std::invalid_argument("per-request shard override is not supported");
  }
  RequestFrame r;
  if (!j.contains("command") || !j["command"].is_string()) throw std::invalid_argument("missing string 'command'");
  r.command = j["command"].get<std::string>();
  if (r.command.empty()) throw std::invalid_argument("'command' is empty");
  if (j.contains("max_output_tokens") && !j["max_output_tokens"].is_null()) {
    const auto& v = j["max_output_tokens"];
    if (!v.is_number_integer() || v.get<long long>() < 1) {
      throw std::invalid_argument("'max_output_tokens' must be a positive integer");
    }
    r.max_output_tokens = v.get<std::size_t>();
  }
  if (j.contains("timeout_s") && !j["timeout_s"].is_null()) {
    const auto& v = j["timeout_s"];
    if (!v.is_number() || !(v.get<double>() > 0) || !std::isfinite(v.get<double>())) {
      throw std::invalid_argument("'timeout_s' must be a positive number");
    }
    r.timeout_s = v.get<double>();
  }
  return r;
}

json ResponseFrame::to_json() const {
  json j{{"stderr", stderr_text}, {"exit_code", exit_code}, {"truncated", truncated}, {"telemetry", telemetry}};
  if (is_valid_utf8(stdout_bytes)) {
    j["stdout"] = stdout_bytes;
  } else {
    j["stdout"] = base64_encode(stdout_bytes);
    j["stdout_encoding"] = "base64";
  }
  return j;
}

ResponseFrame ResponseFrame::from_json(const json& j) {
  ResponseFrame r;
  r.stdout_bytes = j.at("stdout").get<std::string>();
  if (j.value("stdout_encoding", "utf-8") == "base64") r.stdout_bytes = base64_decode(r.stdout_bytes);
  r.stderr_text = j.value("stderr", "");
  r.exit_code = j.at("exit_code").get<int>();
  r.truncated = j.value("truncated", false);
  r.telemetry = j.value("telemetry", json::object());
  return r;
}

Truncated truncate_output(std::string_view out, std::size_t max_tokens) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; };
  std::size_t tokens = 0;
  std::size_t i = 0;
  while (i < out.size()) {
    while (i < out.size() && is_space(out[i])) ++i;
    if (i == out.size()) break;
    if (tokens == max_tokens) {
      // A further token exists: cut after the previous one.
      std::size_t end = i;
      while (end > 0 && is_space(out[end - 1])) --end;
      return {std::string(out.substr(0, end)) + std::string(kTruncationMarker), true};
    }
    while (i < out.size() && !is_space(out[i])) ++i;
    ++tokens;
  }
  return {std::string(out), false};
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xe0) == 0xc0) {
      len = 2;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      len = 3;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xc0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    static constexpr std::array<std::uint32_t, 5> kMin{0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
    i += len;
  }
  return true;
}

namespace {
constexpr std::string_view kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                      static_cast<unsigned char>(bytes[i + 2]);
    for (int s = 18; s >= 0; s -= 6) out.push_back(kB64[(v >> s) & 0x3f]);
  }
  std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
    if (rest == 2) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
    out.push_back(kB64[(v >> 18) & 0x3f]);
    out.push_back(kB64[(v >> 12) & 0x3f]);
    out.push_back(rest == 2 ? kB64[(v >> 6) & 0x3f] : '=');
    out.push_back('=');
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  std::string out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    auto pos = kB64.find(c);
    if (pos == std::string_view::npos) throw std::invalid_argument("invalid base64");
    acc = (acc << 6) | static_cast<std::uint32_t>(pos);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((acc >> bits) & 0xff));
    }
  }
  return out;
}

ResponseFrame handle_request(const Engine& engine, const RequestFrame& request) {
  RunOptions options;
  if (request.timeout_s) {
    options.timeout = std::chrono::milliseconds(static_cast<long long>(std::ceil(*request.timeout_s * 1000.0)));
  }
  ExecOutcome outcome = engine.run(request.command, options);
  Truncated t = truncate_output(outcome.out, request.max_output_tokens);
  ResponseFrame r;
  r.stdout_bytes = std::move(t.text);
  r.truncated = t.truncated;
  r.stderr_text = std::move(outcome.err);
  r.exit_code = outcome.exit_code;
  r.telemetry = outcome.telemetry.to_json();
  r.telemetry["truncated"] = t.truncated;
  return r;
}

}  // namespace shardpipe
