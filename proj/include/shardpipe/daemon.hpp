#pragma once

// Long-running server: framed requests over a unix stream socket.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <list>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

#include "shardpipe/engine.hpp"
#include "shardpipe/protocol.hpp"

namespace shardpipe {

class DaemonError : public std::runtime_error {
 public:
  enum class Code { BindFailure, VerificationFailure };
  DaemonError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

/// Connection-level failures on the client side.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Appends one JSON object per line; safe to call from many threads.
class TelemetryLog {
 public:
  explicit TelemetryLog(const std::filesystem::path& path);
  void append(const nlohmann::json& record);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

struct ServerOptions {
  std::filesystem::path socket_path;
  std::optional<std::filesystem::path> telemetry_path;
  bool verify_on_start = true;
  bool warm_on_start = true;
};

class Server {
 public:
  Server(const Engine& engine, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// verify + warm + bind + listen. Throws DaemonError.
  void start();
  /// Accept loop; returns after stop(). Removes the socket file on exit.
  void serve();
  /// Safe from any thread and from a signal handler.
  void stop() noexcept;

  std::uint64_t requests_handled() const { return handled_.load(); }
  std::uint64_t bytes_warmed() const { return warmed_; }
  const std::filesystem::path& socket_path() const { return options_.socket_path; }

 private:
  void handle_connection(int fd);

  const Engine& engine_;
  ServerOptions options_;
  std::optional<TelemetryLog> telemetry_;
  int listen_fd_ = -1;
  int wake_[2] = {-1, -1};
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> handled_{0};
  std::uint64_t warmed_ = 0;

  std::mutex conn_mu_;
  std::list<int> conn_fds_;
  std::list<std::thread> workers_;
};

/// Blocking frame I/O. read_frame returns nullopt on clean EOF before a prefix.
std::optional<nlohmann::json> read_frame(int fd);
void write_frame(int fd, const nlohmann::json& payload);

class Client {
 public:
  /// Throws TransportError if the socket cannot be reached.
  explicit Client(const std::filesystem::path& socket_path);
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  ResponseFrame request(const RequestFrame& req);
  /// Raw JSON round trip, for protocol tests.
  nlohmann::json round_trip(const nlohmann::json& payload);

 private:
  int fd_ = -1;
};

/// $SHARDPIPE_SOCKET, or a per-user default under /tmp.
std::filesystem::path default_socket_path();

}  // namespace shardpipe
