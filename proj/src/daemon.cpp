#include "shardpipe/daemon.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>

namespace shardpipe {

using nlohmann::json;

namespace {

sockaddr_un make_addr(const std::filesystem::path& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  const std::string s = path.string();
  if (s.empty() || s.size() >= sizeof(addr.sun_path)) {
    throw std::invalid_argument("socket path too long or empty: " + s);
  }
  std::memcpy(addr.sun_path, s.c_str(), s.size() + 1);
  return addr;
}

// Returns false on EOF before any byte was read.
bool read_exact(int fd, char* buf, std::size_t n, bool& partial) {
  std::size_t got = 0;
  partial = false;
  while (got < n) {
    ssize_t r = ::read(fd, buf + got, n - got);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("read: ") + std::strerror(errno));
    }
    if (r == 0) {
      partial = got > 0;
      return false;
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t w = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("write: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(w));
  }
}

json error_response(const std::string& message) {
  ResponseFrame r;
  r.stderr_text = "shardpipe: " + message + "\n";
  r.exit_code = 2;
  r.telemetry = {{"error", message}};
  return r.to_json();
}

}  // namespace

std::optional<json> read_frame(int fd) {
  char prefix[4];
  bool partial = false;
  if (!read_exact(fd, prefix, 4, partial)) {
    if (partial) throw FrameError(FrameError::Code::TruncatedFrame, "connection closed inside length prefix");
    return std::nullopt;
  }
  std::uint32_t len = frame_length(std::string_view(prefix, 4));
  std::string body(len, '\0');
  if (!read_exact(fd, body.data(), len, partial)) {
    throw FrameError(FrameError::Code::TruncatedFrame, "connection closed inside payload");
  }
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw FrameError(FrameError::Code::MalformedJson, e.what());
  }
}

void write_frame(int fd, const json& payload) { write_all(fd, encode_frame(payload)); }

TelemetryLog::TelemetryLog(const std::filesystem::path& path) : out_(path, std::ios::app) {
  if (!out_) throw std::runtime_error("cannot open telemetry log " + path.string());
}

void TelemetryLog::append(const json& record) {
  std::string line = record.dump(-1, ' ', false, json::error_handler_t::replace);
  std::lock_guard lock(mu_);
  out_ << line << '\n';
  out_.flush();
}

Server::Server(const Engine& engine, ServerOptions options) : engine_(engine), options_(std::move(options)) {}

Server::~Server() {
  stop();
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
  if (listen_fd_ >= 0) ::close(listen_fd_);
  for (int fd : wake_) {
    if (fd >= 0) ::close(fd);
  }
}

void Server::start() {
  if (const auto& shards = engine_.shards()) {
    if (options_.verify_on_start && !verify(*shards)) {
      throw DaemonError(DaemonError::Code::VerificationFailure,
                        "shard set in " + shards->shard_dir.string() + " does not match its manifest");
    }
    if (options_.warm_on_start) warmed_ = warm(*shards);
  }
  if (options_.telemetry_path) telemetry_.emplace(*options_.telemetry_path);

  if (::pipe2(wake_, O_CLOEXEC | O_NONBLOCK) != 0) {
    throw DaemonError(DaemonError::Code::BindFailure, std::string("pipe: ") + std::strerror(errno));
  }
  sockaddr_un addr;
  try {
    addr = make_addr(options_.socket_path);
  } catch (const std::invalid_argument& e) {
    throw DaemonError(DaemonError::Code::BindFailure, e.what());
  }

  // A leftover socket file is removed only if nobody answers on it.
  std::error_code ec;
  if (std::filesystem::exists(std::filesystem::symlink_status(options_.socket_path, ec))) {
    int probe = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
    bool alive = probe >= 0 && ::connect(probe, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0;
    if (probe >= 0) ::close(probe);
    if (alive) {
      throw DaemonError(DaemonError::Code::BindFailure,
                        "a daemon is already listening on " + options_.socket_path.string());
    }
    if (!std::filesystem::is_socket(options_.socket_path, ec)) {
      throw DaemonError(DaemonError::Code::BindFailure, options_.socket_path.string() + " exists and is not a socket");
    }
    std::filesystem::remove(options_.socket_path, ec);
  }

  listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) throw DaemonError(DaemonError::Code::BindFailure, std::string("socket: ") + std::strerror(errno));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listen_fd_, 64) != 0) {
    int err = errno;
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw DaemonError(DaemonError::Code::BindFailure,
                      "bind " + options_.socket_path.string() + ": " + std::strerror(err));
  }
}

void Server::stop() noexcept {
  stopping_.store(true);
  if (wake_[1] >= 0) {
    char c = 1;
    [[maybe_unused]] ssize_t n = ::write(wake_[1], &c, 1);
  }
}

void Server::serve() {
  if (listen_fd_ < 0) throw std::logic_error("Server::serve called before start");
  while (!stopping_.load()) {
    pollfd fds[2] = {{listen_fd_, POLLIN, 0}, {wake_[0], POLLIN, 0}};
    int r = ::poll(fds, 2, -1);
    if (r < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (fds[1].revents) break;
    if (!(fds[0].revents & POLLIN)) continue;
    int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    std::lock_guard lock(conn_mu_);
    conn_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { handle_connection(fd); });
  }

  ::close(listen_fd_);
  listen_fd_ = -1;
  std::error_code ec;
  std::filesystem::remove(options_.socket_path, ec);
  {
    std::lock_guard lock(conn_mu_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  std::list<std::thread> workers;
  {
    std::lock_guard lock(conn_mu_);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
}

void Server::handle_connection(int fd) {
  for (;;) {
    std::optional<json> frame;
    try {
      frame = read_frame(fd);
    } catch (const FrameError& e) {
      // A bad body still leaves the stream aligned; a bad prefix does not.
      if (e.code() == FrameError::Code::MalformedJson) {
        try {
          write_frame(fd, error_response(std::string("MalformedJson: ") + e.what()));
          continue;
        } catch (const TransportError&) {
        }
      } else {
        try {
          write_frame(fd, error_response(e.what()));
        } catch (const TransportError&) {
        }
      }
      break;
    } catch (const TransportError&) {
      break;
    }
    if (!frame) break;

    json reply;
    try {
      RequestFrame req = RequestFrame::from_json(*frame);
      ResponseFrame resp = handle_request(engine_, req);
      if (telemetry_) telemetry_->append(resp.telemetry);
      reply = resp.to_json();
    } catch (const std::invalid_argument& e) {
      reply = error_response(std::string("bad request: ") + e.what());
      if (telemetry_) telemetry_->append(reply["telemetry"]);
    } catch (const std::exception& e) {
      reply = error_response(std::string("internal error: ") + e.what());
      reply["exit_code"] = 4;
      if (telemetry_) telemetry_->append(reply["telemetry"]);
    }
    handled_.fetch_add(1);
    try {
      write_frame(fd, reply);
    } catch (const std::exception&) {
      break;
    }
  }
  std::lock_guard lock(conn_mu_);
  conn_fds_.remove(fd);
  ::close(fd);
}

Client::Client(const std::filesystem::path& socket_path) {
  sockaddr_un addr;
  try {
    addr = make_addr(socket_path);
  } catch (const std::invalid_argument& e) {
    throw TransportError(e.what());
  }
  fd_ = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    int err = errno;
    ::close(fd_);
    fd_ = -1;
    throw TransportError("connect " + socket_path.string() + ": " + std::strerror(err));
  }
}

Client::~Client() {
  if (fd_ >= 0) ::close(fd_);
}

json Client::round_trip(const json& payload) {
  write_frame(fd_, payload);
  std::optional<json> reply;
  try {
    reply = read_frame(fd_);
  } catch (const FrameError& e) {
    throw TransportError(std::string("bad reply: ") + e.what());
  }
  if (!reply) throw TransportError("daemon closed the connection");
  return *reply;
}

ResponseFrame Client::request(const RequestFrame& req) {
  json reply = round_trip(req.to_json());
  try {
    return ResponseFrame::from_json(reply);
  } catch (const std::exception& e) {
    throw TransportError(std::string("bad reply: ") + e.what());
  }
}

std::filesystem::path default_socket_path() {
  if (const char* env = std::getenv("SHARDPIPE_SOCKET"); env && *env) return env;
  return std::filesystem::temp_directory_path() / ("shardpipe-" + std::to_string(::getuid()) + ".sock");
}

}  // namespace shardpipe
