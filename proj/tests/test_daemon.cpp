#include <doctest.h>

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cstring>
#include <thread>

#include "shardpipe/daemon.hpp"
#include "shardpipe/harness.hpp"
#include "test_util.hpp"

using namespace shardpipe;
using nlohmann::json;
using testutil::TempDir;

namespace {

int raw_connect(const std::filesystem::path& path) {
  int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  std::strncpy(addr.sun_path, path.c_str(), sizeof(addr.sun_path) - 1);
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
  return fd;
}

void send_raw(int fd, const std::string& bytes) {
  REQUIRE(::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL) == static_cast<ssize_t>(bytes.size()));
}

// Engine plus a server thread bound to a socket in a temp dir.
struct Running {
  TempDir tmp;
  std::string tool = default_search_tool();
  std::optional<Engine> engine;
  std::optional<Server> server;
  std::thread thread;

  explicit Running(std::size_t shards = 3, bool with_telemetry = false) {
    gen_corpus(tmp / "c.jsonl", 21, 2000);
    engine.emplace(tmp / "c.jsonl", shard(tmp / "c.jsonl", shards, tmp / "s"));
    ServerOptions opts{tmp / "d.sock", std::nullopt};
    if (with_telemetry) opts.telemetry_path = tmp / "telemetry.jsonl";
    server.emplace(*engine, opts);
    server->start();
    thread = std::thread([this] { server->serve(); });
  }
  ~Running() { shutdown(); }
  void shutdown() {
    if (thread.joinable()) {
      server->stop();
      thread.join();
    }
  }
  std::filesystem::path socket() const { return tmp / "d.sock"; }
};

}  // namespace

TEST_CASE("daemon lifecycle") {
  Running d;
  CHECK(std::filesystem::exists(d.socket()));
  CHECK(d.server->bytes_warmed() == std::filesystem::file_size(d.tmp / "c.jsonl"));
  {
    Client c(d.socket());
    RequestFrame req;
    req.command = d.tool + " -F acid corpus.jsonl | head -n 3";
    auto resp = c.request(req);
    CHECK(resp.stdout_bytes == d.engine->run(req.command).out);
    CHECK(resp.exit_code == 0);
  }
  d.shutdown();
  CHECK_FALSE(std::filesystem::exists(d.socket()));
  CHECK(d.server->requests_handled() == 1);
}

TEST_CASE("requests on one connection are answered in order") {
  Running d(4, true);
  const std::vector<std::string> commands{d.tool + " -F e corpus.jsonl | head -n 2",
                                          d.tool + " -F a corpus.jsonl | wc -l",
                                          d.tool + " -o -F the corpus.jsonl | sort | uniq | head -n 3",
                                          d.tool + " -F zzzz corpus.jsonl", "cat corpus.jsonl | wc -l",
                                          d.tool + " x corpus.jsonl; ls"};
  Client c(d.socket());
  for (int i = 0; i < 120; ++i) {
    RequestFrame req;
    req.command = commands[i % commands.size()];
    req.max_output_tokens = 64;
    auto resp = c.request(req);
    auto local = handle_request(*d.engine, req);
    CAPTURE(req.command);
    CHECK(resp.stdout_bytes == local.stdout_bytes);
    CHECK(resp.exit_code == local.exit_code);
  }
  d.shutdown();
  std::ifstream log(d.tmp / "telemetry.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(log, line); ++lines) CHECK(json::parse(line).is_object());
  CHECK(lines == 120);
}

TEST_CASE("bad requests get error replies") {
  Running d;
  Client c(d.socket());
  auto override = c.round_trip({{"command", d.tool + " x corpus.jsonl"}, {"shards", 8}});
  CHECK(override["exit_code"] == 2);
  auto missing = c.round_trip({{"cmd", "x"}});
  CHECK(missing["exit_code"] == 2);
  auto forbidden = c.round_trip({{"command", "rg x corpus.jsonl > out"}});
  CHECK(forbidden["exit_code"] == 2);
  CHECK(forbidden["stderr"].get<std::string>().find("ForbiddenConstruct") != std::string::npos);

  // malformed JSON body: error reply, the connection survives
  int fd = raw_connect(d.socket());
  send_raw(fd, std::string("\x00\x00\x00\x03{]x", 7));
  auto reply = read_frame(fd);
  REQUIRE(reply);
  CHECK((*reply)["exit_code"] == 2);
  write_frame(fd, {{"command", "cat corpus.jsonl | wc -l"}});
  auto next = read_frame(fd);
  REQUIRE(next);
  CHECK((*next)["exit_code"] == 0);

  // oversized prefix: error reply, then the daemon hangs up
  send_raw(fd, std::string("\x7f\x00\x00\x00", 4));
  auto too_big = read_frame(fd);
  REQUIRE(too_big);
  CHECK((*too_big)["exit_code"] == 2);
  CHECK_FALSE(read_frame(fd));
  ::close(fd);
}

TEST_CASE("concurrent identical requests agree") {
  Running d(4);
  const std::string cmd = d.tool + " -F e corpus.jsonl | sort | uniq | head -n 20";
  std::vector<std::string> outs(6);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    threads.emplace_back([&, i] {
      Client c(d.socket());
      RequestFrame req;
      req.command = cmd;
      for (int k = 0; k < 5; ++k) outs[i] = c.request(req).stdout_bytes;
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& o : outs) CHECK(o == d.engine->run(cmd).out);
}

TEST_CASE("corrupt shards stop the daemon from starting") {
  TempDir tmp;
  gen_corpus(tmp / "c.jsonl", 1, 100);
  ShardSet ss = shard(tmp / "c.jsonl", 2, tmp / "s");
  std::string bytes = testutil::read_file(ss.shards[0].path);
  bytes[3] ^= 1;
  testutil::write_file(ss.shards[0].path, bytes);
  Engine eng(ss);
  Server server(eng, {tmp / "d.sock", std::nullopt});
  try {
    server.start();
    FAIL("started on corrupt shards");
  } catch (const DaemonError& e) {
    CHECK(e.code() == DaemonError::Code::VerificationFailure);
  }
  CHECK_FALSE(std::filesystem::exists(tmp / "d.sock"));
}

TEST_CASE("socket path conflicts") {
  Running d;
  Server second(*d.engine, {d.socket(), std::nullopt});
  try {
    second.start();
    FAIL("second daemon bound a live socket");
  } catch (const DaemonError& e) {
    CHECK(e.code() == DaemonError::Code::BindFailure);
  }

  TempDir tmp;
  testutil::write_file(tmp / "file.sock", "not a socket");
  Server on_file(*d.engine, {tmp / "file.sock", std::nullopt});
  CHECK_THROWS_AS(on_file.start(), DaemonError);

  // a stale socket file left behind by a dead process is replaced
  int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  std::strncpy(addr.sun_path, (tmp / "stale.sock").c_str(), sizeof(addr.sun_path) - 1);
  REQUIRE(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
  ::close(fd);
  Server stale(*d.engine, {tmp / "stale.sock", std::nullopt, false, false});
  CHECK_NOTHROW(stale.start());
}

TEST_CASE("client against a dead socket") {
  TempDir tmp;
  CHECK_THROWS_AS(Client(tmp / "nobody.sock"), TransportError);
}

TEST_CASE("default socket path honours the environment") {
  ::setenv("SHARDPIPE_SOCKET", "/tmp/custom.sock", 1);
  CHECK(default_socket_path() == "/tmp/custom.sock");
  ::unsetenv("SHARDPIPE_SOCKET");
  CHECK(default_socket_path().filename().string().starts_with("shardpipe-"));
}
