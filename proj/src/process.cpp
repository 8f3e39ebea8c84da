#include "shardpipe/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <set>

extern char** environ;

namespace shardpipe {

SpawnError::SpawnError(const std::string& program, int err)
    : std::runtime_error("cannot start '" + program + "': " + std::strerror(err)), program_(program), err_(err) {}

namespace {

using Clock = std::chrono::steady_clock;

// File descriptor that is close-on-exec and never one of 0/1/2, so dup2 in the
// child always clears the flag on the target.
class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {
    if (fd_ >= 0 && fd_ <= 2) {
      int moved = ::fcntl(fd_, F_DUPFD_CLOEXEC, 3);
      ::close(fd_);
      fd_ = moved;
    }
  }
  ~Fd() { reset(); }
  Fd(Fd&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

std::pair<Fd, Fd> make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw SpawnError("pipe", errno);
  return {Fd(fds[0]), Fd(fds[1])};
}

class SpawnAttrs {
 public:
  SpawnAttrs() {
    posix_spawn_file_actions_init(&actions_);
    posix_spawnattr_init(&attr_);
  }
  ~SpawnAttrs() {
    posix_spawn_file_actions_destroy(&actions_);
    posix_spawnattr_destroy(&attr_);
  }
  SpawnAttrs(const SpawnAttrs&) = delete;
  SpawnAttrs& operator=(const SpawnAttrs&) = delete;

  posix_spawn_file_actions_t* actions() { return &actions_; }
  posix_spawnattr_t* attr() { return &attr_; }

 private:
  posix_spawn_file_actions_t actions_;
  posix_spawnattr_t attr_;
};

void kill_and_reap(const std::vector<pid_t>& pids, pid_t pgid) {
  if (pgid > 0) ::kill(-pgid, SIGKILL);
  for (pid_t pid : pids) {
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
  }
}

}  // namespace

int stage_status_from_wait(int wait_status) {
  if (WIFEXITED(wait_status)) return WEXITSTATUS(wait_status);
  if (WIFSIGNALED(wait_status)) {
    int sig = WTERMSIG(wait_status);
    return sig == SIGPIPE ? 0 : 128 + sig;
  }
  return 2;
}

int pipeline_status(const std::vector<int>& stage_status) {
  if (stage_status.empty()) return 0;
  int rightmost_error = 0;
  for (int s : stage_status) {
    if (s >= 2) rightmost_error = s;
  }
  // An upstream 1 is not trusted: rg can report "no match" after a
  // downstream head closed the pipe, depending on timing.
  return rightmost_error != 0 ? rightmost_error : stage_status.back();
}

std::vector<std::string> make_environment(const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::vector<std::string> env;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    std::string_view entry(*e);
    auto key = entry.substr(0, entry.find('='));
    bool overridden = std::any_of(overrides.begin(), overrides.end(), [&](const auto& kv) { return kv.first == key; });
    if (!overridden) env.emplace_back(entry);
  }
  for (const auto& [k, v] : overrides) env.push_back(k + "=" + v);
  return env;
}

ProcessResult run_pipeline(const std::vector<std::vector<std::string>>& stages, const SpawnOptions& options) {
  ProcessResult result;
  const auto started = Clock::now();
  const std::size_t m = stages.size();
  if (m == 0) return result;

  int null_raw = ::open("/dev/null", O_RDONLY | O_CLOEXEC);
  if (null_raw < 0) throw SpawnError("/dev/null", errno);
  Fd dev_null(null_raw);
  auto [out_r, out_w] = make_pipe();
  auto [err_r, err_w] = make_pipe();
  std::vector<std::pair<Fd, Fd>> links;
  for (std::size_t i = 0; i + 1 < m; ++i) links.push_back(make_pipe());

  std::vector<char*> envp;
  envp.reserve(options.env.size() + 1);
  for (const auto& e : options.env) envp.push_back(const_cast<char*>(e.c_str()));
  envp.push_back(nullptr);

  sigset_t default_signals;
  sigemptyset(&default_signals);
  for (int sig : {SIGPIPE, SIGINT, SIGTERM, SIGHUP, SIGQUIT, SIGCHLD}) sigaddset(&default_signals, sig);
  sigset_t empty_mask;
  sigemptyset(&empty_mask);

  std::vector<pid_t> pids;
  pid_t pgid = 0;
  for (std::size_t i = 0; i < m; ++i) {
    SpawnAttrs sa;
    int in_fd = i == 0 ? dev_null.get() : links[i - 1].first.get();
    int out_fd = i + 1 == m ? out_w.get() : links[i].second.get();
    posix_spawn_file_actions_adddup2(sa.actions(), in_fd, 0);
    posix_spawn_file_actions_adddup2(sa.actions(), out_fd, 1);
    posix_spawn_file_actions_adddup2(sa.actions(), err_w.get(), 2);
    if (options.working_dir) {
      posix_spawn_file_actions_addchdir_np(sa.actions(), options.working_dir->c_str());
    }
    posix_spawnattr_setflags(sa.attr(), POSIX_SPAWN_SETPGROUP | POSIX_SPAWN_SETSIGDEF | POSIX_SPAWN_SETSIGMASK);
    posix_spawnattr_setpgroup(sa.attr(), pgid);
    posix_spawnattr_setsigdefault(sa.attr(), &default_signals);
    posix_spawnattr_setsigmask(sa.attr(), &empty_mask);

    std::vector<char*> argv;
    for (const auto& a : stages[i]) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);

    pid_t pid = 0;
    int rc = ::posix_spawnp(&pid, argv[0], sa.actions(), sa.attr(), argv.data(), envp.data());
    if (rc != 0) {
      kill_and_reap(pids, pgid);
      throw SpawnError(stages[i][0], rc);
    }
    if (pgid == 0) pgid = pid;
    pids.push_back(pid);
  }

  // Only the children hold these now.
  dev_null.reset();
  out_w.reset();
  err_w.reset();
  links.clear();

  const auto deadline = started + options.timeout;
  std::string buf(64 * 1024, '\0');
  bool out_open = true;
  bool err_open = true;
  while (out_open || err_open) {
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (remaining.count() <= 0) {
      result.timed_out = true;
      break;
    }
    pollfd fds[2];
    nfds_t nfds = 0;
    if (out_open) fds[nfds++] = {out_r.get(), POLLIN, 0};
    if (err_open) fds[nfds++] = {err_r.get(), POLLIN, 0};
    int ready = ::poll(fds, nfds, static_cast<int>(std::min<long long>(remaining.count(), 1000)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (nfds_t k = 0; k < nfds; ++k) {
      if ((fds[k].revents & (POLLIN | POLLHUP | POLLERR)) == 0) continue;
      ssize_t got = ::read(fds[k].fd, buf.data(), buf.size());
      if (got < 0 && (errno == EINTR || errno == EAGAIN)) continue;
      bool is_out = fds[k].fd == out_r.get();
      if (got <= 0) {
        (is_out ? out_open : err_open) = false;
        continue;
      }
      std::string& sink = is_out ? result.out : result.err;
      std::size_t cap = is_out ? options.stdout_cap : options.stderr_cap;
      std::size_t room = cap > sink.size() ? cap - sink.size() : 0;
      auto n = static_cast<std::size_t>(got);
      sink.append(buf.data(), std::min(room, n));
      if (n > room && is_out) result.out_capped = true;
    }
  }

  if (result.timed_out) ::kill(-pgid, SIGKILL);
  out_r.reset();
  err_r.reset();

  for (pid_t pid : pids) {
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    result.stage_status.push_back(stage_status_from_wait(status));
  }
  result.exit_code = result.timed_out ? kTimeoutExitCode : pipeline_status(result.stage_status);
  result.duration = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started);
  return result;
}

}  // namespace shardpipe
