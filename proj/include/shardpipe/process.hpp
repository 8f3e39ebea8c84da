#pragma once

// Spawns a chain of child processes connected stdout -> stdin, exactly like a
// shell pipe but without a shell, and captures the final stdout and the
// shared stderr.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace shardpipe {

inline constexpr int kTimeoutExitCode = 124;
inline constexpr int kSpawnFailureExitCode = 127;

class SpawnError : public std::runtime_error {
 public:
  SpawnError(const std::string& program, int err);
  const std::string& program() const noexcept { return program_; }
  int error() const noexcept { return err_; }

 private:
  std::string program_;
  int err_;
};

struct SpawnOptions {
  std::vector<std::string> env;  // complete "KEY=VALUE" environment
  std::optional<std::filesystem::path> working_dir;
  std::chrono::milliseconds timeout{30'000};
  std::size_t stdout_cap = std::numeric_limits<std::size_t>::max();
  std::size_t stderr_cap = 1 << 20;
};

struct ProcessResult {
  std::string out;
  std::string err;
  int exit_code = 0;
  bool timed_out = false;
  bool out_capped = false;  // stdout exceeded stdout_cap; the rest was drained and dropped
  std::vector<int> stage_status;
  std::chrono::milliseconds duration{0};
};

/// Status of one stage as a shell reports it, except that death by SIGPIPE
/// (a downstream `head` closing early) counts as success.
int stage_status_from_wait(int wait_status);

/// Pipeline status: the rightmost stage status >= 2 if any, otherwise the
/// last stage's status (what a shell without pipefail reports).
int pipeline_status(const std::vector<int>& stage_status);

/// The current process environment with `overrides` applied.
std::vector<std::string> make_environment(const std::vector<std::pair<std::string, std::string>>& overrides);

/// Throws SpawnError if any stage cannot be started; already started stages
/// are killed and reaped first.
ProcessResult run_pipeline(const std::vector<std::vector<std::string>>& stages, const SpawnOptions& options);

}  // namespace shardpipe
