#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <string>
#include <vector>

#include "mles/core/error.hpp"

extern char** environ;

namespace mles {

/// A child process spoken to through newline-delimited frames on its
/// stdin/stdout. stderr is inherited.
class Subprocess {
public:
  explicit Subprocess(std::vector<std::string> argv) : argv_(std::move(argv)) {
    if (argv_.empty()) fail(ErrorCode::ConfigError, "empty evaluator command");
  }
  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;
  ~Subprocess() { kill(); }

  [[nodiscard]] bool running() const noexcept { return pid_ > 0; }
  [[nodiscard]] pid_t pid() const noexcept { return pid_; }

  void start() {
    kill();
    ::signal(SIGPIPE, SIG_IGN);
    int in[2];
    int out[2];
    if (::pipe2(in, O_CLOEXEC) != 0) fail(ErrorCode::EvaluatorUnavailable, std::strerror(errno));
    if (::pipe2(out, O_CLOEXEC) != 0) {
      ::close(in[0]);
      ::close(in[1]);
      fail(ErrorCode::EvaluatorUnavailable, std::strerror(errno));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out[1], STDOUT_FILENO);

    std::vector<char*> args;
    for (auto& a : argv_) args.push_back(a.data());
    args.push_back(nullptr);
    pid_t pid = 0;
    const int rc = ::posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in[0]);
    ::close(out[1]);
    if (rc != 0) {
      ::close(in[1]);
      ::close(out[0]);
      fail(ErrorCode::EvaluatorUnavailable, "cannot start " + argv_[0] + ": " + std::strerror(rc));
    }
    pid_ = pid;
    to_child_ = in[1];
    from_child_ = out[0];
    buffer_.clear();
  }

  void write_line(const std::string& line) {
    if (!running()) fail(ErrorCode::EvaluatorCrashed, "evaluator is not running");
    std::string frame = line;
    frame.push_back('\n');
    std::size_t off = 0;
    while (off < frame.size()) {
      const auto n = ::write(to_child_, frame.data() + off, frame.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        fail(ErrorCode::EvaluatorCrashed, std::string("write to evaluator failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  /// Next line without its newline. Timeout if none arrives in time,
  /// EvaluatorCrashed on end of stream.
  std::string read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      if (!running()) fail(ErrorCode::EvaluatorCrashed, "evaluator is not running");
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) fail(ErrorCode::Timeout, "no response from evaluator within " + std::to_string(timeout.count()) + " ms");
      pollfd pfd{from_child_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
      if (rc < 0) {
        if (errno == EINTR) continue;
        fail(ErrorCode::EvaluatorCrashed, std::strerror(errno));
      }
      if (rc == 0) continue;
      char chunk[65536];
      const auto n = ::read(from_child_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        fail(ErrorCode::EvaluatorCrashed, std::strerror(errno));
      }
      if (n == 0) {
        const int status = reap();
        fail(ErrorCode::EvaluatorCrashed, "evaluator exited (status " + std::to_string(status) + ")");
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  /// Closes stdin and waits briefly for a clean exit before killing.
  void close_gracefully(std::chrono::milliseconds grace = std::chrono::milliseconds{2000}) {
    if (!running()) return;
    close_fd(to_child_);
    const auto deadline = std::chrono::steady_clock::now() + grace;
    while (std::chrono::steady_clock::now() < deadline) {
      int status = 0;
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        close_fd(from_child_);
        return;
      }
      ::usleep(5000);
    }
    kill();
  }

  void kill() noexcept {
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      int status = 0;
      ::waitpid(pid_, &status, 0);
      pid_ = -1;
    }
    close_fd(to_child_);
    close_fd(from_child_);
    buffer_.clear();
  }

private:
  static void close_fd(int& fd) noexcept {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }

  int reap() noexcept {
    int status = 0;
    if (pid_ > 0) {
      bool exited = false;
      for (int i = 0; i < 200 && !exited; ++i) {
        exited = ::waitpid(pid_, &status, WNOHANG) == pid_;
        if (!exited) ::usleep(5000);
      }
      if (!exited) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
      }
    }
    pid_ = -1;
    close_fd(to_child_);
    close_fd(from_child_);
    return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  }

  std::vector<std::string> argv_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

} // namespace mles
