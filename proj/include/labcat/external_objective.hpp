#pragma once

#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "labcat/errors.hpp"
#include "labcat/optimizer.hpp"

namespace labcat {

/// Shortest representation that parses back to the same double.
inline std::string format_roundtrip(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Parses a single decimal number surrounded by optional whitespace.
inline double parse_objective_output(std::string_view out) {
  const auto ws = std::string_view(" \t\r\n\f\v");
  const auto b = out.find_first_not_of(ws);
  if (b == std::string_view::npos) throw ObjectiveNonFinite("objective command printed nothing");
  const auto e = out.find_last_not_of(ws);
  const std::string_view tok = out.substr(b, e - b + 1);
  double v = 0.0;
  const char* first = tok.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
    throw ObjectiveNonFinite("objective command printed a non-numeric response: '" +
                             std::string(tok) + "'");
  }
  if (!std::isfinite(v)) {
    throw ObjectiveNonFinite("objective command returned a non-finite value");
  }
  return v;
}

/// Objective that runs `/bin/sh -c command` once per evaluation, writes the coordinates as
/// whitespace-separated decimals to its standard input and reads one number back.
class ExternalObjective {
 public:
  explicit ExternalObjective(std::string command, std::chrono::milliseconds timeout =
                                                      std::chrono::seconds(60))
      : command_(std::move(command)), timeout_(timeout) {}

  double operator()(const Eigen::VectorXd& x) const {
    std::string input;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      if (k > 0) input += ' ';
      input += format_roundtrip(x(k));
    }
    input += '\n';

    int in_pipe[2];
    int out_pipe[2];
    if (pipe(in_pipe) != 0) throw IoFailure("pipe() failed");
    if (pipe(out_pipe) != 0) {
      close(in_pipe[0]);
      close(in_pipe[1]);
      throw IoFailure("pipe() failed");
    }
    const pid_t pid = fork();
    if (pid < 0) {
      for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
      throw IoFailure("fork() failed");
    }
    if (pid == 0) {
      dup2(in_pipe[0], STDIN_FILENO);
      dup2(out_pipe[1], STDOUT_FILENO);
      for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
      execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);

    write_ignoring_sigpipe(in_pipe[1], input);
    close(in_pipe[1]);

    std::string output;
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    bool timed_out = false;
    char buf[4096];
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) {
        timed_out = true;
        break;
      }
      pollfd pfd{out_pipe[0], POLLIN, 0};
      const int rc = poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc < 0 && errno == EINTR) continue;
      if (rc <= 0) {
        timed_out = rc == 0;
        break;
      }
      const ssize_t n = read(out_pipe[0], buf, sizeof buf);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      output.append(buf, static_cast<std::size_t>(n));
    }
    close(out_pipe[0]);
    if (timed_out) kill(pid, SIGKILL);
    int status = 0;
    while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    if (timed_out) throw ObjectiveNonFinite("objective command timed out");
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      throw ObjectiveNonFinite("objective command exited with a nonzero status");
    }
    return parse_objective_output(output);
  }

  [[nodiscard]] const std::string& command() const { return command_; }

 private:
  // A child that never reads its input must not take the whole process down with SIGPIPE.
  static void write_ignoring_sigpipe(int fd, const std::string& data) {
    sigset_t pipe_set, old_set;
    sigemptyset(&pipe_set);
    sigaddset(&pipe_set, SIGPIPE);
    pthread_sigmask(SIG_BLOCK, &pipe_set, &old_set);
    std::size_t off = 0;
    bool broken = false;
    while (off < data.size()) {
      const ssize_t n = write(fd, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        broken = errno == EPIPE;
        break;
      }
      off += static_cast<std::size_t>(n);
    }
    if (broken) {
      const timespec zero{0, 0};
      while (sigtimedwait(&pipe_set, nullptr, &zero) < 0 && errno == EINTR) {
      }
    }
    pthread_sigmask(SIG_SETMASK, &old_set, nullptr);
  }

  std::string command_;
  std::chrono::milliseconds timeout_;
};

}  // namespace labcat
