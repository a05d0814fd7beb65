#include "expo/subprocess.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <stdexcept>

namespace expo {

CommandResult run_command(const std::string& command, double timeout_sec) {
  int pipefd[2];
  if (::pipe(pipefd) != 0) {
    throw std::runtime_error(std::string("pipe failed: ") + std::strerror(errno));
  }

  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(pipefd[0]);
    ::close(pipefd[1]);
    throw std::runtime_error(std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::setpgid(0, 0);  // own process group so a timeout can kill pipelines
    ::close(pipefd[0]);
    ::dup2(pipefd[1], STDOUT_FILENO);
    ::close(pipefd[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }

  ::close(pipefd[1]);
  CommandResult result;
  const auto start = std::chrono::steady_clock::now();
  char buf[4096];
  bool open = true;
  while (open) {
    int wait_ms = -1;
    if (timeout_sec > 0) {
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const double remaining = timeout_sec - elapsed;
      if (remaining <= 0) {
        result.timed_out = true;
        break;
      }
      wait_ms = static_cast<int>(remaining * 1000) + 1;
    }
    struct pollfd pfd{pipefd[0], POLLIN, 0};
    const int rc = ::poll(&pfd, 1, wait_ms);
    if (rc < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (rc == 0) {
      result.timed_out = true;
      break;
    }
    const ssize_t got = ::read(pipefd[0], buf, sizeof(buf));
    if (got < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (got == 0) {
      open = false;
    } else {
      result.output.append(buf, static_cast<std::size_t>(got));
    }
  }
  ::close(pipefd[0]);

  if (result.timed_out) {
    ::kill(-pid, SIGKILL);
  }
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.exit_code = 128 + WTERMSIG(status);
  }
  return result;
}

}  // namespace expo
