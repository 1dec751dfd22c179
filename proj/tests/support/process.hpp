#pragma once

// Child processes for the cli tests: spawn with extra environment, read
// stdout line by line, collect exit codes.

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

extern char** environ;

namespace fixtures {

struct Proc {
  pid_t pid = -1;
  int out_fd = -1;
};

inline std::vector<std::string> cli_env(std::map<std::string, std::string> const& extra) {
  std::vector<std::string> env;
  for (char** e = environ; *e; ++e) {
    std::string s(*e);
    auto const key = s.substr(0, s.find('='));
    if (!extra.count(key)) env.push_back(s);
  }
  for (auto const& [k, v] : extra) env.push_back(k + "=" + v);
  return env;
}

inline Proc spawn(std::vector<std::string> const& args, std::map<std::string, std::string> const& extra) {
  int fds[2];
  if (pipe(fds) != 0) throw std::runtime_error("pipe failed");
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_adddup2(&fa, fds[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&fa, fds[0]);
  std::vector<char*> argv;
  for (auto const& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  auto const env = cli_env(extra);
  std::vector<char*> envp;
  for (auto const& e : env) envp.push_back(const_cast<char*>(e.c_str()));
  envp.push_back(nullptr);
  Proc p;
  int const rc = posix_spawn(&p.pid, argv[0], &fa, nullptr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&fa);
  close(fds[1]);
  if (rc != 0) throw std::runtime_error("spawn failed");
  p.out_fd = fds[0];
  return p;
}

// Reads one line, giving up after `timeout`.
inline std::optional<std::string> read_line(int fd, std::chrono::milliseconds timeout) {
  std::string line;
  auto const deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    auto const left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    pollfd pfd{fd, POLLIN, 0};
    if (poll(&pfd, 1, static_cast<int>(left.count())) <= 0) return std::nullopt;
    char ch;
    if (read(fd, &ch, 1) != 1) return std::nullopt;
    if (ch == '\n') return line;
    line += ch;
  }
}

struct RunResult {
  int exit_code = -1;
  std::string out;
};

inline RunResult run_cli(std::string const& binary, std::vector<std::string> args,
                         std::map<std::string, std::string> const& env) {
  args.insert(args.begin(), binary);
  auto p = spawn(args, env);
  RunResult r;
  char buf[4096];
  ssize_t n;
  while ((n = read(p.out_fd, buf, sizeof buf)) > 0) r.out.append(buf, static_cast<std::size_t>(n));
  close(p.out_fd);
  int status = 0;
  waitpid(p.pid, &status, 0);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace fixtures
