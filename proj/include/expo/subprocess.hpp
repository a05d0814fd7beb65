#pragma once

#include <string>

namespace expo {

struct CommandResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string output;  // captured stdout; stderr passes through
};

// Runs `sh -c command`, capturing stdout. timeout_sec <= 0 means no limit;
// on timeout the process group is killed and timed_out is set.
CommandResult run_command(const std::string& command, double timeout_sec = 0.0);

}  // namespace expo
