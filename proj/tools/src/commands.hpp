#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "run_config.hpp"

namespace opdyn::cli {

struct CommandArgs {
  RunConfig config;
  std::optional<std::filesystem::path> in;
  std::optional<std::filesystem::path> out;
};

// Each returns the process exit status; errors propagate as exceptions.
int cmd_generate(const CommandArgs& args, std::ostream& log);
int cmd_noise(const CommandArgs& args, std::ostream& log);
int cmd_train(const CommandArgs& args, std::ostream& log);
int cmd_predict(const CommandArgs& args, std::ostream& log);
// Writes <out>.spec and <out>.peaks.
int cmd_spectrum(const CommandArgs& args, std::ostream& log);
// Writes <out> (per-time drift table) and <out>.spectra.
int cmd_compare(const CommandArgs& args, std::ostream& log);
int cmd_validate(const CommandArgs& args, std::ostream& log);

// Runs `command` and maps exceptions to exit statuses: 1 for usage, config
// and format errors, 2 for numerical failures.
int run_command(const std::string& command, const CommandArgs& args, std::ostream& log);

}  // namespace opdyn::cli
