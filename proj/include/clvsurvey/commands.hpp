#pragma once

// The five pipeline commands. Each reads its inputs from paths named in the
// config (defaulting to files inside run.out_dir), writes CSV outputs that
// begin with a provenance header, and returns the list of files written.

#include <string>
#include <string_view>
#include <vector>

#include "clvsurvey/config.hpp"
#include "clvsurvey/error.hpp"

namespace clvsurvey::cmd {

struct CommandResult {
  Status status = Status::ok;
  std::string message;             // reason when status is not ok
  std::vector<std::string> files;  // outputs in the order written
  std::vector<std::string> log;    // progress notes and warnings
};

const std::vector<std::string>& command_names();

/// Rejects unknown sections and keys so typos do not pass silently.
void validate_config(const Config& config);

/// Validation and numerical failures throw Error. A convergence failure under
/// strict mode is returned as Status::convergence after every output has been
/// written.
CommandResult run_command(std::string_view command, const Config& config);

CommandResult simulate(const Config& config);
CommandResult fit(const Config& config);
CommandResult estimate(const Config& config);
CommandResult diagnose(const Config& config);
CommandResult report(const Config& config);

}  // namespace clvsurvey::cmd
