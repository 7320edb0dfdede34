#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "suave/config.hpp"

namespace suave {

// Parsed command line. Precedence when resolving: defaults, then --config
// file, then --outdir/--seed, then --set assignments in the order given.
// The finetune subcommand inserts its derived layer (scaled lr, no warmup)
// before re-applying --set, so explicit overrides always win.
struct CliOptions {
  std::string subcommand;  // pretrain | finetune | eval | export-embeddings | make-data
  std::string config_path;
  std::string outdir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;  // raw "key=value" strings
};

// Resolved config for the given options; applies SUAVE_LAB_THREADS.
RunConfig resolve_config(const CliOptions& opts);

// Executes the subcommand; throws suave errors on failure.
void run_command_checked(const CliOptions& opts);

// Same, but catches, prints "error: ..." to stderr and returns the exit code.
int run_command(const CliOptions& opts);

}  // namespace suave
