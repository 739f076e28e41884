#ifndef ASCNET_CLI_HPP
#define ASCNET_CLI_HPP

#include <string>
#include <vector>

namespace ascnet::cli {

/// Runs one subcommand (prepare, train, eval, denoise, report) given the
/// argument vector without the program name. Returns the process exit
/// code: 0 success, 2 bad arguments, 3 input parse errors, 4 training
/// divergence, 5 config mismatch, 6 report schema mismatch.
int run(const std::vector<std::string>& args);

}  // namespace ascnet::cli

#endif  // ASCNET_CLI_HPP
