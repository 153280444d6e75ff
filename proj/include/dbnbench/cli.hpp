#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dbnbench/experiment.hpp"

namespace dbnbench {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitIo = 2;

/// Parses flags (and a `--config` file of `key = value` lines, overridden by
/// flags) into an experiment config. Throws ConfigError on bad input.
ExperimentConfig parse_experiment_args(const std::vector<std::string>& args);

/// Whole command: parse, run, write CSVs. `args` excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "1,12,25" or "1 12 25" -> {1, 12, 25}.
std::vector<int> parse_int_list(const std::string& text);
std::vector<double> parse_real_list(const std::string& text);

}  // namespace dbnbench
