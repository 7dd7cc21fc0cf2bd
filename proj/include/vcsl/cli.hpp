#pragma once

// Command-line driver.
//
// Subcommands: gen-corpus, pretrain --stage 1|2|3, probe, grad-check,
// export-metrics, info.  Every run prints the fully-resolved config and the
// seeds before doing any work.  Exit codes: 0 success, 2 usage errors (with
// help text on stderr), 3 config-schema violations (message carries the
// JSON-pointer of the offending key) and missing prerequisites, 1 anything
// else.  Errors are a single `error: ...` line on stderr.
//
// The environment variable VCSL_SEED, when set, overrides the training seed
// from the config; corpus and probe seeds are left alone so the data stays
// comparable across sweeps.

#include <iosfwd>
#include <string>
#include <vector>

namespace vcsl {

inline constexpr const char* kCliVersion = "1.0.0";

// `args` excludes the program name.  All output goes through the streams so
// callers (tests included) can capture it.
int run_command(const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err);

}  // namespace vcsl
