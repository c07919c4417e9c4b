#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace sattn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable naming the directory for relative output paths.
inline constexpr const char* kOutputDirEnv = "SATTN_OUTPUT_DIR";

/// Relative paths land under $SATTN_OUTPUT_DIR when it is set.
std::filesystem::path resolve_output(const std::string& path);

/// Subcommands: gen, verify, splitvc, gradcheck, train, bench. args[0] is the
/// program name. Returns 0 on success, 1 when a check fails, 2 on a usage or
/// input error.
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_run(int argc, char** argv);

} // namespace sattn
