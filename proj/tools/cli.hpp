#pragma once

#include <filesystem>
#include <ostream>
#include <string>

namespace selfsim::cli {

enum ExitCode { kOk = 0, kUsage = 2, kNumerical = 3, kIo = 4 };

/// Parses argv, runs one subcommand, writes its outputs and manifest.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace selfsim::cli
