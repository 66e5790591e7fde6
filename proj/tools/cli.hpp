#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace stairwise::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kValidation = 2,  // bad arguments, out-of-range parameters, unknown config keys
  kIo = 3,          // missing or unwritable files
  kFormat = 4,      // malformed content not covered below
  kShape = 5,       // prediction or grid shape mismatch
  kVersion = 6,     // unsupported format version
  kTruncated = 7,   // payload shorter than the manifest declares
  kChecksum = 8,    // payload checksum mismatch
};

/// Environment variable that prefixes relative output directories.
inline constexpr const char* kOutputRootEnv = "STAIRWISE_OUTPUT_ROOT";

/// Parses and runs one invocation; args excludes the program name.
/// Diagnostics go to `err`, progress lines to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::filesystem::path resolve_output_dir(const std::filesystem::path& dir);

}  // namespace stairwise::cli
