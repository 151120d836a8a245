#pragma once

namespace cropway {

/// Entry point for the cropway command-line tool. Returns the process exit
/// code: 0 on success, 2 for configuration/usage errors, 1 otherwise.
int cli_run(int argc, const char* const* argv);

}  // namespace cropway
