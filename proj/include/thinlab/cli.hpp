#pragma once

#include <string>
#include <vector>

namespace thinlab::io {

/// Dispatches thin | multithin | diagnose | cv | simulate.  args exclude the
/// program name.  Returns 0 on success, 2 on usage errors (unknown flags,
/// invalid plans), 1 on runtime errors.
int run_cli(const std::vector<std::string>& args);

}  // namespace thinlab::io
