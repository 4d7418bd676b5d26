#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lofi::cli {

/// Entry point shared by the `lofi` binary and the tests. Returns the process
/// exit code: 0 on success, 1 for runtime errors, 2 for usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lofi::cli
