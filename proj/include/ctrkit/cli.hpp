#pragma once

#include <string>
#include <vector>

namespace ctrkit {

// Full command-line surface: gen-data, train, eval, ablate-sampling,
// ablate-weights, case-study. Returns the process exit code:
// 0 success, 1 usage error, 2 data error, 3 numeric failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace ctrkit
