#pragma once

namespace risk {

// Entry point of the risk_engine command line. Returns the process exit code:
// 0 success, 2 invalid input, 3 sampler failure, 4 I/O failure.
int run_cli(int argc, char** argv);

}  // namespace risk
