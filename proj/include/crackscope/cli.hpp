#pragma once

namespace crackscope {

// Entry point behind the crackscope binary, callable in-process for tests.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
int run_cli(int argc, const char* const* argv);

}  // namespace crackscope
