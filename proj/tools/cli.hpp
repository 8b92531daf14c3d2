#pragma once

#include <ostream>

namespace msmsharp::cli {

/// Entry point of the msm-sharp tool, with the streams injected so tests can
/// capture output. Returns the process exit code: 0 success, 2 input or
/// usage error, 3 numerical failure. Errors print one line to `err` of the
/// form `error[<code>]: <message>`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace msmsharp::cli
