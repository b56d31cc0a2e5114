#pragma once

#include <iosfwd>

namespace dosecomb::cli {

/// Entry point shared by the executable and the tests. Exit codes: 0 ok,
/// 1 runtime failure (e.g. port in use), 2 bad arguments or input files.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dosecomb::cli
