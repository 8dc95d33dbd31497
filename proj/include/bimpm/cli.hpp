#pragma once

#include <iosfwd>

namespace bimpm
{

/// Entry point of the `bimpm` command-line tool. Returns the process exit code:
/// 0 success, 1 configuration error, 2 data error, 3 numeric failure, 4 verification failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace bimpm
