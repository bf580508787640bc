#pragma once

#include <iosfwd>

namespace ccfpca::cli {

//! Entry point of the `ccfpca` tool. Returns 0 on success, 1 on invalid
//! input or usage, 2 on numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

//! Worker count from CCFPCA_WORKERS, or 0 when unset.
int workers_from_env();

} // namespace ccfpca::cli
