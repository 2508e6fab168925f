#pragma once

#include <ostream>

#include "inrbo/errors.hpp"

namespace inrbo::cli {

/// Exit statuses: 0 success, 1 failed check or internal error,
/// 2 user/config error, 3 IO or data error.
int exit_code_for(ErrorCode code);

/// Entry point of the `inrbo` command; returns the process exit status.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace inrbo::cli
