#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace autoform {

/// Entry point behind the binary's main(): 0 on success, 1 on operational
/// failure, 2 on usage errors. Diagnostics go to `err`, data to files or
/// `out`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace autoform
