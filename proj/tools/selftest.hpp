#pragma once

#include <ostream>

namespace bcot {

// Runs the property battery, prints one row per check, returns the number of
// failed checks.
int run_selftest(std::ostream& out);

}  // namespace bcot
