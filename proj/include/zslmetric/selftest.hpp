#ifndef ZSLMETRIC_SELFTEST_HPP
#define ZSLMETRIC_SELFTEST_HPP

#include <iosfwd>

namespace zslmetric {

/// Quick gradient and oracle sanity suite (the CLI `selftest` gate).
/// Prints one line per check; returns the number of failures.
int run_selftest(std::ostream& out);

}  // namespace zslmetric

#endif  // ZSLMETRIC_SELFTEST_HPP
