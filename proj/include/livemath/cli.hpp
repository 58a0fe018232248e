#pragma once

#include <ostream>

namespace livemath::cli {

/// The `livemath` command line. Returns the process exit status; failures
/// print one JSON error record on `err`.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

/// The standalone `decontam build|flag` command line.
int run_decontam(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace livemath::cli
