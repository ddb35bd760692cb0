#pragma once

#include "mvc/pipeline/pipeline.hpp"

#include <ostream>

namespace mvc {

/// Noise statistics, correspondence oracle equality and gradient checks on small
/// built-in rigs. Prints one line per check; true when every check passes.
bool run_selftest(const PipelineConfig& config, std::ostream& out);

} // namespace mvc
