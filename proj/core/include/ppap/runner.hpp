#pragma once

#include <string>
#include <vector>

#include "ppap/config.hpp"
#include "ppap/harness.hpp"

namespace ppap {

struct RunOutput {
    std::vector<CsvRow> rows;
    std::vector<std::string> profile_paths; // finalized activity profiles
};

// Executes every cell of the configured protocol matrix (seeds x variants x
// strengths, plus holdouts for loco) on a bounded worker pool. Cells are
// fully independent: each derives its randomness from purpose-named streams,
// so results do not depend on scheduling. Profile files land under
// <out_dir>/profiles. Throws on the first failed cell.
RunOutput execute_config(const ExperimentConfig& cfg);

} // namespace ppap
