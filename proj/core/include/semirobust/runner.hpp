#pragma once

#include <map>
#include <string>
#include <vector>

#include "semirobust/config.hpp"

namespace semirobust {

struct RunRecord {
  std::string mode;
  std::string hash;     // config content hash; also the output directory name
  std::string out_dir;  // directory every artifact was written into
  std::vector<std::string> artifacts;     // file names inside out_dir
  std::map<std::string, double> timings_ms;  // phase -> wall clock; lives only here
  std::map<std::string, double> summary;     // headline numbers of the run
};

// Execute one configured pipeline and write its artifacts (config snapshot,
// run record, reports, logs, checkpoints) into <output_dir>/<config hash>/.
// Modes: train, attack-eval, diagnostics, rho-learn, lambda-solve, bounds.
// Everything except run_record.json (which carries timings) is byte-stable
// for a fixed config and seed. Errors carry the failing phase in their text.
RunRecord run(const ExperimentConfig& cfg, const std::string& mode);

// run the mode named in the config
RunRecord run(const ExperimentConfig& cfg);

}  // namespace semirobust
