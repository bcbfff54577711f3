#pragma once

#include <string>
#include <vector>

namespace cdt {

struct CheckResult {
    int index = 0;
    std::string name;
    bool pass = false;
    std::string detail;  // measured values behind the verdict
};

// Property checks 1..10: calibration, endpoint clamps, forward-marginal
// consistency, increment identity, schedule-energy domination, sampler
// exactness, oracle round-trip, plain-VP reduction, Gaussian-posterior
// oracle, training smoke with gradient checks. A few minutes of CPU.
std::vector<CheckResult> run_fast_checks();

// Directional studies 11..13 on trained models (ablation, step efficiency,
// misalignment robustness). Trains six small models; tens of minutes of CPU.
std::vector<CheckResult> run_training_studies();

}  // namespace cdt
