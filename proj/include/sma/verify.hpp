#pragma once

#include <string>
#include <vector>

namespace sma {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string details;
    double seconds = 0.0;
};

// Property suites over all modules: submodularity, SMI monotonicity, the
// NT-Xent reduction, gradient checks, smooth-to-hard convergence, the
// quadratic-SMI gap direction, file round trips, and train determinism.
// `full` raises trial counts to the exhaustive settings.
std::vector<CheckResult> run_verification(bool full);

std::string verification_report_json(const std::vector<CheckResult>& results);

// Mutation self-test: a sign-flipped FLQMIA gradient must fail the
// finite-difference comparison. Returns true when the flip is detected.
bool grad_check_detects_sign_flip();

}  // namespace sma
