#pragma once

#include <string>
#include <vector>

namespace flow4d {

struct GradCheckResult {
    std::string block;
    double max_rel_err = 0.0;
    double threshold = 1e-4;
    bool pass = false;
};

std::vector<std::string> registered_blocks();

// Builds the named block at a small width with randomized parameters and
// fixed random inputs, then compares every parameter gradient of a random
// scalar readout against central finite differences (step 1e-5).
// rel err = |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
GradCheckResult grad_check(const std::string& block, uint64_t seed);

std::vector<GradCheckResult> grad_check_all(uint64_t seed);

}  // namespace flow4d
