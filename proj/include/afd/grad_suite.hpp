#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Finite-difference validation of every differentiable op, the adapter
// projection (both residual-width readings), the task loss through the whole
// student, and the combined objective through student + adapter.

namespace afd {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

std::vector<GradCheckResult> run_grad_suite(uint64_t seed, double tol = 1e-5, double h = 1e-6);

}  // namespace afd
