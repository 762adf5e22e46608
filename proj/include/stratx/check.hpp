#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stratx/types.hpp"

namespace stratx {

struct PropertyResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct CheckOptions {
    std::uint64_t seed = 1;
    int concentration_draws = 100000;
    int kkt_problems = 50;
    // Test hook: scales the sigma_a / kappa scale parameters inside the
    // concentration bounds. 1.0 is the honest bound; smaller values inject a
    // deliberate bug so the suite must fail (negative control).
    double sigma_scale = 1.0;
};

// Exact enumeration over all assignments of a 2-block, 8-unit population:
// E[tau_unadj] = tau to machine precision and Var(tau_unadj) bounded by the
// mean of the conservative variance estimate.
std::vector<PropertyResult> run_enumeration_suite();

// Tail bounds for the weighted sample mean and weighted sample covariance
// under stratified randomization, checked by Monte Carlo at t in {0.1, 0.2}
// of their scale parameters for MS/FL/MSFL layouts at n = 100.
std::vector<PropertyResult> run_concentration_suite(const CheckOptions& opts);

// Solver certificates on random weighted problems: KKT residual within
// tolerance and the null fit at lambda >= lambda_max.
std::vector<PropertyResult> run_kkt_suite(const CheckOptions& opts);

std::vector<PropertyResult> run_all_checks(const CheckOptions& opts);

// Enumeration helper shared with tests: all (n choose n1) assignment vectors.
std::vector<VectorXi> enumerate_complete_assignments(int n, int n1);

// All joint assignments of a stratified design (product over blocks).
std::vector<VectorXi> enumerate_stratified_assignments(const BlockStructure& blocks);

}  // namespace stratx
