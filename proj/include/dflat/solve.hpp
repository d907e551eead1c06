#pragma once

#include <span>
#include <string>
#include <vector>

#include "dflat/expr.hpp"

namespace dflat {

struct SolveResult {
    bool ok = false;
    Substitution solution;  // unknown -> expression over the remaining (known) variables
    std::vector<Var> unsolved;
    std::string diagnostic;
};

// Solves residuals = 0 for `unknowns` by repeated elimination of an unknown that enters
// some residual affinely with a coefficient free of the other unsolved unknowns, plus
// inversion of tan/cot/atan when the residual is affine in such a function of a single
// unknown. `refs` are points on the solution set (binding unknowns and knowns); they pick
// pivots with coefficients bounded away from zero and check the inverse branch.
SolveResult solve_restricted(std::vector<Expr> residuals, std::span<const Var> unknowns,
                             std::span<const Point> refs, double tol = 1e-8);

}  // namespace dflat
