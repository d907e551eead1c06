#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "dflat/expr.hpp"

namespace dflat {

// Count of singular values above tol_rel * sigma_max. Throws on non-finite entries.
int numeric_rank(const Eigen::MatrixXd& M, double tol_rel = 1e-8);

// Evaluates a symbolic matrix; propagates EvalError.
Eigen::MatrixXd evaluate(const std::vector<std::vector<Expr>>& M, const Point& p);
Eigen::VectorXd evaluate(std::span<const Expr> v, const Point& p);

// Symbolic Jacobian of `exprs` w.r.t. `vars` evaluated at `point`.
Eigen::MatrixXd numeric_jacobian(std::span<const Expr> exprs, std::span<const Var> vars, const Point& point);

// max |symbolic - central difference| / (1 + |symbolic|) over all entries.
double fd_jacobian_check(std::span<const Expr> exprs, std::span<const Var> vars, const Point& point,
                         double h = 1e-6);

// Result of evaluating a rank at several sample points. Points where evaluation hits
// a pole are skipped; `generic` is the maximum over the remaining ones.
struct RankSample {
    int generic = 0;
    int min = 0;
    int at_first = -1;  // rank at points[0] (usually the unperturbed point), -1 on a pole
    int evaluated = 0;
};

RankSample sample_rank(std::span<const Expr> exprs, std::span<const Var> vars, std::span<const Point> points,
                       double tol_rel = 1e-8);

// True if `e` depends on `v`: structurally, and with a derivative of magnitude above
// `threshold` at some sample point.
bool depends_on(const Expr& e, const Var& v, std::span<const Point> points, double threshold = 1e-9);

}  // namespace dflat
