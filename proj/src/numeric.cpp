#include "dflat/numeric.hpp"

#include <algorithm>
#include <cmath>

namespace dflat {

int numeric_rank(const Eigen::MatrixXd& M, double tol_rel) {
    if (!M.allFinite()) throw std::domain_error("numeric_rank: non-finite matrix entry");
    if (M.size() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    double cut = tol_rel * s(0);
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > cut) ++r;
    return r;
}

Eigen::MatrixXd evaluate(const std::vector<std::vector<Expr>>& M, const Point& p) {
    Eigen::Index rows = static_cast<Eigen::Index>(M.size());
    Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(M.front().size());
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = evaluate(M[i][j], p);
    return out;
}

Eigen::VectorXd evaluate(std::span<const Expr> v, const Point& p) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = evaluate(v[i], p);
    return out;
}

Eigen::MatrixXd numeric_jacobian(std::span<const Expr> exprs, std::span<const Var> vars, const Point& point) {
    return evaluate(jacobian(exprs, vars), point);
}

double fd_jacobian_check(std::span<const Expr> exprs, std::span<const Var> vars, const Point& point, double h) {
    auto J = jacobian(exprs, vars);
    double worst = 0.0;
    for (std::size_t j = 0; j < vars.size(); ++j) {
        Point plus = point, minus = point;
        double x0 = point.at(vars[j]);
        plus.set(vars[j], x0 + h);
        minus.set(vars[j], x0 - h);
        for (std::size_t i = 0; i < exprs.size(); ++i) {
            double sym = evaluate(J[i][j], point);
            double fd = (evaluate(exprs[i], plus) - evaluate(exprs[i], minus)) / (2 * h);
            worst = std::max(worst, std::abs(sym - fd) / (1.0 + std::abs(sym)));
        }
    }
    return worst;
}

RankSample sample_rank(std::span<const Expr> exprs, std::span<const Var> vars, std::span<const Point> points,
                       double tol_rel) {
    auto J = jacobian(exprs, vars);
    RankSample out;
    out.min = static_cast<int>(std::min(exprs.size(), vars.size()));
    for (std::size_t k = 0; k < points.size(); ++k) {
        int r = 0;
        try {
            r = numeric_rank(evaluate(J, points[k]), tol_rel);
        } catch (const EvalError&) {
            continue;
        } catch (const std::domain_error&) {
            continue;
        }
        if (k == 0) out.at_first = r;
        out.generic = std::max(out.generic, r);
        out.min = std::min(out.min, r);
        ++out.evaluated;
    }
    if (out.evaluated == 0) out.min = 0;
    return out;
}

bool depends_on(const Expr& e, const Var& v, std::span<const Point> points, double threshold) {
    if (!depends_structurally(e, v)) return false;
    Expr d = differentiate(e, v);
    if (d.is_zero()) return false;
    if (d.is_number()) return true;
    for (const auto& p : points) {
        try {
            if (std::abs(evaluate(d, p)) > threshold) return true;
        } catch (const EvalError&) {
        }
    }
    return false;
}

}  // namespace dflat
