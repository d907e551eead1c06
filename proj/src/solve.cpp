#include "dflat/solve.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <unordered_set>

namespace dflat {

namespace {

const Var kPlaceholder{Family::y, 9999, 0};

using VarSet = std::set<Var>;

VarSet unknowns_in(const Expr& e, const VarSet& unsolved) {
    VarSet out;
    for (const auto& v : free_variables(e))
        if (unsolved.count(v)) out.insert(v);
    return out;
}

// Largest |e| over the reference points that evaluate; 0 if none do.
double max_abs(const Expr& e, std::span<const Point> refs) {
    if (e.is_number()) return std::abs(e.number().value());
    double best = 0.0;
    for (const auto& p : refs) {
        try {
            best = std::max(best, std::abs(evaluate(e, p)));
        } catch (const EvalError&) {
        }
    }
    return best;
}

void collect_functions(const Expr& e, std::vector<Expr>& out, std::unordered_set<const Node*>& seen) {
    if (!seen.insert(e.id()).second) return;
    if (e.kind() == Kind::function) out.push_back(e);
    if (e.kind() == Kind::number || e.kind() == Kind::parameter || e.kind() == Kind::variable) return;
    for (const auto& op : e.operands()) collect_functions(op, out, seen);
}

struct Pivot {
    std::size_t eq = 0;
    Var unknown;
    Expr coef;
    std::size_t width = 0;
    double magnitude = 0.0;
};

constexpr double kMinPivot = 1e-9;

std::optional<Pivot> affine_pivot(const std::vector<Expr>& eqs, const VarSet& unsolved, std::span<const Point> refs) {
    std::optional<Pivot> best;
    for (std::size_t i = 0; i < eqs.size(); ++i) {
        VarSet in = unknowns_in(eqs[i], unsolved);
        for (const auto& z : in) {
            Expr a = differentiate(eqs[i], z);
            if (!unknowns_in(a, unsolved).empty()) continue;
            double mag = max_abs(a, refs);
            if (mag < kMinPivot) continue;
            bool better = !best || in.size() < best->width || (in.size() == best->width && mag > best->magnitude);
            if (better) best = Pivot{i, z, a, in.size(), mag};
        }
    }
    return best;
}

Expr invert_unary(Func f, const Expr& value) {
    switch (f) {
        case Func::tan: return atan(value);
        case Func::cot: return atan(pow(value, -1));
        case Func::atan: return tan(value);
        default: break;
    }
    return Expr();
}

// Rewrites one residual h(arg(z)) * a + b = 0 into arg(z) - h^{-1}(-b/a) = 0.
bool unary_step(std::vector<Expr>& eqs, const VarSet& unsolved, std::span<const Point> refs) {
    for (auto& eq : eqs) {
        std::vector<Expr> funcs;
        std::unordered_set<const Node*> seen;
        collect_functions(eq, funcs, seen);
        for (const auto& F : funcs) {
            if (F.func() != Func::tan && F.func() != Func::cot && F.func() != Func::atan) continue;
            VarSet in = unknowns_in(F.base(), unsolved);
            if (in.size() != 1) continue;
            const Var z = *in.begin();
            Expr darg = differentiate(F.base(), z);
            if (!unknowns_in(darg, unsolved).empty()) continue;
            Expr reduced = replace(eq, F, var(kPlaceholder));
            if (!unknowns_in(reduced, unsolved).empty()) continue;
            Expr a = differentiate(reduced, kPlaceholder);
            if (depends_structurally(a, kPlaceholder) || max_abs(a, refs) < kMinPivot) continue;
            Expr b = substitute(reduced, {{kPlaceholder, Expr(0)}});
            Expr value = -b / a;
            eq = F.base() - invert_unary(F.func(), value);
            return true;
        }
    }
    return false;
}

}  // namespace

SolveResult solve_restricted(std::vector<Expr> residuals, std::span<const Var> unknowns, std::span<const Point> refs,
                             double tol) {
    SolveResult out;
    VarSet unsolved(unknowns.begin(), unknowns.end());
    std::vector<Expr> eqs = residuals;

    while (!unsolved.empty()) {
        if (auto p = affine_pivot(eqs, unsolved, refs)) {
            Expr b = substitute(eqs[p->eq], {{p->unknown, Expr(0)}});
            Expr sol = -b / p->coef;
            Substitution step{{p->unknown, sol}};
            for (auto& [v, s] : out.solution) s = substitute(s, step);
            out.solution.emplace(p->unknown, sol);
            eqs.erase(eqs.begin() + static_cast<std::ptrdiff_t>(p->eq));
            for (auto& e : eqs) e = substitute(e, step);
            unsolved.erase(p->unknown);
            continue;
        }
        if (unary_step(eqs, unsolved, refs)) continue;
        break;
    }

    if (!unsolved.empty()) {
        out.unsolved.assign(unsolved.begin(), unsolved.end());
        out.diagnostic = "restricted solver could not isolate";
        for (const auto& v : out.unsolved) out.diagnostic += " " + v.str();
        return out;
    }

    // Every solution must reproduce the reference values (this also rejects a wrong
    // branch of an inverted trig function).
    int checked = 0;
    for (const auto& p : refs) {
        bool evaluated = true;
        for (const auto& [v, s] : out.solution) {
            double got = 0.0;
            try {
                got = evaluate(s, p);
            } catch (const EvalError&) {
                evaluated = false;
                break;
            }
            double want = p.at(v);
            if (std::abs(got - want) > tol * (1.0 + std::abs(want))) {
                out.diagnostic = "solution for " + v.str() + " misses reference value (" + std::to_string(got) +
                                 " vs " + std::to_string(want) + ")";
                return out;
            }
        }
        if (evaluated) ++checked;
    }
    if (!refs.empty() && checked == 0) {
        out.diagnostic = "solution could not be evaluated at any reference point";
        return out;
    }
    out.ok = true;
    return out;
}

}  // namespace dflat
