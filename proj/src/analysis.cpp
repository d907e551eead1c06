#include "dflat/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "dflat/numeric.hpp"
#include "dflat/solve.hpp"

namespace dflat {

namespace {

constexpr int kDependencyPoints = 20;

bool is_input_shift(const SystemModel& sys, const Var& v) {
    for (const auto& u : sys.inputs)
        if (v.family == u.family && v.component == u.component && v.shift >= u.shift) return true;
    return false;
}

bool is_zeta_shift(const SystemModel& sys, const Var& v) {
    for (const auto& z : sys.zeta)
        if (v.family == z.family && v.component == z.component && v.shift <= z.shift) return true;
    return false;
}

template <class Pred>
bool depends_on_any(const Expr& e, std::span<const Point> pts, Pred pred) {
    for (const auto& v : free_variables(e))
        if (pred(v) && depends_on(e, v, pts)) return true;
    return false;
}

bool leaves_within(const Expr& e, const std::vector<Var>& allowed) {
    for (const auto& v : free_variables(e))
        if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) return false;
    return true;
}

std::vector<Var> xu_vars(const SystemModel& sys) {
    std::vector<Var> out = sys.states;
    out.insert(out.end(), sys.inputs.begin(), sys.inputs.end());
    return out;
}

// Time slices of a trajectory through a sample point. Slice k binds the states, the base
// inputs and the base zeta at time k; bindings stop where an evaluation hits a pole.
struct Trajectory {
    int depth = 0;
    std::vector<std::optional<Point>> slices;  // index k + depth

    const Point* at(int k) const {
        if (k < -depth || k > depth) return nullptr;
        const auto& s = slices[static_cast<std::size_t>(k + depth)];
        return s ? &*s : nullptr;
    }
};

Trajectory trajectory(const SystemModel& sys, const Point& base, int depth) {
    Trajectory t;
    t.depth = depth;
    t.slices.resize(static_cast<std::size_t>(2 * depth + 1));
    Point s0;
    s0.params = base.params;
    for (const auto& x : sys.states) s0.set(x, base.at(x));
    for (const auto& u : sys.inputs) s0.set(u, base.at(u));
    for (const auto& z : sys.zeta) s0.set(z, base.at(z));
    t.slices[static_cast<std::size_t>(depth)] = s0;

    for (int k = 1; k <= depth; ++k) {
        const Point& prev = *t.slices[static_cast<std::size_t>(depth + k - 1)];
        Point s;
        s.params = base.params;
        try {
            for (int i = 0; i < sys.n(); ++i) s.set(sys.states[i], evaluate(sys.f[i], prev));
            for (int j = 0; j < sys.m(); ++j) {
                s.set(sys.inputs[j], base.at(sys.inputs[j].shifted(k)));
                if (sys.has_extension()) s.set(sys.zeta[j], evaluate(sys.g[j], prev));
            }
        } catch (const EvalError&) {
            break;
        }
        t.slices[static_cast<std::size_t>(depth + k)] = std::move(s);
    }
    if (!sys.has_inverse()) return t;
    for (int k = 1; k <= depth; ++k) {
        const Point& next = *t.slices[static_cast<std::size_t>(depth - k + 1)];
        Point s;
        s.params = base.params;
        try {
            for (int i = 0; i < sys.n(); ++i) s.set(sys.states[i], evaluate(sys.psi_x[i], next));
            for (int j = 0; j < sys.m(); ++j) {
                s.set(sys.inputs[j], evaluate(sys.psi_u[j], next));
                Var deeper = sys.zeta[j].shifted(-k);
                if (!base.has(deeper)) throw EvalError(EvalError::Reason::unbound, deeper.str());
                s.set(sys.zeta[j], base.at(deeper));
            }
        } catch (const EvalError&) {
            break;
        }
        t.slices[static_cast<std::size_t>(depth - k)] = std::move(s);
    }
    return t;
}

void bind(Point& p, const Var& v, const Expr& e, const Point* slice) {
    if (!slice) return;
    try {
        p.set(v, evaluate(e, *slice));
    } catch (const EvalError&) {
    }
}

// Sample points of `sys` lifted along their trajectories: they additionally bind the
// output shifts y_j[s] and, given a transform, the ubar and zetabar shifts.
class Lifter {
public:
    Lifter(const SystemModel& sys, int count, std::uint64_t seed, double radius = 1e-3) : sys_(sys) {
        depth_ = sys.shift_cap() + 2;
        for (const auto& p : sys.sample_points(count, radius, seed, depth_ + 1)) {
            base_.push_back(p);
            traj_.push_back(trajectory(sys, p, depth_));
        }
    }

    std::vector<Point> lift(const std::vector<Expr>& phi, const TransformedSystem* ts, bool with_ubar,
                            bool with_zetabar) const {
        std::vector<Point> out;
        for (std::size_t k = 0; k < base_.size(); ++k) {
            Point p = base_[k];
            const auto& t = traj_[k];
            for (int s = -depth_; s <= depth_; ++s)
                for (std::size_t j = 0; j < phi.size(); ++j)
                    bind(p, yv(static_cast<int>(j) + 1, s), phi[j], t.at(s));
            if (ts && with_ubar) {
                for (int s = 0; s <= depth_; ++s) {
                    bind(p, ubv(1, s), ts->ubar1_def, t.at(s));
                    bind(p, ubv(2, s), var(sys_.inputs[static_cast<std::size_t>(ts->kU)]), t.at(s));
                }
            }
            if (ts && with_zetabar) {
                for (int s = 1; s <= depth_; ++s) {
                    bind(p, zbv(1, -s), ts->zetabar1_def, t.at(-s + 1));
                    bind(p, zbv(2, -s), var(sys_.zeta[static_cast<std::size_t>(ts->kZ)]), t.at(-s + 1));
                }
            }
            out.push_back(std::move(p));
        }
        return out;
    }

private:
    const SystemModel& sys_;
    int depth_ = 0;
    std::vector<Point> base_;
    std::vector<Trajectory> traj_;
};

Substitution solve_or_throw(const std::vector<Expr>& residuals, const std::vector<Var>& unknowns,
                            const std::vector<Point>& refs, std::string* diagnostic) {
    auto r = solve_restricted(residuals, unknowns, refs);
    if (!r.ok) {
        if (diagnostic) *diagnostic = r.diagnostic;
        return {};
    }
    return r.solution;
}

int max_dependent_shift(const Expr& e, Family fam, int component, int sign, std::span<const Point> pts) {
    int best = -1;
    for (const auto& v : free_variables(e)) {
        if (v.family != fam || v.component != component) continue;
        int k = sign * v.shift;
        if (k > best && depends_on(e, v, pts)) best = k;
    }
    return best;
}

bool depends_on_family(const Expr& e, Family fam, int component, std::span<const Point> pts) {
    return depends_on_any(e, pts, [&](const Var& v) { return v.family == fam && v.component == component; });
}

// Checks the rows of a tower against output values bound in the lifted points.
double row_mismatch(const Expr& row, const Var& y, std::span<const Point> pts) {
    double worst = 0.0;
    for (const auto& p : pts) {
        if (!p.has(y)) continue;
        try {
            double v = evaluate(row, p);
            worst = std::max(worst, std::abs(v - p.at(y)) / (1.0 + std::abs(p.at(y))));
        } catch (const EvalError&) {
        }
    }
    return worst;
}

Tower build_ordered(const SystemModel& sys, const std::vector<Expr>& phi, int A, int B,
                    const std::array<int, 2>& rho, const std::array<int, 2>& gamma, const Lifter& lifter) {
    const int cap = sys.shift_cap();
    Tower tower;
    TransformedSystem& ts = tower.ts;
    ts.A = A;
    ts.B = B;
    std::string diag;

    // Input transform.
    ts.ubar1_def = sys.forward_shift(phi[A], rho[A]);
    if (!leaves_within(ts.ubar1_def, xu_vars(sys)))
        throw AnalysisError("delta^rho of y" + std::to_string(A + 1) + " leaves (x,u)");
    for (int kU : {1, 0}) {
        ts.kU = kU;
        auto pts = lifter.lift(phi, &ts, true, false);
        ts.Phi_u = solve_or_throw({ts.ubar1_def - var(ubv(1)), var(sys.inputs[kU]) - var(ubv(2))}, sys.inputs, pts,
                                  &diag);
        if (!ts.Phi_u.empty()) break;
    }
    if (ts.Phi_u.empty()) throw AnalysisError("input transform not invertible: " + diag);

    // Zeta transform.
    std::vector<Var> xz = sys.states;
    xz.insert(xz.end(), sys.zeta.begin(), sys.zeta.end());
    ts.zetabar1_def = sys.backward_shift(phi[A], gamma[A]);
    if (!leaves_within(ts.zetabar1_def, xz))
        throw AnalysisError("delta^-gamma of y" + std::to_string(A + 1) + " leaves (zeta[-1],x)");
    for (int kZ : {1, 0}) {
        ts.kZ = kZ;
        auto pts = lifter.lift(phi, &ts, true, true);
        ts.Phi_zeta = solve_or_throw({ts.zetabar1_def - var(zbv(1)), var(sys.zeta[kZ]) - var(zbv(2))}, sys.zeta, pts,
                                     &diag);
        if (!ts.Phi_zeta.empty()) break;
    }
    if (ts.Phi_zeta.empty()) throw AnalysisError("zeta transform not invertible: " + diag);
    ts.gbar1 = sys.forward_shift(ts.zetabar1_def);
    if (!leaves_within(ts.gbar1, xu_vars(sys))) throw AnalysisError("shifted zeta transform leaves (x,u)");

    SystemModel& bar = ts.bar;
    bar.states = sys.states;
    bar.inputs = {ubv(1), ubv(2)};
    bar.zeta = {zbv(1), zbv(2)};
    bar.params = sys.params;
    bar.x_components = sys.x_components;
    for (const auto& fi : sys.f) bar.f.push_back(substitute(fi, ts.Phi_u));
    bar.g = {substitute(ts.gbar1, ts.Phi_u), substitute(sys.g[ts.kZ], ts.Phi_u)};
    for (const auto& p : sys.psi_x) bar.psi_x.push_back(substitute(p, ts.Phi_zeta));
    bar.psi_u = {substitute(sys.backward_shift(ts.ubar1_def), ts.Phi_zeta), substitute(sys.psi_u[ts.kU], ts.Phi_zeta)};
    auto pts = lifter.lift(phi, &ts, true, true);
    bar.equilibrium = sys.equilibrium;
    for (const auto& v : {ubv(1), ubv(2)}) {
        if (!pts[0].has(v)) throw AnalysisError("input transform has a pole at the equilibrium");
        bar.equilibrium.set(v, pts[0].at(v));
    }

    Expr phiA = substitute(phi[A], ts.Phi_u);
    Expr phiB = substitute(phi[B], ts.Phi_u);

    // Forward side of component B.
    std::vector<Expr> Bf{phiB};
    int r22 = -1;
    for (int s = 0; s <= cap; ++s) {
        if (s > 0) Bf.push_back(bar.forward_shift(Bf.back()));
        if (s >= rho[B] && depends_on_family(Bf[s], Family::u_bar, 2, pts)) {
            r22 = s;
            break;
        }
    }
    if (r22 < 0) throw AnalysisError("y" + std::to_string(B + 1) + " never depends on ubar2 within the shift cap");
    int kf = max_dependent_shift(Bf[r22], Family::u_bar, 1, 1, pts);
    int r21 = rho[A] + std::max(kf, 0);

    // Backward side of component B.
    std::vector<Expr> Bb{phiB};
    int r12 = -1;
    for (int s = 1; s <= cap; ++s) {
        Bb.push_back(bar.backward_shift(Bb.back()));
        if (s >= gamma[B] && depends_on_family(Bb[s], Family::zeta_bar, 2, pts)) {
            r12 = s - 1;
            break;
        }
    }
    if (r12 < 0) throw AnalysisError("y" + std::to_string(B + 1) + " never depends on zetabar2 within the shift cap");
    int kb = max_dependent_shift(Bb[r12], Family::zeta_bar, 1, -1, pts);
    int r11 = gamma[A] - 1 + std::max(kb, 0);

    ShiftIndices& ix = tower.indices;
    ix.rho = rho;
    ix.gamma = gamma;
    ix.R1[A] = r11;
    ix.R2[A] = r21;
    ix.R1[B] = r12;
    ix.R2[B] = r22;
    ix.d1 = r11 + 1 - gamma[A];
    ix.d2 = r21 - rho[A];
    ix.d = ix.count() - sys.n();

    tower.identities.forward = r21 - rho[A] == r22 - rho[B];
    tower.identities.backward = r11 - gamma[A] == r12 - gamma[B];
    tower.identities.dimension = sys.n() == r12 + r22 + gamma[A] + rho[A] - 1;
    tower.identities.defect = ix.d == ix.d1 + ix.d2 && ix.d >= 0;
    if (!tower.identities.all())
        throw AnalysisError("index identities fail for ordering (" + std::to_string(A + 1) + "," +
                            std::to_string(B + 1) + ")");

    // Rows of component A.
    std::vector<Expr> rowsA;
    std::vector<Expr> Af{phiA};
    for (int s = 1; s < rho[A]; ++s) Af.push_back(bar.forward_shift(Af.back()));
    std::vector<Expr> Ab{phiA};
    for (int s = 1; s < gamma[A]; ++s) Ab.push_back(bar.backward_shift(Ab.back()));
    for (int s = -r11; s <= r21; ++s) {
        if (s >= 0)
            rowsA.push_back(s < rho[A] ? Af[s] : var(ubv(1, s - rho[A])));
        else
            rowsA.push_back(-s < gamma[A] ? Ab[-s] : var(zbv(1, -(-s - gamma[A] + 1))));
    }
    std::vector<Expr> rowsB;
    for (int s = -r12; s <= r22; ++s) rowsB.push_back(s >= 0 ? Bf[s] : Bb[-s]);
    tower.rows[A] = std::move(rowsA);
    tower.rows[B] = std::move(rowsB);

    for (int k = ix.d1; k >= 1; --k) tower.variables.push_back(zbv(1, -k));
    tower.variables.insert(tower.variables.end(), sys.states.begin(), sys.states.end());
    for (int k = 0; k <= ix.d2; ++k) tower.variables.push_back(ubv(1, k));
    tower.variables.push_back(ubv(2));

    for (int j = 0; j < 2; ++j) {
        for (int s = -ix.R1[j]; s <= ix.R2[j]; ++s) {
            const Expr& row = tower.at(j, s);
            if (!leaves_within(row, tower.variables))
                throw AnalysisError("tower row y" + std::to_string(j + 1) + "[" + std::to_string(s) +
                                    "] leaves the tower variables");
            if (row_mismatch(row, yv(j + 1, s), pts) > 1e-8)
                throw AnalysisError("tower row y" + std::to_string(j + 1) + "[" + std::to_string(s) +
                                    "] disagrees with the trajectory");
        }
    }
    auto eqs = tower.equations();
    if (eqs.size() != tower.variables.size()) throw AnalysisError("tower is not square");
    tower.rank = sample_rank(eqs, tower.variables, pts).generic;
    if (tower.rank != static_cast<int>(eqs.size()))
        throw AnalysisError("tower Jacobian has rank " + std::to_string(tower.rank) + " < " +
                            std::to_string(eqs.size()));
    return tower;
}

}  // namespace

const char* kind_name(FlatKind k) {
    switch (k) {
        case FlatKind::linearizing: return "linearizing";
        case FlatKind::forward_flat: return "forward_flat";
        case FlatKind::backward_flat: return "backward_flat";
        case FlatKind::general: return "general";
    }
    return "?";
}

std::vector<Expr> Tower::equations() const {
    std::vector<Expr> out;
    for (int j = 0; j < 2; ++j)
        for (int s = -indices.R1[j]; s <= indices.R2[j]; ++s) out.push_back(var(yv(j + 1, s)) - at(j, s));
    return out;
}

std::vector<Var> Tower::y_vars() const {
    std::vector<Var> out;
    for (int j = 0; j < 2; ++j)
        for (int s = -indices.R1[j]; s <= indices.R2[j]; ++s) out.push_back(yv(j + 1, s));
    return out;
}

Expr shift_y(const Expr& e, int k) {
    return map_variables(e, [k](const Var& v) { return var(v.family == Family::y ? v.shifted(k) : v); });
}

std::array<int, 2> relative_degrees(const SystemModel& sys, const std::vector<Expr>& phi) {
    if (sys.m() != 2 || phi.size() != 2) throw AnalysisError("towers are implemented for two inputs");
    auto pts = sys.sample_points(kDependencyPoints);
    const int cap = sys.n() + sys.m();
    std::array<int, 2> rho{};
    for (int j = 0; j < 2; ++j) {
        Expr e = phi[j];
        int found = -1;
        for (int a = 0; a <= cap; ++a) {
            if (a > 0) e = sys.forward_shift(e);
            if (depends_on_any(e, pts, [&](const Var& v) { return is_input_shift(sys, v); })) {
                found = a;
                break;
            }
        }
        if (found < 0)
            throw AnalysisError("y" + std::to_string(j + 1) + " does not depend on u within " +
                                std::to_string(cap) + " forward shifts");
        rho[j] = found;
    }
    return rho;
}

std::array<int, 2> backward_depths(const SystemModel& sys, const std::vector<Expr>& phi) {
    if (!sys.has_inverse()) throw AnalysisError("backward depths need the inverse extension");
    auto pts = sys.sample_points(kDependencyPoints);
    const int cap = sys.n() + sys.m();
    std::array<int, 2> gamma{};
    for (int j = 0; j < 2; ++j) {
        Expr e = phi[j];
        int found = -1;
        for (int b = 1; b <= cap; ++b) {
            e = sys.backward_shift(e);
            if (depends_on_any(e, pts, [&](const Var& v) { return is_zeta_shift(sys, v); })) {
                found = b;
                break;
            }
        }
        if (found < 0)
            throw AnalysisError("y" + std::to_string(j + 1) + " does not depend on zeta within " +
                                std::to_string(cap) + " backward shifts");
        gamma[j] = found;
    }
    return gamma;
}

Tower build_tower(const SystemModel& sys, const std::vector<Expr>& phi, std::vector<std::string>* diagnostics) {
    for (const auto& e : phi)
        if (!leaves_within(e, xu_vars(sys))) throw AnalysisError("flat output must be a function of (x,u)");
    auto chain = [](const Var& v) { return v.family == Family::u_bar || v.family == Family::zeta_bar; };
    if (std::ranges::any_of(sys.states, chain) || std::ranges::any_of(sys.inputs, chain) ||
        std::ranges::any_of(sys.zeta, chain))
        throw AnalysisError("system uses chain coordinates; analyze its plain form");
    auto rho = relative_degrees(sys, phi);
    auto gamma = backward_depths(sys, phi);
    Lifter lifter(sys, 10, 1);
    std::string why;
    for (auto [A, B] : {std::pair{0, 1}, std::pair{1, 0}}) {
        try {
            return build_ordered(sys, phi, A, B, rho, gamma, lifter);
        } catch (const AnalysisError& e) {
            std::string msg = "ordering (" + std::to_string(A + 1) + "," + std::to_string(B + 1) + "): " + e.what();
            if (diagnostics) diagnostics->push_back(msg);
            why += (why.empty() ? "" : "; ") + msg;
        }
    }
    throw AnalysisError("no component ordering yields a valid tower: " + why);
}

std::vector<Point> tower_points(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower, int count,
                                std::uint64_t seed, double radius) {
    Lifter lifter(sys, count, seed, radius);
    return lifter.lift(phi, &tower.ts, true, true);
}

ParameterizationResult invert_tower(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower,
                                    const std::vector<Expr>* user_F_x, const std::vector<Expr>* user_F_u) {
    const auto& ix = tower.indices;
    if (ix.count() + sys.m() != ix.d1 + sys.n() + sys.m() + ix.d2) throw AnalysisError("tower square count mismatch");
    auto pts = tower_points(sys, phi, tower);
    ParameterizationResult out;
    auto sol = solve_restricted(tower.equations(), tower.variables, pts);
    bool have_user = user_F_x && user_F_u && !user_F_x->empty();
    if (sol.ok) {
        for (const auto& x : sys.states) out.F_x.push_back(sol.solution.at(x));
        Substitution back = sol.solution;
        for (const auto& u : sys.inputs) out.F_u.push_back(substitute(tower.ts.Phi_u.at(u), back));
    } else if (have_user) {
        out.F_x = *user_F_x;
        out.F_u = *user_F_u;
        out.source = ParameterizationSource::user_supplied;
    } else {
        throw AnalysisError("tower inversion failed: " + sol.diagnostic);
    }

    // Domain of F: x over y[-R1 .. R2-1], u over y[-R1 .. R2].
    auto in_window = [&](const Expr& e, int top) {
        for (const auto& v : free_variables(e)) {
            if (v.family != Family::y) return false;
            int j = v.component - 1;
            if (v.shift < -ix.R1[j] || v.shift > ix.R2[j] - top) return false;
        }
        return true;
    };
    for (const auto& e : out.F_x)
        if (!in_window(e, 1)) throw AnalysisError("F_x leaves y[-R1, R2-1]: " + e.str());
    for (const auto& e : out.F_u)
        if (!in_window(e, 0)) throw AnalysisError("F_u leaves y[-R1, R2]: " + e.str());

    int checked = 0;
    for (const auto& p : pts) {
        try {
            double worst = 0.0;
            for (int i = 0; i < sys.n(); ++i)
                worst = std::max(worst, std::abs(evaluate(out.F_x[i], p) - p.at(sys.states[i])));
            for (int j = 0; j < sys.m(); ++j)
                worst = std::max(worst, std::abs(evaluate(out.F_u[j], p) - p.at(sys.inputs[j])));
            out.residual = std::max(out.residual, worst);
            ++checked;
        } catch (const EvalError&) {
        }
    }
    if (checked == 0) throw AnalysisError("parameterization could not be evaluated at any sample point");
    if (out.residual > 1e-8) throw AnalysisError("parameterization residual " + std::to_string(out.residual));

    if (have_user && out.source == ParameterizationSource::tower_inverted) {
        double worst = 0.0;
        for (const auto& p : pts) {
            try {
                for (int i = 0; i < sys.n(); ++i)
                    worst = std::max(worst, std::abs(evaluate((*user_F_x)[i], p) - evaluate(out.F_x[i], p)));
                for (int j = 0; j < sys.m(); ++j)
                    worst = std::max(worst, std::abs(evaluate((*user_F_u)[j], p) - evaluate(out.F_u[j], p)));
            } catch (const EvalError&) {
            }
        }
        out.user_disagreement = worst;
        if (worst > 1e-8)
            throw AnalysisError("user-supplied parameterization disagrees with the inverted tower (" +
                                std::to_string(worst) + ")");
    }
    return out;
}

Classification classify(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower,
                        const ParameterizationResult& param, double tol_rank) {
    const auto& ix = tower.indices;
    auto pts = tower_points(sys, phi, tower);
    std::vector<Var> top{yv(1, ix.R2[0]), yv(2, ix.R2[1])};
    std::vector<Var> bottom{yv(1, -ix.R1[0]), yv(2, -ix.R1[1])};
    Substitution at_F;
    for (int i = 0; i < sys.n(); ++i) at_F.emplace(sys.states[i], param.F_x[i]);
    for (int j = 0; j < sys.m(); ++j) at_F.emplace(sys.inputs[j], param.F_u[j]);
    std::vector<Expr> gF;
    for (const auto& gi : sys.g) gF.push_back(substitute(gi, at_F));

    // Rank at the equilibrium image when it evaluates there, generic otherwise.
    auto rank_of = [&](const std::vector<Expr>& rows, const std::vector<Var>& cols) {
        auto r = sample_rank(rows, cols, pts, tol_rank);
        return r.at_first >= 0 ? r.at_first : r.generic;
    };
    Classification c;
    c.rank_Fu_at_R2 = rank_of(param.F_u, top);
    c.rank_Fx_at_minusR1 = rank_of(param.F_x, bottom);
    c.rank_g_of_F = rank_of(gF, bottom);

    const int m = sys.m();
    if (ix.count() == sys.n()) {
        c.kind = FlatKind::linearizing;
    } else if (ix.R1[0] == 0 && ix.R1[1] == 0) {
        c.kind = FlatKind::forward_flat;
        c.consistent = c.rank_Fx_at_minusR1 == m;
    } else if (ix.R2[0] == 0 && ix.R2[1] == 0) {
        c.kind = FlatKind::backward_flat;
        c.consistent = c.rank_Fu_at_R2 == m;
    } else {
        c.kind = FlatKind::general;
        c.consistent = c.rank_Fu_at_R2 < m && c.rank_Fx_at_minusR1 < m;
    }
    if (!c.consistent)
        c.message = std::string("rank condition contradicts ") + kind_name(c.kind) + " (rank dF_u/dy[R2] = " +
                    std::to_string(c.rank_Fu_at_R2) + ", rank dF_x/dy[-R1] = " +
                    std::to_string(c.rank_Fx_at_minusR1) + ")";
    return c;
}

NormalizedInputs normalize_inputs(const SystemModel& sys, const std::vector<Expr>& phi, const Tower* tower,
                                  const ParameterizationResult* param) {
    const int m = sys.m();
    NormalizedInputs out;
    std::vector<int> rows;
    std::vector<Var> used;
    for (int i = 0; i < sys.n() && static_cast<int>(rows.size()) < m; ++i) {
        const Expr& fi = sys.f[i];
        if (fi.kind() == Kind::variable && sys.input_index(fi.var()) >= 0 &&
            std::find(used.begin(), used.end(), fi.var()) == used.end()) {
            rows.push_back(i);
            used.push_back(fi.var());
        }
    }
    out.identity = static_cast<int>(rows.size()) == m;
    auto pts = sys.sample_points(10);
    if (!out.identity) {
        rows.clear();
        std::vector<Expr> chosen;
        int rank = 0;
        for (int i = 0; i < sys.n() && rank < m; ++i) {
            auto trial = chosen;
            trial.push_back(sys.f[i]);
            auto r = sample_rank(trial, sys.inputs, pts);
            int ri = r.at_first >= 0 ? r.at_first : r.generic;
            if (ri > rank) {
                rank = ri;
                chosen = std::move(trial);
                rows.push_back(i);
            }
        }
        if (rank < m) throw AnalysisError("no subset of f has an input Jacobian of full rank");
    }
    for (int j = 0; j < m; ++j) out.rows[j] = rows[j];

    std::vector<Expr> residuals;
    for (int j = 0; j < m; ++j) residuals.push_back(sys.f[rows[j]] - var(ubv(j + 1)));
    for (auto& p : pts)
        for (int j = 0; j < m; ++j) bind(p, ubv(j + 1), sys.f[rows[j]], &p);
    auto sol = solve_restricted(residuals, sys.inputs, pts);
    if (!sol.ok) throw AnalysisError("cannot express u through v: " + sol.diagnostic);
    out.Phi_v = sol.solution;

    SystemModel& v = out.system;
    v = sys;
    v.inputs = {ubv(1), ubv(2)};
    v.f.clear();
    for (const auto& fi : sys.f) v.f.push_back(substitute(fi, out.Phi_v));
    for (auto& gi : v.g) gi = substitute(gi, out.Phi_v);
    if (sys.has_inverse())
        for (int j = 0; j < m; ++j) v.psi_u[j] = var(sys.states[rows[j]]);
    Point eq = sys.equilibrium_point();
    for (int j = 0; j < m; ++j) v.equilibrium.set(ubv(j + 1), eq.at(sys.states[rows[j]]));

    if (tower && param) {
        const auto& ix = tower->indices;
        std::vector<Var> bottom{yv(1, -ix.R1[0]), yv(2, -ix.R1[1])};
        Substitution at_F;
        for (int i = 0; i < sys.n(); ++i) at_F.emplace(sys.states[i], param->F_x[i]);
        for (int j = 0; j < m; ++j) at_F.emplace(sys.inputs[j], param->F_u[j]);
        out.zero_block_structural = true;
        std::vector<Expr> Fv_num;
        for (int j = 0; j < m; ++j) {
            out.F_v.push_back(shift_y(param->F_x[rows[j]], 1));
            for (const auto& b : bottom)
                if (depends_structurally(out.F_v.back(), b)) out.zero_block_structural = false;
            Fv_num.push_back(substitute(sys.f[rows[j]], at_F));
        }
        // Numeric zero block on the composed form, plus agreement of the two forms, at
        // points spread wider than the rank samples to stay clear of singular equilibria.
        auto ypts = tower_points(sys, phi, *tower, 10, 5, 0.1);
        for (int j = 0; j < m; ++j) {
            std::vector<Expr> partials;
            for (const auto& b : bottom) partials.push_back(differentiate(Fv_num[j], b));
            for (const auto& p : ypts) {
                try {
                    for (const auto& d : partials)
                        out.zero_block_numeric = std::max(out.zero_block_numeric, std::abs(evaluate(d, p)));
                    out.F_v_agreement = std::max(out.F_v_agreement,
                                                 std::abs(evaluate(out.F_v[j], p) - evaluate(Fv_num[j], p)));
                } catch (const EvalError&) {
                }
            }
        }
    }
    return out;
}

int rank_du_phi(const SystemModel& sys, const std::vector<Expr>& phi) {
    return sample_rank(phi, sys.inputs, sys.sample_points(10)).generic;
}

}  // namespace dflat
