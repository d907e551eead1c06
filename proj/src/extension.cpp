#include "dflat/extension.hpp"

#include <algorithm>
#include <cmath>

#include "dflat/numeric.hpp"
#include "dflat/solve.hpp"

namespace dflat {

namespace {

std::vector<Expr> compose(const std::vector<Expr>& es, const Substitution& s) {
    std::vector<Expr> out;
    for (const auto& e : es) out.push_back(substitute(e, s));
    return out;
}

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

Substitution base_values(const SystemModel& sys, const EquilibriumMap& eq) {
    Substitution E;
    for (const auto& x : sys.states) E.emplace(x, Expr(0));
    for (const auto& u : sys.inputs) E.emplace(u, Expr(0));
    if (eq.empty()) {
        for (const auto& [v, value] : sys.equilibrium.vars) E[v] = Expr(Number::real(value));
    } else {
        for (const auto& [v, e] : eq) E[v] = e;
    }
    return E;
}

}  // namespace

const char* extension_name(ExtensionKind k) {
    switch (k) {
        case ExtensionKind::prolongation: return "prolongation";
        case ExtensionKind::prelongation: return "prelongation";
        case ExtensionKind::combined: return "combined";
    }
    return "?";
}

ExtendedSystem assemble_extension(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower, int d1,
                                  int d2, bool use_z, bool use_u, const EquilibriumMap& base_equilibrium) {
    if (sys.m() != 2) throw ExtensionError("extensions are implemented for two inputs");
    if (d1 < 0 || d2 < 0) throw ExtensionError("negative chain length");
    if (d1 > 0 && !use_z) throw ExtensionError("a prelongation chain needs the zeta transform");
    if (d2 > 0 && !use_u) throw ExtensionError("a prolongation chain needs the input transform");
    if (!sys.has_inverse()) throw ExtensionError("extensions need the inverse extension map");

    ExtendedSystem ext;
    ext.d1 = d1;
    ext.d2 = d2;
    ext.zeta_transform = use_z;
    ext.input_transform = use_u;
    ext.ts = tower.ts;
    ext.base = sys;
    const TransformedSystem& ts = ext.ts;

    // Frame: the base system in the chosen coordinates, before adding chains.
    std::vector<Var> inputs = use_u ? std::vector<Var>{ubv(1), ubv(2)} : sys.inputs;
    std::vector<Var> zeta = use_z ? std::vector<Var>{zbv(1), zbv(2)} : sys.zeta;
    std::vector<Expr> f = use_u ? compose(sys.f, ts.Phi_u) : sys.f;
    std::vector<Expr> g = use_z ? std::vector<Expr>{ts.gbar1, sys.g[ts.kZ]} : sys.g;
    if (use_u) g = compose(g, ts.Phi_u);
    std::vector<Expr> psi_x = use_z ? compose(sys.psi_x, ts.Phi_zeta) : sys.psi_x;
    std::vector<Expr> psi_u = use_u ? std::vector<Expr>{sys.backward_shift(ts.ubar1_def), sys.psi_u[ts.kU]} : sys.psi_u;
    if (use_z) psi_u = compose(psi_u, ts.Phi_zeta);

    SystemModel& M = ext.model;
    M.params = sys.params;
    M.x_components = sys.x_components;
    M.g_source = sys.g_source;
    M.selected_coordinates = sys.selected_coordinates;

    for (int k = d1; k >= 1; --k) {
        M.states.push_back(zbv(1, -k));
        M.f.push_back(k > 1 ? var(zbv(1, -k + 1)) : g[0]);
        M.psi_x.push_back(var(zbv(1, -k - 1)));
    }
    for (int i = 0; i < sys.n(); ++i) {
        M.states.push_back(sys.states[i]);
        M.f.push_back(f[i]);
        M.psi_x.push_back(psi_x[i]);
    }
    for (int k = 0; k < d2; ++k) {
        M.states.push_back(ubv(1, k));
        M.f.push_back(var(ubv(1, k + 1)));
        M.psi_x.push_back(k == 0 ? psi_u[0] : var(ubv(1, k - 1)));
    }
    if (use_u) {
        M.inputs = {ubv(1, d2), ubv(2)};
        M.psi_u = {d2 > 0 ? var(ubv(1, d2 - 1)) : psi_u[0], psi_u[1]};
    } else {
        M.inputs = inputs;
        M.psi_u = psi_u;
    }
    M.zeta = use_z ? std::vector<Var>{zbv(1, -d1 - 1), zbv(2)} : zeta;
    M.g = {d1 > 0 ? var(zbv(1, -d1)) : g[0], g[1]};
    ext.output = use_u ? compose(phi, ts.Phi_u) : phi;

    // Constant trajectory through the base equilibrium.
    Substitution E = base_values(sys, base_equilibrium);
    Substitution Z = E;
    for (int j = 0; j < sys.m(); ++j) Z.emplace(sys.zeta[j], substitute(sys.g[j], E));
    Expr ubar1 = substitute(ts.ubar1_def, E);
    Expr zetabar1 = substitute(ts.zetabar1_def, Z);
    auto value_of = [&](const Var& v) -> Expr {
        if (v.family == Family::u_bar) return v.component == 1 ? ubar1 : E.at(sys.inputs[ts.kU]);
        if (v.family == Family::zeta_bar) return zetabar1;
        return E.at(v);
    };
    Point p;
    p.params = M.params;
    for (const auto& v : M.states) ext.equilibrium.emplace_back(v, value_of(v));
    for (const auto& v : M.inputs) ext.equilibrium.emplace_back(v, value_of(v));
    for (const auto& [v, e] : ext.equilibrium) {
        try {
            M.equilibrium.set(v, evaluate(e, p));
        } catch (const EvalError& err) {
            throw ExtensionError(std::string("extended equilibrium: ") + err.what());
        }
    }
    check_dimensions(M);
    return ext;
}

ExtendedSystem build_prolongation(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower,
                                  FlatKind kind, const EquilibriumMap& base_equilibrium) {
    if (sys.m() != 2) throw ExtensionError("extensions are implemented for two inputs");
    if (kind != FlatKind::forward_flat && kind != FlatKind::linearizing)
        throw ExtensionError(std::string("prolongation needs a forward-flat output, got ") + kind_name(kind));
    const auto& ix = tower.indices;
    auto ext = assemble_extension(sys, phi, tower, 0, ix.d2, false, ix.d2 > 0, base_equilibrium);
    ext.kind = ExtensionKind::prolongation;
    return ext;
}

ExtendedSystem build_prelongation(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower,
                                  FlatKind kind, const EquilibriumMap& base_equilibrium) {
    if (sys.m() != 2) throw ExtensionError("extensions are implemented for two inputs");
    if (kind != FlatKind::backward_flat && kind != FlatKind::linearizing)
        throw ExtensionError(std::string("prelongation needs a backward-flat output, got ") + kind_name(kind));
    int r = rank_du_phi(sys, phi);
    if (r < sys.m()) throw ExtensionError("prelongation needs rank d_u phi = m, got " + std::to_string(r));
    const auto& ix = tower.indices;
    auto ext = assemble_extension(sys, phi, tower, ix.d1, 0, ix.d1 > 0, false, base_equilibrium);
    ext.kind = ExtensionKind::prelongation;
    return ext;
}

ExtendedSystem build_combined(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower,
                              const EquilibriumMap& base_equilibrium) {
    const auto& ix = tower.indices;
    auto ext = assemble_extension(sys, phi, tower, ix.d1, ix.d2, ix.d1 > 0, ix.d2 > 0, base_equilibrium);
    ext.kind = ExtensionKind::combined;
    return ext;
}

ExtendedSystem build_for(const SystemModel& sys, const std::vector<Expr>& phi, const Tower& tower, FlatKind kind,
                         const EquilibriumMap& base_equilibrium, std::vector<std::string>* diagnostics) {
    switch (kind) {
        case FlatKind::forward_flat: return build_prolongation(sys, phi, tower, kind, base_equilibrium);
        case FlatKind::backward_flat:
            if (rank_du_phi(sys, phi) == sys.m()) return build_prelongation(sys, phi, tower, kind, base_equilibrium);
            if (diagnostics)
                diagnostics->push_back("rank d_u phi < m: backward-flat output routed through the combined path");
            return build_combined(sys, phi, tower, base_equilibrium);
        default: return build_combined(sys, phi, tower, base_equilibrium);
    }
}

Point extended_point(const ExtendedSystem& ext, const Point& base) {
    const SystemModel& M = ext.model;
    const SystemModel& B = ext.base;
    const TransformedSystem& ts = ext.ts;
    Point b = base;
    for (const auto& [k, v] : M.params)
        if (!b.params.count(k)) b.params[k] = v;
    for (int j = 0; j < B.m(); ++j) b.set(B.zeta[j], evaluate(B.g[j], b));

    // Forward chain values along the trajectory with the input held at its base value;
    // backward chain values with zeta held at g(x,u).
    std::vector<Point> ahead{b};
    for (int k = 1; k <= ext.d2; ++k) {
        Point next = ahead.back();
        for (int i = 0; i < B.n(); ++i) next.set(B.states[i], evaluate(B.f[i], ahead.back()));
        ahead.push_back(std::move(next));
    }
    Point out;
    out.params = b.params;
    auto value_of = [&](const Var& v) {
        if (v.family == Family::u_bar)
            return v.component == 1 ? evaluate(ts.ubar1_def, ahead[static_cast<std::size_t>(v.shift)])
                                     : b.at(B.inputs[ts.kU]);
        if (v.family == Family::zeta_bar) return evaluate(ts.zetabar1_def, b);
        return b.at(v);
    };
    for (const auto& v : M.states) out.set(v, value_of(v));
    for (const auto& v : M.inputs) out.set(v, value_of(v));
    return out;
}

Certificate certify_linearizing(const ExtendedSystem& ext, const std::optional<Point>& base_point, double tol_rank,
                                int perturbed) {
    SystemModel M = ext.model;
    if (base_point) M.equilibrium = extended_point(ext, *base_point);
    const int m = M.m();
    const int cap = M.shift_cap();
    auto pts = M.sample_points(perturbed);

    Certificate cert;
    cert.variables = M.states;
    cert.variables.insert(cert.variables.end(), M.inputs.begin(), M.inputs.end());
    cert.required = M.n() + m;
    for (int j = 0; j < m; ++j) {
        std::vector<Expr> fwd{ext.output[j]};
        int r2 = -1;
        for (int a = 0; a <= cap; ++a) {
            if (a > 0) fwd.push_back(M.forward_shift(fwd.back()));
            if (depends_on_any(fwd.back(), pts, [&](const Var& v) { return is_input_shift(M, v); })) {
                r2 = a;
                break;
            }
        }
        std::vector<Expr> bwd;
        int r1 = -1;
        Expr e = ext.output[j];
        for (int b = 1; b <= cap; ++b) {
            e = M.backward_shift(e);
            if (depends_on_any(e, pts, [&](const Var& v) { return is_zeta_shift(M, v); })) {
                r1 = b - 1;
                break;
            }
            bwd.push_back(e);
        }
        if (r1 < 0 || r2 < 0)
            throw ExtensionError("extended output y" + std::to_string(j + 1) + " exceeds the shift cap");
        cert.R1[j] = r1;
        cert.R2[j] = r2;
        std::vector<Expr> rows(bwd.rbegin(), bwd.rend());
        rows.insert(rows.end(), fwd.begin(), fwd.end());
        cert.rows[j] = std::move(rows);
    }

    std::vector<Expr> all;
    for (const auto& r : cert.rows) all.insert(all.end(), r.begin(), r.end());
    cert.square = static_cast<int>(all.size()) == cert.required;
    for (const auto& e : all)
        for (const auto& v : free_variables(e))
            if (std::find(cert.variables.begin(), cert.variables.end(), v) == cert.variables.end())
                cert.square = false;
    cert.equilibrium_rank = sample_rank(all, cert.variables, std::span(pts).first(1), tol_rank).at_first;
    auto r = sample_rank(all, cert.variables, std::span(pts).subspan(1), tol_rank);
    cert.points_checked = r.evaluated;
    cert.perturbed = perturbed;
    cert.rank = r.evaluated > 0 ? r.min : 0;
    return cert;
}

ParameterizationResult invert_certified(const ExtendedSystem& ext, const Certificate& cert) {
    if (!cert.square) throw ExtensionError("cannot invert a non-square tower");
    const SystemModel& M = ext.model;
    std::vector<Expr> eqs;
    std::vector<std::pair<Var, const Expr*>> ys;
    for (int j = 0; j < 2; ++j)
        for (int s = -cert.R1[j]; s <= cert.R2[j]; ++s) {
            const Expr& row = cert.rows[j][static_cast<std::size_t>(s + cert.R1[j])];
            eqs.push_back(var(yv(j + 1, s)) - row);
            ys.emplace_back(yv(j + 1, s), &row);
        }
    std::vector<Point> refs;
    for (auto p : M.sample_points(10, 1e-2)) {
        try {
            for (const auto& [y, row] : ys) p.set(y, evaluate(*row, p));
            refs.push_back(std::move(p));
        } catch (const EvalError&) {
        }
    }
    auto sol = solve_restricted(eqs, cert.variables, refs);
    if (!sol.ok) throw ExtensionError("extended tower inversion failed: " + sol.diagnostic);
    ParameterizationResult out;
    for (const auto& x : M.states) out.F_x.push_back(sol.solution.at(x));
    for (const auto& u : M.inputs) out.F_u.push_back(sol.solution.at(u));
    for (const auto& p : refs) {
        try {
            for (int i = 0; i < M.n(); ++i)
                out.residual = std::max(out.residual, std::abs(evaluate(out.F_x[i], p) - p.at(M.states[i])));
            for (int j = 0; j < M.m(); ++j)
                out.residual = std::max(out.residual, std::abs(evaluate(out.F_u[j], p) - p.at(M.inputs[j])));
        } catch (const EvalError&) {
        }
    }
    return out;
}

EquilibriumMap equilibrium_map(const SystemFile& file) {
    EquilibriumMap out;
    const SystemModel& sys = file.model;
    auto lookup = [&](const Var& v) {
        for (const auto& [w, e] : file.equilibrium)
            if (w == v) return e;
        return Expr(0);
    };
    for (const auto& x : sys.states) out.emplace_back(x, lookup(x));
    for (const auto& u : sys.inputs) out.emplace_back(u, lookup(u));
    return out;
}

SystemFile extended_file(const SystemFile& base, const ExtendedSystem& ext) {
    SystemFile out;
    out.source = base.source;
    out.param_values = base.param_values;
    out.explicit_coordinates = true;
    out.model = ext.model;
    out.output = ext.output;
    out.equilibrium = ext.equilibrium;
    for (const auto& box : base.chart) {
        if (!ext.input_transform) {
            out.chart.push_back(box);
        } else if (box.input == ext.base.inputs[static_cast<std::size_t>(ext.ts.kU)]) {
            out.chart.push_back({ubv(2), box.lo, box.hi});
        }
    }
    return out;
}

}  // namespace dflat
