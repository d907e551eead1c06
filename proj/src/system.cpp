#include "dflat/system.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dflat/numeric.hpp"
#include "dflat/solve.hpp"

namespace dflat {

std::optional<Expr> ShiftCache::find(bool forward, const Expr& e) const {
    std::lock_guard lock(mu_);
    const auto& map = forward ? forward_ : backward_;
    auto it = map.find(e);
    if (it == map.end()) return std::nullopt;
    return it->second;
}

void ShiftCache::store(bool forward, const Expr& e, const Expr& image) {
    std::lock_guard lock(mu_);
    (forward ? forward_ : backward_).emplace(e, image);
}

SystemModel SystemModel::plain(int n, int m) {
    SystemModel s;
    for (int i = 1; i <= n; ++i) s.states.push_back(xv(i));
    for (int j = 1; j <= m; ++j) s.inputs.push_back(uv(j));
    for (int j = 1; j <= m; ++j) s.zeta.push_back(zv(j));
    s.x_components = n;
    return s;
}

bool SystemModel::is_plain() const {
    for (std::size_t i = 0; i < states.size(); ++i)
        if (states[i] != xv(static_cast<int>(i) + 1)) return false;
    for (std::size_t j = 0; j < inputs.size(); ++j)
        if (inputs[j] != uv(static_cast<int>(j) + 1)) return false;
    for (std::size_t j = 0; j < zeta.size(); ++j)
        if (zeta[j] != zv(static_cast<int>(j) + 1)) return false;
    return true;
}

SystemModel SystemModel::to_plain(Substitution* to_original) const {
    SystemModel out = plain(n(), m());
    Substitution fwd;
    auto bind = [&](const std::vector<Var>& from, const std::vector<Var>& to) {
        for (std::size_t i = 0; i < from.size(); ++i) {
            fwd.emplace(from[i], var(to[i]));
            if (to_original) to_original->emplace(to[i], var(from[i]));
        }
    };
    bind(states, out.states);
    bind(inputs, out.inputs);
    bind(zeta, out.zeta);
    auto map_all = [&](const std::vector<Expr>& es) {
        std::vector<Expr> r;
        for (const auto& e : es) r.push_back(substitute(e, fwd));
        return r;
    };
    out.f = map_all(f);
    out.g = map_all(g);
    out.psi_x = map_all(psi_x);
    out.psi_u = map_all(psi_u);
    out.params = params;
    out.g_source = g_source;
    out.selected_coordinates = selected_coordinates;
    out.equilibrium.params = equilibrium.params;
    for (const auto& [v, value] : equilibrium.vars) {
        auto it = fwd.find(v);
        out.equilibrium.set(it == fwd.end() ? v : it->second.var(), value);
    }
    return out;
}

Dimensions SystemModel::dims() const {
    Dimensions d;
    d.n = x_components;
    d.m = m();
    for (const auto& [name, value] : params) d.params.insert(name);
    return d;
}

int SystemModel::state_index(const Var& v) const {
    for (std::size_t i = 0; i < states.size(); ++i)
        if (states[i] == v) return static_cast<int>(i);
    return -1;
}

int SystemModel::input_index(const Var& v) const {
    for (std::size_t j = 0; j < inputs.size(); ++j)
        if (inputs[j] == v) return static_cast<int>(j);
    return -1;
}

int SystemModel::zeta_index(const Var& v) const {
    for (std::size_t j = 0; j < zeta.size(); ++j)
        if (zeta[j] == v) return static_cast<int>(j);
    return -1;
}

Expr SystemModel::shift_once(const Expr& e, bool forward) const {
    if (auto hit = cache_.find(forward, e)) return *hit;
    if (!forward && !has_inverse()) throw std::logic_error("backward shift needs the inverse map psi");
    auto leaf = [&](const Var& v) -> Expr {
        if (int i = state_index(v); i >= 0) return forward ? f[i] : psi_x[i];
        for (std::size_t j = 0; j < inputs.size(); ++j) {
            const Var& b = inputs[j];
            if (b.family != v.family || b.component != v.component || v.shift < b.shift) continue;
            if (forward) return var(v.shifted(1));
            return v.shift == b.shift ? psi_u[j] : var(v.shifted(-1));
        }
        for (std::size_t j = 0; j < zeta.size(); ++j) {
            const Var& b = zeta[j];
            if (b.family != v.family || b.component != v.component || v.shift > b.shift) continue;
            if (!forward) return var(v.shifted(-1));
            if (v.shift < b.shift) return var(v.shifted(1));
            if (!has_extension()) throw std::logic_error("forward shift of " + v.str() + " needs the extension map g");
            return g[j];
        }
        throw DimensionError(std::string(forward ? "forward" : "backward") + " shift: variable " + v.str() +
                             " is outside the shift space of the system");
    };
    Expr image = map_variables(e, leaf);
    cache_.store(forward, e, image);
    return image;
}

Expr SystemModel::forward_shift(const Expr& e, int k) const {
    Expr out = e;
    for (int i = 0; i < k; ++i) out = shift_once(out, true);
    return out;
}

Expr SystemModel::backward_shift(const Expr& e, int k) const {
    Expr out = e;
    for (int i = 0; i < k; ++i) out = shift_once(out, false);
    return out;
}

Point SystemModel::equilibrium_point() const {
    Point p = equilibrium;
    p.params = params;
    return p;
}

std::vector<Point> SystemModel::sample_points(int count, double radius, std::uint64_t seed, int depth) const {
    if (depth < 0) depth = shift_cap() + 2;
    Point eq = equilibrium_point();
    std::vector<double> zeta0(zeta.size(), 0.0);
    for (std::size_t j = 0; j < g.size() && j < zeta.size(); ++j) {
        try {
            zeta0[j] = evaluate(g[j], eq);
        } catch (const EvalError&) {
            zeta0[j] = 0.0;
        }
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pert(-radius, radius);
    std::vector<Point> out;
    for (int k = 0; k <= count; ++k) {
        bool perturb = k > 0;
        auto jitter = [&] { return perturb ? pert(rng) : 0.0; };
        Point p;
        p.params = params;
        for (const auto& s : states) p.set(s, (eq.has(s) ? eq.at(s) : 0.0) + jitter());
        for (const auto& u : inputs) {
            double base = eq.has(u) ? eq.at(u) : 0.0;
            for (int a = 0; a <= depth; ++a) p.set(u.shifted(a), base + jitter());
        }
        for (std::size_t j = 0; j < zeta.size(); ++j)
            for (int a = 0; a <= depth; ++a) p.set(zeta[j].shifted(-a), zeta0[j] + jitter());
        out.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------

void check_dimensions(const SystemModel& sys) {
    if (static_cast<int>(sys.f.size()) != sys.n())
        throw DimensionError("dynamics: expected " + std::to_string(sys.n()) + " equations, got " +
                             std::to_string(sys.f.size()));
    if (sys.has_extension() && static_cast<int>(sys.g.size()) != sys.m())
        throw DimensionError("extension: expected " + std::to_string(sys.m()) + " functions, got " +
                             std::to_string(sys.g.size()));
    if (sys.has_inverse() &&
        (static_cast<int>(sys.psi_x.size()) != sys.n() || static_cast<int>(sys.psi_u.size()) != sys.m()))
        throw DimensionError("inverse: expected one equation per state and input");
    if (!sys.zeta.empty() && static_cast<int>(sys.zeta.size()) != sys.m())
        throw DimensionError("coordinates: expected " + std::to_string(sys.m()) + " zeta variables");

    auto in_xu = [&](const Var& v) { return sys.state_index(v) >= 0 || sys.input_index(v) >= 0; };
    auto in_xz = [&](const Var& v) { return sys.state_index(v) >= 0 || sys.zeta_index(v) >= 0; };
    auto check = [&](const std::vector<Expr>& es, const char* section, auto allowed) {
        for (std::size_t i = 0; i < es.size(); ++i) {
            for (const auto& v : free_variables(es[i]))
                if (!allowed(v))
                    throw DimensionError(std::string(section) + ": equation " + std::to_string(i + 1) +
                                         " refers to " + v.str() + ", which is not an allowed coordinate");
            for (const auto& p : free_parameters(es[i]))
                if (p != "pi" && !sys.params.count(p))
                    throw DimensionError(std::string(section) + ": undeclared parameter " + p);
        }
    };
    check(sys.f, "dynamics", in_xu);
    check(sys.g, "extension", in_xu);
    check(sys.psi_x, "inverse", in_xz);
    check(sys.psi_u, "inverse", in_xz);
}

namespace {

std::vector<Var> xu_vars(const SystemModel& sys) {
    std::vector<Var> v = sys.states;
    v.insert(v.end(), sys.inputs.begin(), sys.inputs.end());
    return v;
}

RankCheck rank_check(std::span<const Expr> rows, std::span<const Var> cols, std::span<const Point> points,
                     int required, double tol) {
    RankCheck rc;
    rc.required = required;
    auto first = sample_rank(rows, cols, points.subspan(0, 1), tol);
    auto rest = sample_rank(rows, cols, points.subspan(1), tol);
    rc.perturbed_min = rest.min;
    rc.perturbed_max = rest.generic;
    if (first.evaluated == 1) {
        rc.rank = first.generic;
    } else {
        rc.equilibrium_pole = true;
        rc.rank = rest.generic;
    }
    return rc;
}

}  // namespace

double inverse_residual(const SystemModel& sys, std::span<const Point> points) {
    double worst = 0.0;
    int evaluated = 0;
    for (const auto& p : points) {
        try {
            Point q;
            q.params = p.params;
            for (int i = 0; i < sys.n(); ++i) q.set(sys.states[i], evaluate(sys.f[i], p));
            for (int j = 0; j < sys.m(); ++j) q.set(sys.zeta[j], evaluate(sys.g[j], p));
            double r = 0.0;
            for (int i = 0; i < sys.n(); ++i) r = std::max(r, std::abs(evaluate(sys.psi_x[i], q) - p.at(sys.states[i])));
            for (int j = 0; j < sys.m(); ++j) r = std::max(r, std::abs(evaluate(sys.psi_u[j], q) - p.at(sys.inputs[j])));
            worst = std::max(worst, r);
            ++evaluated;
        } catch (const EvalError&) {
        }
    }
    if (evaluated == 0) return std::numeric_limits<double>::infinity();
    return worst;
}

ValidationReport validate(const SystemModel& sys, double tol_rank) {
    check_dimensions(sys);
    ValidationReport rep;
    auto points = sys.sample_points(10);
    auto xu = xu_vars(sys);

    rep.inputs = rank_check(sys.f, sys.inputs, points, sys.m(), tol_rank);
    rep.submersive = rank_check(sys.f, xu, points, sys.n(), tol_rank);
    if (sys.has_extension()) {
        std::vector<Expr> fg = sys.f;
        fg.insert(fg.end(), sys.g.begin(), sys.g.end());
        rep.extension = rank_check(fg, xu, points, sys.n() + sys.m(), tol_rank);
    }

    Point eq = sys.equilibrium_point();
    rep.equilibrium_residual = 0.0;
    try {
        for (int i = 0; i < sys.n(); ++i)
            rep.equilibrium_residual =
                std::max(rep.equilibrium_residual, std::abs(evaluate(sys.f[i], eq) - eq.at(sys.states[i])));
    } catch (const EvalError& e) {
        rep.equilibrium_residual = std::numeric_limits<double>::infinity();
        rep.messages.push_back(std::string("equilibrium: ") + e.what());
    }

    if (sys.has_extension() && sys.has_inverse()) {
        rep.inverse_residual = inverse_residual(sys, points);
        rep.inverse_check = "numeric";
    }

    rep.pass = rep.inputs.pass() && rep.submersive.pass() && rep.equilibrium_residual <= 1e-10;
    if (!rep.inputs.pass()) rep.messages.push_back("inputs are not independent (rank d_u f < m)");
    if (!rep.submersive.pass()) rep.messages.push_back("system is not submersive (rank d_(x,u) f < n)");
    if (rep.equilibrium_residual > 1e-10) rep.messages.push_back("declared equilibrium is not a fixed point of f");
    if (sys.has_extension()) {
        rep.pass = rep.pass && rep.extension.pass();
        if (!rep.extension.pass()) rep.messages.push_back("(f,g) is not a local diffeomorphism at the equilibrium");
    }
    if (rep.inverse_residual) {
        rep.pass = rep.pass && *rep.inverse_residual <= 1e-9;
        if (*rep.inverse_residual > 1e-9) rep.messages.push_back("psi is not the inverse of (f,g)");
    }
    return rep;
}

ExtensionChoice choose_extension(const SystemModel& sys, double tol_rank) {
    auto xu = xu_vars(sys);
    Point eq = sys.equilibrium_point();
    std::vector<Expr> rows = sys.f;
    auto rank_of = [&](const std::vector<Expr>& r) { return numeric_rank(numeric_jacobian(r, xu, eq), tol_rank); };
    int rank = rank_of(rows);
    ExtensionChoice out;
    out.source = ExtensionSource::auto_selected;
    for (const auto& v : xu) {
        if (rank == sys.n() + sys.m()) break;
        rows.push_back(var(v));
        int r = rank_of(rows);
        if (r > rank) {
            rank = r;
            out.g.push_back(var(v));
            out.selected_coordinates.push_back(v.str());
        } else {
            rows.pop_back();
        }
    }
    if (rank != sys.n() + sys.m() || static_cast<int>(out.g.size()) != sys.m())
        throw std::runtime_error("no choice of coordinates makes (f,g) regular at the equilibrium; supply g");
    return out;
}

InverseResult invert_extension(const SystemModel& sys) {
    if (!sys.has_extension()) throw std::logic_error("invert_extension: g missing");
    // Unknowns are the previous state and input, renamed into an unused family.
    std::vector<Var> prev_x, prev_u;
    Substitution to_prev;
    for (int i = 0; i < sys.n(); ++i) {
        prev_x.push_back({Family::y, 100 + i, 0});
        to_prev.emplace(sys.states[i], var(prev_x.back()));
    }
    for (int j = 0; j < sys.m(); ++j) {
        prev_u.push_back({Family::y, 200 + j, 0});
        to_prev.emplace(sys.inputs[j], var(prev_u.back()));
    }
    std::vector<Expr> residuals;
    for (int i = 0; i < sys.n(); ++i) residuals.push_back(substitute(sys.f[i], to_prev) - var(sys.states[i]));
    for (int j = 0; j < sys.m(); ++j) residuals.push_back(substitute(sys.g[j], to_prev) - var(sys.zeta[j]));

    std::vector<Point> refs;
    for (const auto& p : sys.sample_points(10, 1e-3, 3, 0)) {
        try {
            Point q;
            q.params = p.params;
            for (int i = 0; i < sys.n(); ++i) {
                q.set(prev_x[i], p.at(sys.states[i]));
                q.set(sys.states[i], evaluate(sys.f[i], p));
            }
            for (int j = 0; j < sys.m(); ++j) {
                q.set(prev_u[j], p.at(sys.inputs[j]));
                q.set(sys.zeta[j], evaluate(sys.g[j], p));
            }
            refs.push_back(std::move(q));
        } catch (const EvalError&) {
        }
    }

    std::vector<Var> unknowns = prev_x;
    unknowns.insert(unknowns.end(), prev_u.begin(), prev_u.end());
    auto sol = solve_restricted(residuals, unknowns, refs);
    if (!sol.ok) throw std::runtime_error("cannot invert (f,g): " + sol.diagnostic + "; supply psi");

    InverseResult out;
    for (const auto& v : prev_x) out.psi_x.push_back(sol.solution.at(v));
    for (const auto& v : prev_u) out.psi_u.push_back(sol.solution.at(v));

    // (f,g) o psi = id, checked symbolically first.
    Substitution apply_psi;
    for (int i = 0; i < sys.n(); ++i) apply_psi.emplace(sys.states[i], out.psi_x[i]);
    for (int j = 0; j < sys.m(); ++j) apply_psi.emplace(sys.inputs[j], out.psi_u[j]);
    bool symbolic = true;
    for (int i = 0; i < sys.n() && symbolic; ++i)
        symbolic = (substitute(sys.f[i], apply_psi) - var(sys.states[i])).is_zero();
    for (int j = 0; j < sys.m() && symbolic; ++j)
        symbolic = (substitute(sys.g[j], apply_psi) - var(sys.zeta[j])).is_zero();

    SystemModel with_psi = sys;
    with_psi.psi_x = out.psi_x;
    with_psi.psi_u = out.psi_u;
    out.residual = inverse_residual(with_psi, sys.sample_points(10, 1e-3, 5, 0));
    out.check = symbolic ? "symbolic" : "numeric";
    if (!symbolic && !(out.residual <= 1e-9))
        throw std::runtime_error("inverse of (f,g) fails the composition check (residual " +
                                 std::to_string(out.residual) + ")");
    return out;
}

}  // namespace dflat
