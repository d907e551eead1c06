// Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and exits nonzero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

#include "dflat/numeric.hpp"
#include "dflat/report.hpp"

using namespace dflat;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects the failed checks of one criterion.
struct Check {
    std::vector<std::string> failed;
    void expect(bool ok, const std::string& what) {
        if (!ok) failed.push_back(what);
    }
};

FileAnalysis analyze(const std::string& name) {
    return analyze_file(load_system(std::string(DFLAT_SYSTEMS_DIR) + "/" + name));
}

std::string pair_str(const std::array<int, 2>& a) {
    return "(" + std::to_string(a[0]) + "," + std::to_string(a[1]) + ")";
}

// y_j[-R1_j] for the components with R1_j > 0.
std::vector<Var> deepest_past(const ShiftIndices& ix) {
    std::vector<Var> out;
    for (int j = 0; j < 2; ++j)
        if (ix.R1[j] > 0) out.push_back(yv(j + 1, -ix.R1[j]));
    return out;
}

std::vector<Var> deepest_future(const ShiftIndices& ix) {
    std::vector<Var> out;
    for (int j = 0; j < 2; ++j) out.push_back(yv(j + 1, ix.R2[j]));
    return out;
}

// g(F_x, F_u): the extension map along the parameterization.
std::vector<Expr> g_of_F(const FileAnalysis& a) {
    Substitution s;
    for (int i = 0; i < a.model.n(); ++i) s.emplace(a.model.states[i], a.param.F_x[i]);
    for (int j = 0; j < a.model.m(); ++j) s.emplace(a.model.inputs[j], a.param.F_u[j]);
    std::vector<Expr> out;
    for (const auto& g : a.model.g) out.push_back(substitute(g, s));
    return out;
}

int rank_at(std::span<const Expr> exprs, std::span<const Var> vars, const Point& p) {
    return numeric_rank(numeric_jacobian(exprs, vars, p));
}

Point vtol_evaluation_point(const FileAnalysis& a) {
    Point p = a.model.equilibrium_point();
    p.set(xv(5), std::numbers::pi / 2);
    p.set(uv(1), a.model.params.at("g_grav"));
    return p;
}

bool same_model(const SystemModel& a, const SystemModel& b) {
    return a.states == b.states && a.inputs == b.inputs && a.zeta == b.zeta && a.f == b.f && a.g == b.g &&
           a.psi_x == b.psi_x && a.psi_u == b.psi_u;
}

struct Result {
    bool pass;
    std::string detail;
};

Result criterion1() {
    auto t0 = Clock::now();
    Check c;
    auto a = analyze("vtol.sys");
    const auto& ix = a.tower.indices;
    c.expect(a.cls.kind == FlatKind::forward_flat, std::string("kind ") + kind_name(a.cls.kind));
    c.expect(ix.rho == std::array<int, 2>{2, 2}, "rho " + pair_str(ix.rho));
    c.expect(ix.R2 == std::array<int, 2>{4, 4}, "R2 " + pair_str(ix.R2));
    c.expect(ix.R1 == std::array<int, 2>{0, 0}, "R1 " + pair_str(ix.R1));
    c.expect(ix.d == 2, "d " + std::to_string(ix.d));
    auto run = extend_file(a, vtol_evaluation_point(a));
    const auto& cert = run.cert;
    c.expect(run.ext.model.n() == 8, "states " + std::to_string(run.ext.model.n()));
    c.expect(cert.pass(), "certificate");
    c.expect(cert.points_checked == 10, "perturbed points " + std::to_string(cert.points_checked));
    c.expect(cert.regular_at_point(), "rank at x5 = pi/2: " + std::to_string(cert.equilibrium_rank));
    double t = seconds_since(t0);
    c.expect(t < 5.0, "runtime");
    std::ostringstream os;
    os << "forward_flat, rho " << pair_str(ix.rho) << ", R2 " << pair_str(ix.R2) << ", d " << ix.d << "; 8 states, rank "
       << cert.equilibrium_rank << "/" << cert.required << " at x5 = pi/2 and " << cert.rank << "/" << cert.required
       << " min over " << cert.points_checked << " perturbed points; " << t << " s";
    return {c.failed.empty(), c.failed.empty() ? os.str() : "failed: " + c.failed.front() + "; " + os.str()};
}

Result criterion2() {
    auto t0 = Clock::now();
    Check c;
    auto a = analyze("academic.sys");
    const auto& ix = a.tower.indices;
    c.expect(a.cls.kind == FlatKind::backward_flat, std::string("kind ") + kind_name(a.cls.kind));
    c.expect(ix.gamma == std::array<int, 2>{3, 2}, "gamma " + pair_str(ix.gamma));
    c.expect(ix.R1 == std::array<int, 2>{4, 3}, "R1 " + pair_str(ix.R1));
    c.expect(ix.R2 == std::array<int, 2>{0, 0}, "R2 " + pair_str(ix.R2));
    c.expect(ix.d == 2, "d " + std::to_string(ix.d));
    c.expect(a.tower.ts.gbar1 == var(xv(1)), "gbar1 " + a.tower.ts.gbar1.str());
    auto run = extend_file(a, std::nullopt);
    c.expect(run.ext.model.n() == 7, "states " + std::to_string(run.ext.model.n()));
    c.expect(run.cert.pass() && run.cert.required == 9, "certificate");
    double t = seconds_since(t0);
    c.expect(t < 5.0, "runtime");
    std::ostringstream os;
    os << "backward_flat, gamma " << pair_str(ix.gamma) << ", R1 " << pair_str(ix.R1) << ", d " << ix.d
       << ", gbar1 = " << a.tower.ts.gbar1.str() << "; 7 states, rank " << run.cert.rank << "/" << run.cert.required
       << " at 10 perturbed points (" << run.cert.equilibrium_rank << " at the singular equilibrium); " << t << " s";
    return {c.failed.empty(), c.failed.empty() ? os.str() : "failed: " + c.failed.front() + "; " + os.str()};
}

Result criterion3() {
    auto t0 = Clock::now();
    Check c;
    auto a = analyze("robot.sys");
    const auto& ix = a.tower.indices;
    c.expect(a.cls.kind == FlatKind::general, std::string("kind ") + kind_name(a.cls.kind));
    c.expect(ix.rho == std::array<int, 2>{1, 0}, "rho " + pair_str(ix.rho));
    c.expect(ix.gamma == std::array<int, 2>{1, 1}, "gamma " + pair_str(ix.gamma));
    c.expect(ix.R1 == std::array<int, 2>{1, 1}, "R1 " + pair_str(ix.R1));
    c.expect(ix.R2 == std::array<int, 2>{2, 1}, "R2 " + pair_str(ix.R2));
    c.expect(ix.d1 == 1 && ix.d2 == 1 && ix.d == 2, "d1, d2, d");
    auto run = extend_file(a, std::nullopt);
    const auto& M = run.ext.model;
    c.expect(M.n() == 5, "states " + std::to_string(M.n()));
    c.expect(run.cert.pass() && run.cert.required == 7, "certificate");
    int i1 = M.state_index(xv(1));
    Expr expected = parse("x1 + ubar2*cos(ubar1 - x3)", M.dims());
    c.expect(i1 >= 0 && M.f[i1] == expected, "x1+ = " + (i1 >= 0 ? M.f[i1].str() : std::string("?")));
    double t = seconds_since(t0);
    c.expect(t < 5.0, "runtime");
    std::ostringstream os;
    os << "general, rho " << pair_str(ix.rho) << ", gamma " << pair_str(ix.gamma) << ", R1 " << pair_str(ix.R1)
       << ", R2 " << pair_str(ix.R2) << ", d1 = d2 = 1; 5 states, rank " << run.cert.rank << "/" << run.cert.required
       << " at 10 perturbed points (" << run.cert.equilibrium_rank << " at rest); x1+ = " << M.f[i1].str() << "; "
       << t << " s";
    return {c.failed.empty(), c.failed.empty() ? os.str() : "failed: " + c.failed.front() + "; " + os.str()};
}

Result criterion4() {
    Check c;
    for (const char* name : {"vtol.sys", "academic.sys", "robot.sys"}) {
        auto a = analyze(name);
        const auto& ix = a.tower.indices;
        int A = a.tower.ts.A;
        int B = a.tower.ts.B;
        int n = a.model.n();
        std::string tag = std::string(name) + ": ";
        c.expect(ix.R2[A] - ix.rho[A] == ix.R2[B] - ix.rho[B], tag + "r2 - rho");
        c.expect(ix.R1[A] - ix.gamma[A] == ix.R1[B] - ix.gamma[B], tag + "r1 - gamma");
        c.expect(n == ix.R1[B] + ix.R2[B] + ix.gamma[A] + ix.rho[A] - 1, tag + "dimension");
        c.expect(ix.d == ix.count() - n, tag + "defect");
        c.expect(a.tower.identities.all(), tag + "reported identities");
    }
    return {c.failed.empty(), c.failed.empty() ? "all four identities hold on vtol, academic, robot"
                                               : "failed: " + c.failed.front()};
}

Result criterion5() {
    Check c;
    std::ostringstream os;
    for (const char* name : {"academic.sys", "robot.sys"}) {
        auto a = analyze(name);
        auto vars = deepest_past(a.tower.indices);
        auto gF = g_of_F(a);
        auto pts = tower_points(a.model, a.phi, a.tower, 10, 41, 1e-3);
        int checked = 0;
        for (std::size_t k = 1; k < pts.size(); ++k) {
            try {
                int rg = rank_at(gF, vars, pts[k]);
                int rx = rank_at(a.param.F_x, vars, pts[k]);
                c.expect(rg == rx, std::string(name) + ": ranks differ at point " + std::to_string(k));
                if (k == 1) os << name << " rank " << rx << "; ";
                ++checked;
            } catch (const EvalError&) {
            }
        }
        c.expect(checked == 10, std::string(name) + ": only " + std::to_string(checked) + " points evaluated");
    }
    os << "equal at 10 points near each equilibrium image";
    return {c.failed.empty(), c.failed.empty() ? os.str() : "failed: " + c.failed.front()};
}

Result criterion6() {
    Check c;
    auto a = analyze("academic.sys");
    c.expect(a.normalized.has_value(), "normalization ran");
    if (!a.normalized) return {false, "failed: no normalization"};
    const auto& nz = *a.normalized;
    c.expect(nz.zero_block_structural, "structural zero block");
    c.expect(nz.zero_block_numeric <= 1e-10, "numeric zero block");
    // Recomputed here at 10 fresh points.
    auto vars = deepest_past(a.tower.indices);
    auto pts = tower_points(a.model, a.phi, a.tower, 10, 77, 0.1);
    double worst = 0.0;
    for (std::size_t k = 1; k < pts.size(); ++k)
        worst = std::max(worst, numeric_jacobian(nz.F_v, vars, pts[k]).cwiseAbs().maxCoeff());
    c.expect(worst <= 1e-10, "fresh points");
    std::ostringstream os;
    os << "dF_v/dy[-R1] structurally zero, max " << std::max(worst, nz.zero_block_numeric) << " at 10 points";
    return {c.failed.empty(), c.failed.empty() ? os.str() : "failed: " + c.failed.front() + "; " + os.str()};
}

Result criterion7() {
    auto t0 = Clock::now();
    Check c;
    std::ostringstream os;
    for (const char* name : {"vtol.sys", "academic.sys", "robot.sys"}) {
        auto a = analyze(name);
        TrialOptions opt;
        opt.steps = 30;
        opt.trials = 5;
        opt.seed = 7;
        opt.tol = 1e-8;
        auto rep = verify_trials(a.file, a.phi, a.param.F_x, a.param.F_u, opt);
        c.expect(rep.pass && rep.trials == 5, std::string(name) + " residual");
        os << name << " " << std::max(rep.worst.max_residual_x, rep.worst.max_residual_u) << "; ";
    }
    double t = seconds_since(t0);
    c.expect(t < 10.0, "runtime");
    os << t << " s";
    return {c.failed.empty(), c.failed.empty() ? "5 x 30 steps, max residual " + os.str()
                                               : "failed: " + c.failed.front() + "; " + os.str()};
}

Result criterion8() {
    Check c;
    int probes = 0;
    for (const char* name : {"vtol.sys", "academic.sys", "robot.sys"}) {
        auto a = analyze(name);
        auto run = extend_file(a, std::string(name) == "vtol.sys" ? std::optional(vtol_evaluation_point(a)) : std::nullopt);
        const auto& e = run.ext;
        auto eq = equilibrium_map(a.file);
        c.expect(run.cert.square, std::string(name) + ": full extension is square");
        for (int which = 0; which < 2; ++which) {
            int d1 = e.d1 - (which == 0 ? 1 : 0);
            int d2 = e.d2 - (which == 1 ? 1 : 0);
            if (d1 < 0 || d2 < 0) continue;
            auto shorter = assemble_extension(a.model, a.phi, a.tower, d1, d2, e.zeta_transform, e.input_transform, eq);
            c.expect(!certify_linearizing(shorter, run.base_point).square,
                     std::string(name) + ": truncated chain still square");
            ++probes;
        }
    }
    return {c.failed.empty(), c.failed.empty() ? std::to_string(probes) + " truncations, none square"
                                               : "failed: " + c.failed.front()};
}

// Random expressions built from corpus f, g, phi and coordinates.
Expr corpus_expr(std::mt19937_64& rng, const FileAnalysis& a, int depth) {
    const auto& s = a.model;
    std::uniform_int_distribution<int> pick(0, 9);
    int c = pick(rng);
    if (depth == 0 || c < 3) {
        std::vector<Expr> leaves;
        for (const auto& x : s.states) leaves.push_back(var(x));
        for (const auto& u : s.inputs) leaves.push_back(var(u));
        for (const auto& z : s.zeta) leaves.push_back(var(z));
        for (const auto& e : s.f) leaves.push_back(e);
        for (const auto& e : s.g) leaves.push_back(e);
        for (const auto& e : a.phi) leaves.push_back(e);
        return leaves[std::uniform_int_distribution<std::size_t>(0, leaves.size() - 1)(rng)];
    }
    Expr l = corpus_expr(rng, a, depth - 1);
    Expr r = corpus_expr(rng, a, depth - 1);
    switch (c) {
        case 3:
        case 4: return l + r;
        case 5:
        case 6: return l * r;
        case 7: return l - Expr(2) * r;
        case 8: return sin(l) + r;
        default: return pow(l, 2);
    }
}

Result criterion9() {
    Check c;
    std::ostringstream os;

    // Shift operators are mutually inverse.
    std::mt19937_64 rng(9);
    int exprs = 0;
    double shift_worst = 0.0;
    for (const char* name : {"vtol.sys", "academic.sys", "robot.sys"}) {
        auto a = analyze(name);
        auto pts = a.model.sample_points(5, 1e-1, 3);
        for (int k = 0; k < 50; ++k, ++exprs) {
            Expr e = corpus_expr(rng, a, 3);
            Expr fb = a.model.forward_shift(a.model.backward_shift(e));
            Expr bf = a.model.backward_shift(a.model.forward_shift(e));
            int evaluated = 0;
            for (const auto& p : pts) {
                try {
                    double v = evaluate(e, p);
                    shift_worst = std::max(shift_worst, std::abs(evaluate(fb, p) - v) / (1 + std::abs(v)));
                    shift_worst = std::max(shift_worst, std::abs(evaluate(bf, p) - v) / (1 + std::abs(v)));
                    ++evaluated;
                } catch (const EvalError&) {
                }
            }
            c.expect(evaluated > 0, std::string(name) + ": expression never evaluates");
        }
    }
    c.expect(shift_worst <= 1e-9, "shift inverse residual");
    os << exprs << " expressions, shift residual " << shift_worst << "; ";

    // Symbolic Jacobians against central differences.
    double fd_worst = 0.0;
    int jacobians = 0;
    auto fd = [&](std::span<const Expr> rows, std::span<const Var> vars, const Point& p) {
        fd_worst = std::max(fd_worst, fd_jacobian_check(rows, vars, p));
        ++jacobians;
    };
    for (const char* name : {"vtol.sys", "academic.sys", "robot.sys"}) {
        auto a = analyze(name);
        const auto& ix = a.tower.indices;
        auto pts = tower_points(a.model, a.phi, a.tower, 3, 13, 0.1);
        auto past = deepest_past(ix);
        auto future = deepest_future(ix);
        auto gF = g_of_F(a);
        std::vector<Expr> tower_rows;
        for (const auto& r : a.tower.rows) tower_rows.insert(tower_rows.end(), r.begin(), r.end());
        for (std::size_t k = 1; k < pts.size(); ++k) {
            const auto& p = pts[k];
            fd(tower_rows, a.tower.variables, p);
            fd(a.param.F_u, future, p);
            if (!past.empty()) {
                fd(a.param.F_x, past, p);
                fd(gF, past, p);
            }
            if (a.normalized) fd(a.normalized->F_v, past, p);
        }
        std::optional<Point> base;
        if (std::string(name) == "vtol.sys") base = vtol_evaluation_point(a);
        auto run = extend_file(a, base);
        std::vector<Expr> cert_rows;
        for (const auto& r : run.cert.rows) cert_rows.insert(cert_rows.end(), r.begin(), r.end());
        Point ep = extended_point(run.ext, base ? *base : a.model.equilibrium_point());
        std::uniform_real_distribution<double> jitter(-0.05, 0.05);
        for (const auto& v : run.cert.variables) ep.set(v, ep.at(v) + jitter(rng));
        fd(cert_rows, run.cert.variables, ep);
    }
    c.expect(fd_worst <= 1e-6, "finite differences");
    os << jacobians << " Jacobians, fd error " << fd_worst << "; ";

    // Degeneration of the combined construction.
    auto v = analyze("vtol.sys");
    auto ac = analyze("academic.sys");
    bool pro = same_model(build_combined(v.model, v.phi, v.tower, equilibrium_map(v.file)).model,
                          build_prolongation(v.model, v.phi, v.tower, v.cls.kind, equilibrium_map(v.file)).model);
    bool pre = same_model(build_combined(ac.model, ac.phi, ac.tower, equilibrium_map(ac.file)).model,
                          build_prelongation(ac.model, ac.phi, ac.tower, ac.cls.kind, equilibrium_map(ac.file)).model);
    c.expect(pro, "combined != prolongation on vtol");
    c.expect(pre, "combined != prelongation on academic");
    os << "combined = prolongation (vtol), combined = prelongation (academic)";
    return {c.failed.empty(), c.failed.empty() ? os.str() : "failed: " + c.failed.front() + "; " + os.str()};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Result()>>> criteria{
        {"VTOL indices, prolongation, rank 10/10", criterion1},
        {"academic indices, prelongation, rank 9/9", criterion2},
        {"robot indices, combined extension, rank 7/7", criterion3},
        {"index identities", criterion4},
        {"rank of g(F) equals rank of F_x in y[-R1]", criterion5},
        {"zero block after input normalization", criterion6},
        {"trajectory verification", criterion7},
        {"minimality of the extension", criterion8},
        {"shift inverses, finite differences, degeneration", criterion9},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Result r{false, ""};
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        if (!r.pass) ++failed;
        std::cout << (r.pass ? "PASS" : "FAIL") << "  criterion " << i + 1 << ": " << criteria[i].first << " -- "
                  << r.detail << "\n";
    }
    std::cout << (failed == 0 ? "all criteria pass" : std::to_string(failed) + " criteria fail") << "\n";
    return failed == 0 ? 0 : 1;
}
