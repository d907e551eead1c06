#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "dflat/analysis.hpp"
#include "dflat/numeric.hpp"
#include "dflat/sysfile.hpp"

using namespace dflat;

namespace {

struct Case {
    SystemModel sys;
    std::vector<Expr> phi;
    std::vector<std::pair<double, double>> boxes;
};

Case corpus(const std::string& name) {
    auto file = load_system(std::string(DFLAT_SYSTEMS_DIR) + "/" + name);
    auto inv = invert_extension(file.model);
    file.model.psi_x = inv.psi_x;
    file.model.psi_u = inv.psi_u;
    std::vector<std::pair<double, double>> boxes;
    for (const auto& u : file.model.inputs) boxes.push_back(file.box(u));
    return {file.model, file.output, boxes};
}

Case integrator() {
    auto sys = SystemModel::plain(2, 2);
    sys.f = {var(uv(1)), var(uv(2))};
    sys.g = {var(xv(1)), var(xv(2))};
    auto inv = invert_extension(sys);
    sys.psi_x = inv.psi_x;
    sys.psi_u = inv.psi_u;
    return {sys, {var(xv(1)), var(xv(2))}, {{-1, 1}, {-1, 1}}};
}

// Plain forward simulation in test code: x_{k+1} = f(x_k, u_k), y_k = phi(x_k, u_k).
// Returns points binding y_j[s] for s in [-back, fwd] around time `back`, plus the
// state and input at that time.
Point simulate(const Case& c, std::mt19937_64& rng, int back, int fwd) {
    std::uniform_real_distribution<double> dx(-0.2, 0.2);
    const auto& sys = c.sys;
    Point cur;
    cur.params = sys.params;
    Point eq = sys.equilibrium_point();
    for (const auto& x : sys.states) cur.set(x, eq.at(x) + dx(rng));
    Point out;
    out.params = sys.params;
    for (int k = 0; k <= back + fwd; ++k) {
        for (int j = 0; j < sys.m(); ++j)
            cur.set(sys.inputs[j], std::uniform_real_distribution<double>(c.boxes[j].first, c.boxes[j].second)(rng));
        for (std::size_t j = 0; j < c.phi.size(); ++j)
            out.set(yv(static_cast<int>(j) + 1, k - back), evaluate(c.phi[j], cur));
        if (k == back) {
            for (const auto& x : sys.states) out.set(x, cur.at(x));
            for (const auto& u : sys.inputs) out.set(u, cur.at(u));
        }
        Point next = cur;
        for (int i = 0; i < sys.n(); ++i) next.set(sys.states[i], evaluate(sys.f[i], cur));
        cur = next;
    }
    return out;
}

struct Analysis {
    Tower tower;
    ParameterizationResult param;
    Classification cls;
};

Analysis run(const Case& c) {
    Analysis a{build_tower(c.sys, c.phi), {}, {}};
    a.param = invert_tower(c.sys, c.phi, a.tower);
    a.cls = classify(c.sys, c.phi, a.tower, a.param);
    return a;
}

void check_identities(const ShiftIndices& ix, int n, int A) {
    int B = 1 - A;
    CHECK(ix.R2[A] - ix.rho[A] == ix.R2[B] - ix.rho[B]);
    CHECK(ix.R1[A] - ix.gamma[A] == ix.R1[B] - ix.gamma[B]);
    CHECK(n == ix.R1[B] + ix.R2[B] + ix.gamma[A] + ix.rho[A] - 1);
    CHECK(ix.d == ix.count() - n);
    CHECK(ix.d == ix.d1 + ix.d2);
}

// Max |F(y) - (x,u)| along independent simulations.
double simulated_residual(const Case& c, const ParameterizationResult& p, int trials) {
    std::mt19937_64 rng(99);
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        Point pt = simulate(c, rng, 8, 8);
        for (int i = 0; i < c.sys.n(); ++i)
            worst = std::max(worst, std::abs(evaluate(p.F_x[i], pt) - pt.at(c.sys.states[i])));
        for (int j = 0; j < c.sys.m(); ++j)
            worst = std::max(worst, std::abs(evaluate(p.F_u[j], pt) - pt.at(c.sys.inputs[j])));
    }
    return worst;
}

bool window(const Expr& e, const ShiftIndices& ix, int top) {
    for (const auto& v : free_variables(e)) {
        if (v.family != Family::y) return false;
        if (v.shift < -ix.R1[v.component - 1] || v.shift > ix.R2[v.component - 1] - top) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("vtol: forward-flat indices and tower") {
    auto c = corpus("vtol.sys");
    auto a = run(c);
    const auto& ix = a.tower.indices;
    CHECK(ix.rho == std::array<int, 2>{2, 2});
    CHECK(ix.R2 == std::array<int, 2>{4, 4});
    CHECK(ix.R1 == std::array<int, 2>{0, 0});
    CHECK(ix.d == 2);
    CHECK(ix.d1 == 0);
    CHECK(ix.d2 == 2);
    check_identities(ix, c.sys.n(), a.tower.ts.A);
    CHECK(a.tower.rank == ix.count() + 2);
    // The fourth shift of y1 is the second shift of the new input.
    CHECK(a.tower.at(0, 4) == var(ubv(1, 2)));
    CHECK(a.tower.at(0, 2) == var(ubv(1, 0)));
    CHECK(a.cls.kind == FlatKind::forward_flat);
    CHECK(a.cls.consistent);
    CHECK(a.cls.rank_Fx_at_minusR1 == 2);
    CHECK(simulated_residual(c, a.param, 10) <= 1e-8);
}

TEST_CASE("academic: backward-flat indices and tower") {
    auto c = corpus("academic.sys");
    auto a = run(c);
    const auto& ix = a.tower.indices;
    CHECK(ix.gamma == std::array<int, 2>{3, 2});
    CHECK(ix.rho == std::array<int, 2>{0, 0});
    CHECK(ix.R1 == std::array<int, 2>{4, 3});
    CHECK(ix.R2 == std::array<int, 2>{0, 0});
    CHECK(ix.d1 == 2);
    CHECK(ix.d2 == 0);
    check_identities(ix, c.sys.n(), a.tower.ts.A);
    CHECK(a.tower.at(0, -3) == var(zbv(1, -1)));
    CHECK(a.tower.at(0, -4) == var(zbv(1, -2)));
    CHECK(a.cls.kind == FlatKind::backward_flat);
    CHECK(a.cls.consistent);
    CHECK(a.cls.rank_Fu_at_R2 == 2);
    for (const auto& e : a.param.F_x) CHECK(window(e, ix, 1));
    for (const auto& e : a.param.F_u) CHECK(window(e, ix, 0));
    // x = F_x(y1[-4,-1], y2[-3,-1]): no y[0] in F_x.
    for (const auto& e : a.param.F_x) {
        CHECK_FALSE(depends_structurally(e, yv(1, 0)));
        CHECK_FALSE(depends_structurally(e, yv(2, 0)));
    }
    CHECK(simulated_residual(c, a.param, 10) <= 1e-8);
}

TEST_CASE("robot: general indices") {
    auto c = corpus("robot.sys");
    auto a = run(c);
    const auto& ix = a.tower.indices;
    CHECK(ix.rho == std::array<int, 2>{1, 0});
    CHECK(ix.gamma == std::array<int, 2>{1, 1});
    CHECK(ix.R1 == std::array<int, 2>{1, 1});
    CHECK(ix.R2 == std::array<int, 2>{2, 1});
    CHECK(ix.d1 == 1);
    CHECK(ix.d2 == 1);
    CHECK(ix.d == 2);
    check_identities(ix, c.sys.n(), a.tower.ts.A);
    CHECK(a.cls.kind == FlatKind::general);
    CHECK(a.cls.consistent);
    CHECK(a.cls.rank_Fu_at_R2 <= 1);
    CHECK(a.cls.rank_Fx_at_minusR1 <= 1);
    for (const auto& e : a.param.F_x) CHECK(window(e, ix, 1));
    for (const auto& e : a.param.F_u) CHECK(window(e, ix, 0));
    CHECK(simulated_residual(c, a.param, 10) <= 1e-8);
}

TEST_CASE("single integrator is linearizing") {
    auto c = integrator();
    auto a = run(c);
    const auto& ix = a.tower.indices;
    CHECK(ix.rho == std::array<int, 2>{1, 1});
    CHECK(ix.gamma == std::array<int, 2>{1, 1});
    CHECK(ix.d == 0);
    CHECK(a.cls.kind == FlatKind::linearizing);
    CHECK(a.param.F_x[0] == var(yv(1, 0)));
    CHECK(a.param.F_u[1] == var(yv(2, 1)));
}

TEST_CASE("structural properties on the corpus") {
    for (const char* name : {"vtol.sys", "academic.sys", "robot.sys"}) {
        INFO(std::string(name));
        auto c = corpus(name);
        auto a = run(c);
        const auto& ix = a.tower.indices;
        // F_x never reaches the top output shifts.
        for (const auto& e : a.param.F_x) {
            CHECK_FALSE(depends_structurally(e, yv(1, ix.R2[0])));
            CHECK_FALSE(depends_structurally(e, yv(2, ix.R2[1])));
        }
        // The ranks of dF_x and d(g o F) w.r.t. the bottom output shifts coincide.
        CHECK(a.cls.rank_g_of_F == a.cls.rank_Fx_at_minusR1);
        // Kinds are mutually exclusive with the index pattern.
        if (a.cls.kind == FlatKind::forward_flat) CHECK(ix.R1 == std::array<int, 2>{0, 0});
        if (a.cls.kind == FlatKind::backward_flat) CHECK(ix.R2 == std::array<int, 2>{0, 0});
        // Full-rank tower Jacobian near the equilibrium, and at every point of a wider sample.
        auto pts = tower_points(c.sys, c.phi, a.tower);
        CHECK(sample_rank(a.tower.equations(), a.tower.variables, pts).generic == ix.count() + 2);
        auto wide = tower_points(c.sys, c.phi, a.tower, 10, 3, 0.1);
        auto r = sample_rank(a.tower.equations(), a.tower.variables, std::span(wide).subspan(1));
        CHECK(r.evaluated == 10);
        CHECK(r.min == ix.count() + 2);
    }
}

TEST_CASE("normalized inputs and the zero block") {
    auto acad = corpus("academic.sys");
    auto a = run(acad);
    auto norm = normalize_inputs(acad.sys, acad.phi, &a.tower, &a.param);
    CHECK(norm.identity);
    CHECK(norm.rows == std::array<int, 2>{3, 4});
    CHECK(norm.zero_block_structural);
    CHECK(norm.zero_block_numeric <= 1e-10);
    CHECK(norm.F_v_agreement <= 1e-9);

    for (const char* name : {"robot.sys", "vtol.sys"}) {
        INFO(std::string(name));
        auto c = corpus(name);
        auto r = run(c);
        auto nr = normalize_inputs(c.sys, c.phi, &r.tower, &r.param);
        CHECK_FALSE(nr.identity);
        CHECK(nr.zero_block_structural);
        CHECK(nr.zero_block_numeric <= 1e-10);
        CHECK(nr.F_v_agreement <= 1e-9);
        // Composing the transform with the original dynamics yields x_row+ = v.
        for (int j = 0; j < 2; ++j) CHECK(nr.system.f[nr.rows[j]] == var(ubv(j + 1)));
    }
    auto robot = corpus("robot.sys");
    CHECK(normalize_inputs(robot.sys).rows == std::array<int, 2>{0, 2});
}

TEST_CASE("user parameterization is cross-checked") {
    auto c = corpus("robot.sys");
    auto a = run(c);
    auto again = invert_tower(c.sys, c.phi, a.tower, &a.param.F_x, &a.param.F_u);
    REQUIRE(again.user_disagreement.has_value());
    CHECK(*again.user_disagreement <= 1e-12);
    auto wrong = a.param.F_x;
    wrong[0] = wrong[0] + Expr(Number::rational(1, 1000));
    CHECK_THROWS_AS(invert_tower(c.sys, c.phi, a.tower, &wrong, &a.param.F_u), AnalysisError);
}

TEST_CASE("defective candidates are rejected") {
    auto c = corpus("academic.sys");
    // Both components equal: no valid ordering exists.
    std::vector<Expr> dup{c.phi[0], c.phi[0]};
    CHECK_THROWS_AS(build_tower(c.sys, dup), AnalysisError);
    // A constant output never depends on u.
    std::vector<Expr> flat{Expr(1), c.phi[1]};
    CHECK_THROWS_AS(relative_degrees(c.sys, flat), AnalysisError);
}
