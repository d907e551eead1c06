#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "dflat/numeric.hpp"
#include "dflat/sysfile.hpp"

using namespace dflat;

namespace {

SystemFile corpus(const std::string& name) { return load_system(std::string(DFLAT_SYSTEMS_DIR) + "/" + name); }

SystemModel with_inverse(SystemModel sys) {
    auto inv = invert_extension(sys);
    sys.psi_x = inv.psi_x;
    sys.psi_u = inv.psi_u;
    return sys;
}

// Random expressions over (zeta backward shifts, x, u forward shifts) of a model.
Expr random_expr(std::mt19937_64& rng, const SystemModel& sys, int depth) {
    std::uniform_int_distribution<int> pick(0, 9);
    std::uniform_int_distribution<int> small(1, 3);
    int c = pick(rng);
    if (depth == 0 || c < 3) {
        std::uniform_int_distribution<int> which(0, 2);
        switch (which(rng)) {
            case 0: return var(sys.states[std::uniform_int_distribution<int>(0, sys.n() - 1)(rng)]);
            case 1: return var(sys.inputs[std::uniform_int_distribution<int>(0, sys.m() - 1)(rng)].shifted(small(rng) - 1));
            default: return var(sys.zeta[std::uniform_int_distribution<int>(0, sys.m() - 1)(rng)].shifted(1 - small(rng)));
        }
    }
    Expr a = random_expr(rng, sys, depth - 1);
    Expr b = random_expr(rng, sys, depth - 1);
    switch (c) {
        case 3:
        case 4: return a + b;
        case 5:
        case 6: return a * b;
        case 7: return a - Expr(small(rng)) * b;
        case 8: return sin(a) + b;
        default: return pow(a, small(rng));
    }
}

}  // namespace

TEST_CASE("corpus files parse and validate") {
    for (const char* name : {"vtol.sys", "academic.sys", "robot.sys"}) {
        auto file = corpus(name);
        auto rep = validate(file.model);
        INFO(name);
        CHECK(rep.pass);
        CHECK(rep.inputs.rank == 2);
        CHECK(rep.submersive.rank == file.model.n());
        CHECK(rep.extension.rank == file.model.n() + 2);
        CHECK(rep.equilibrium_residual <= 1e-10);
        // Ranks are stable in a small neighbourhood.
        CHECK(rep.extension.perturbed_min == rep.extension.rank);
    }
}

TEST_CASE("validate rejects duplicated input columns") {
    auto sys = SystemModel::plain(2, 2);
    sys.f = {var(uv(1)), var(uv(1))};
    auto rep = validate(sys);
    CHECK(rep.inputs.rank == 1);
    CHECK_FALSE(rep.pass);
}

TEST_CASE("academic inverse matches the hand-derived one") {
    auto sys = corpus("academic.sys").model;
    auto inv = invert_extension(sys);
    Dimensions d = sys.dims();
    std::vector<Expr> want_x = {parse("zeta1[-1]", d), parse("x2 - x5", d), parse("x3 - (x1 - zeta1[-1])*x5", d),
                                parse("x1 - zeta1[-1]", d), parse("zeta2[-1]", d)};
    std::vector<Expr> want_u = {parse("x4", d), parse("x5", d)};
    CHECK(inv.check == "symbolic");
    for (int i = 0; i < 5; ++i) CHECK(inv.psi_x[i] == want_x[i]);
    for (int j = 0; j < 2; ++j) CHECK(inv.psi_u[j] == want_u[j]);
}

TEST_CASE("trivial system x+ = u swaps") {
    auto sys = SystemModel::plain(2, 2);
    sys.f = {var(uv(1)), var(uv(2))};
    auto choice = choose_extension(sys);
    REQUIRE(choice.g.size() == 2);
    CHECK(choice.g[0] == var(xv(1)));
    CHECK(choice.g[1] == var(xv(2)));
    sys.g = choice.g;
    auto inv = invert_extension(sys);
    CHECK(inv.psi_x[0] == var(zv(1)));
    CHECK(inv.psi_u[1] == var(xv(2)));
}

TEST_CASE("auto-selected extensions are regular") {
    for (const char* name : {"academic.sys", "robot.sys", "vtol.sys"}) {
        auto sys = corpus(name).model;
        sys.g.clear();
        auto choice = choose_extension(sys);
        sys.g = choice.g;
        CHECK(validate(sys).extension.pass());
    }
}

TEST_CASE("shift operator examples") {
    auto vtol = with_inverse(corpus("vtol.sys").model);
    Dimensions dv = vtol.dims();
    CHECK(vtol.forward_shift(var(xv(1))) == parse("x1 + T_s*x3", dv));

    auto acad = with_inverse(corpus("academic.sys").model);
    Dimensions da = acad.dims();
    Expr y1 = parse("x1 + x4 + u1", da);
    CHECK(acad.backward_shift(y1) == parse("x1 + x4", da));
    CHECK(acad.backward_shift(y1, 3) == var(zv(1)));

    auto robot = with_inverse(corpus("robot.sys").model);
    Dimensions dr = robot.dims();
    CHECK(robot.forward_shift(var(xv(3))) == parse("x3 + u2", dr));
    CHECK(robot.forward_shift(var(xv(3)), 2) == parse("x3 + u2 + u2[1]", dr));
    Expr y2 = parse("x1*sin(u2) - x2*cos(u2)", dr);
    CHECK(robot.backward_shift(y2) == parse("x1*sin(x3 - zeta1[-1]) - x2*cos(x3 - zeta1[-1])", dr));
}

TEST_CASE("shift operators are mutually inverse ring morphisms") {
    std::mt19937_64 rng(2024);
    for (const char* name : {"academic.sys", "robot.sys", "vtol.sys"}) {
        auto sys = with_inverse(corpus(name).model);
        auto pts = sys.sample_points(5);
        for (int k = 0; k < 50; ++k) {
            Expr e = random_expr(rng, sys, 3);
            Expr fb = sys.forward_shift(sys.backward_shift(e));
            Expr bf = sys.backward_shift(sys.forward_shift(e));
            bool ok_fb = fb == e, ok_bf = bf == e;
            // Fall back to numeric equality when canonical forms differ.
            for (const auto& p : pts) {
                if (!ok_fb) CHECK(evaluate(fb, p) == doctest::Approx(evaluate(e, p)).epsilon(1e-10));
                if (!ok_bf) CHECK(evaluate(bf, p) == doctest::Approx(evaluate(e, p)).epsilon(1e-10));
            }
            Expr b = random_expr(rng, sys, 2);
            CHECK(sys.forward_shift(e + b) == sys.forward_shift(e) + sys.forward_shift(b));
            CHECK(sys.forward_shift(e * b) == sys.forward_shift(e) * sys.forward_shift(b));
        }
    }
}

TEST_CASE("system files round-trip") {
    for (const char* name : {"vtol.sys", "academic.sys", "robot.sys"}) {
        auto a = corpus(name);
        auto b = parse_system(print_system(a));
        CHECK(print_system(b) == print_system(a));
        for (int i = 0; i < a.model.n(); ++i) CHECK(a.model.f[i] == b.model.f[i]);
    }
}

TEST_CASE("file errors name the section and line") {
    const char* bad = "[dims]\nn = 2\nm = 2\n[dynamics]\nx1+ = u1\nx2+ = u2\nx3+ = u1\n[output]\ny1 = x1\ny2 = x2\n"
                      "[equilibrium]\n";
    try {
        parse_system(bad);
        FAIL("expected error");
    } catch (const FileError& e) {
        CHECK(std::string(e.what()).find("[dynamics]") != std::string::npos);
        CHECK(e.line() == 7);
    }
    CHECK_THROWS_AS(parse_system("[dynamics]\nx1+ = u1\n[dims]\nn = 1\nm = 1\n"), FileError);
    CHECK_THROWS_AS(parse_system("[dims]\nn = 1\nm = 1\n[dynamics]\nx1+ = q*u1\n[output]\ny1 = x1\n[equilibrium]\n"),
                    FileError);
}

TEST_CASE("numeric rank primitive") {
    Eigen::MatrixXd a(2, 2);
    a << 1, 0, 0, 1e-12;
    CHECK(numeric_rank(a) == 1);
    CHECK(numeric_rank(Eigen::MatrixXd::Zero(2, 3)) == 0);
    auto robot = corpus("robot.sys").model;
    Point p = robot.equilibrium_point();
    p.set(uv(1), 1.0);
    p.set(uv(2), 0.3);
    CHECK(numeric_rank(numeric_jacobian(robot.f, robot.inputs, p)) == 2);
    // Scaling rows and columns leaves the rank unchanged.
    auto J = numeric_jacobian(robot.f, std::vector<Var>{xv(1), xv(2), xv(3), uv(1), uv(2)}, p);
    Eigen::VectorXd rs(3), cs(5);
    rs << 1e-2, 1e2, 3.0;
    cs << 1e2, 1e-2, 0.5, 7.0, 1e-2;
    CHECK(numeric_rank(rs.asDiagonal() * J * cs.asDiagonal()) == numeric_rank(J));
}
