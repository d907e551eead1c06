#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "dflat/expr.hpp"

using namespace dflat;

namespace {

Dimensions dims() { return {6, 2, {"T_s", "g", "eps"}}; }
Expr P(const std::string& s) { return parse(s, dims()); }

Point random_point(std::mt19937_64& rng, const std::set<Var>& vars) {
    std::uniform_real_distribution<double> d(0.2, 1.2);
    Point p;
    for (const auto& v : vars) p.set(v, d(rng));
    p.params = {{"T_s", 0.1}, {"g", 9.81}, {"eps", 0.2}};
    return p;
}

const char* corpus[] = {
    "x1 + T_s*x3",
    "x4 + T_s*cos(x5)*(-eps*x6^2 + u1) - g*T_s",
    "(x1 + x4 + u1)*(x2 - u2)/(x3 + 2)",
    "sin(x1)^2 + cos(x1)^2 + x2",
    "atan((u1 - x1)/(x2 + 3))",
    "cot(x5)*(ubar1[2] - x1 - 2*T_s*x3)/T_s",
    "x3 + x4*u2 - x2*u1 - u1*u2",
    "zeta1[-1]*zetabar2[-3] - y1[-2]^3",
    "1/(x1*x2) - 3/4*x3 + 2.5e-01*u2[1]",
    "tan(-x1 + x2) + sin(2*x1)/cos(2*x1)",
};

}  // namespace

TEST_CASE("constants fold exactly") {
    CHECK(P("1/2 + 1/3") == Expr(Number::rational(5, 6)));
    CHECK(P("0.25*4") == Expr(1));
    CHECK(P("x1 - x1").is_zero());
    CHECK(P("(x1 + 1)^2 - x1^2 - 2*x1") == Expr(1));
    CHECK(P("sin(0) + cos(0)") == Expr(1));
    CHECK_FALSE(P("1e-1").number().is_exact());
}

TEST_CASE("like terms and powers collect") {
    CHECK(P("x1*x2*x1") == P("x1^2*x2"));
    CHECK(P("x1/x1") == Expr(1));
    CHECK(P("(2*x1 + 2)/(x1 + 1)") == Expr(2));
    CHECK(P("u1 + u1 + 3*u1") == P("5*u1"));
}

TEST_CASE("trigonometric monomials normalize") {
    CHECK(P("sin(x5)/cos(x5)") == P("tan(x5)"));
    CHECK(P("cos(x5)/sin(x5)") == P("cot(x5)"));
    CHECK(P("tan(x5)*cot(x5)") == Expr(1));
    CHECK(P("sin(x5)^2 + cos(x5)^2") == Expr(1));
    CHECK(P("3*u1*sin(x5)^2 + 3*u1*cos(x5)^2") == P("3*u1"));
    CHECK(P("sin(-x1)") == P("-sin(x1)"));
    CHECK(P("cos(-x1)") == P("cos(x1)"));
    CHECK(P("atan(-x1 + x2)") == P("-atan(x1 - x2)"));
}

TEST_CASE("printing round-trips through the parser") {
    for (const char* text : corpus) {
        Expr e = P(text);
        Expr back = P(e.str());
        INFO(text << "  ->  " << e.str());
        CHECK(back == e);
    }
    CHECK(P("x1 + T_s*x3").str() == "x1 + T_s*x3");
}

TEST_CASE("canonicalization is idempotent") {
    for (const char* text : corpus) {
        Expr e = P(text);
        CHECK(canonicalize(e) == e);
        CHECK(canonicalize(canonicalize(e)) == canonicalize(e));
    }
}

TEST_CASE("canonical form preserves value") {
    std::mt19937_64 rng(7);
    for (const char* text : corpus) {
        Expr e = P(text);
        auto p = random_point(rng, free_variables(e));
        // Reference value from a second parse of the untouched text would be the same
        // object; compare against the printed form evaluated independently instead.
        CHECK(evaluate(e, p) == doctest::Approx(evaluate(P(e.str()), p)).epsilon(1e-12));
    }
    Point p;
    p.params = {{"T_s", 0.1}, {"g", 9.81}, {"eps", 0.2}};
    p.set(xv(1), 0.3);
    p.set(xv(2), 0.7);
    CHECK(evaluate(P("(x1 + x2)^3"), p) == doctest::Approx(std::pow(1.0, 3)));
    CHECK(evaluate(P("sin(x1)/cos(x1) - x2*cot(x1)"), p) ==
          doctest::Approx(std::tan(0.3) - 0.7 / std::tan(0.3)));
}

TEST_CASE("derivatives agree with central differences") {
    std::mt19937_64 rng(11);
    for (const char* text : corpus) {
        Expr e = P(text);
        auto vars = free_variables(e);
        auto p = random_point(rng, vars);
        for (const auto& v : vars) {
            double h = 1e-6;
            Point a = p, b = p;
            a.set(v, p.at(v) + h);
            b.set(v, p.at(v) - h);
            double fd = (evaluate(e, a) - evaluate(e, b)) / (2 * h);
            double sym = evaluate(differentiate(e, v), p);
            INFO(text << " d/d" << v.str());
            CHECK(sym == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
        }
    }
}

TEST_CASE("substitution and structural dependence") {
    Expr e = P("x1 + T_s*x3");
    Substitution s{{xv(1), P("u1^2")}, {xv(3), P("x1")}};
    CHECK(substitute(e, s) == P("u1^2 + T_s*x1"));
    CHECK(depends_structurally(e, xv(3)));
    CHECK_FALSE(depends_structurally(e, xv(2)));
    CHECK(free_parameters(e) == std::set<std::string>{"T_s"});
    CHECK(differentiate(e, xv(2)).is_zero());
    auto shifted = map_variables(P("y1[-1] + y2"), [](const Var& v) { return var(v.shifted(1)); });
    CHECK(shifted == P("y1 + y2[1]"));
}

TEST_CASE("evaluation reports poles and unbound leaves") {
    Point p;
    p.set(xv(1), 0.0);
    CHECK_THROWS_AS(evaluate(P("1/x1"), p), EvalError);
    CHECK_THROWS_AS(evaluate(P("cot(x1)"), p), EvalError);
    CHECK_THROWS_AS(evaluate(P("x2"), p), EvalError);
    CHECK(evaluate(P("pi"), p) == doctest::Approx(M_PI));
}

TEST_CASE("parse errors carry positions") {
    CHECK_THROWS_AS(P("x7"), ParseError);
    CHECK_THROWS_AS(P("u3"), ParseError);
    CHECK_THROWS_AS(P("x1 +"), ParseError);
    CHECK_THROWS_AS(P("foo*x1"), ParseError);
    CHECK_THROWS_AS(P("x1^1.5"), ParseError);
    CHECK_THROWS_AS(P("x1/0"), ParseError);
    try {
        parse("x1 + bar", dims(), 4);
        FAIL("expected error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
        CHECK(e.column() == 6);
    }
    CHECK(parse_variable("zetabar2[-3]", dims()) == zbv(2, -3));
    CHECK(parse_variable("ubar1", dims()) == ubv(1, 0));
}
