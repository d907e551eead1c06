#pragma once

#include <compare>
#include <functional>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dflat/number.hpp"

namespace dflat {

// Variable families of the shift space (..., zeta[-1], x, u, u[1], ...) plus the
// flat output y and the transformed chain coordinates used by dynamic extensions.
enum class Family : std::uint8_t { x, u, y, zeta, u_bar, zeta_bar };

const char* family_name(Family f);

struct Var {
    Family family = Family::x;
    int component = 1;
    int shift = 0;

    auto operator<=>(const Var&) const = default;

    Var shifted(int k) const { return {family, component, shift + k}; }
    std::string str() const;
};

struct VarHash {
    std::size_t operator()(const Var& v) const noexcept {
        return (static_cast<std::size_t>(v.family) * 1000003u + static_cast<std::size_t>(v.component)) * 1000033u +
               static_cast<std::size_t>(v.shift + 4096);
    }
};

inline Var xv(int i, int s = 0) { return {Family::x, i, s}; }
inline Var uv(int j, int s = 0) { return {Family::u, j, s}; }
inline Var yv(int j, int s = 0) { return {Family::y, j, s}; }
inline Var zv(int j, int s = -1) { return {Family::zeta, j, s}; }
inline Var ubv(int j, int s = 0) { return {Family::u_bar, j, s}; }
inline Var zbv(int j, int s = -1) { return {Family::zeta_bar, j, s}; }

enum class Kind : std::uint8_t { number, parameter, variable, function, power, product, sum };
enum class Func : std::uint8_t { sin, cos, tan, cot, atan };

const char* func_name(Func f);

struct Node;

// Immutable symbolic expression. Every constructor canonicalizes: sums and products
// are flattened, like terms/bases collected, constants folded, products of sums
// expanded, and operands sorted by a fixed total order. Two canonical expressions
// compare equal iff they are structurally identical.
class Expr {
public:
    Expr();  // zero
    Expr(Number n);  // NOLINT
    Expr(int v) : Expr(Number(v)) {}  // NOLINT

    static Expr variable(Var v);
    static Expr parameter(std::string name);

    Kind kind() const;
    bool is_number() const { return kind() == Kind::number; }
    bool is_zero() const;
    bool is_one() const;

    const Number& number() const;       // number; coefficient of product; constant of sum
    const Var& var() const;             // variable
    const std::string& name() const;    // parameter
    Func func() const;                  // function
    int exponent() const;               // power
    const Expr& base() const;           // power base / function argument
    std::span<const Expr> operands() const;  // product factors / sum terms

    std::size_t hash() const;
    const Node* id() const { return node_.get(); }

    friend bool operator==(const Expr& a, const Expr& b);

    // Human-readable text in the DSL grammar; parse(print(e)) == e.
    std::string str() const;

private:
    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;

    friend struct Builder;
};

struct ExprHash {
    std::size_t operator()(const Expr& e) const noexcept { return e.hash(); }
};

// Total order used for canonical sorting: kind first, then contents. Variables order
// lexicographically by (family, component, shift).
int compare(const Expr& a, const Expr& b);

struct ExprLess {
    bool operator()(const Expr& a, const Expr& b) const { return compare(a, b) < 0; }
};

Expr add(std::vector<Expr> parts);
Expr mul(std::vector<Expr> factors);
Expr pow(const Expr& base, int k);
Expr apply(Func f, const Expr& arg);

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);

inline Expr sin(const Expr& a) { return apply(Func::sin, a); }
inline Expr cos(const Expr& a) { return apply(Func::cos, a); }
inline Expr tan(const Expr& a) { return apply(Func::tan, a); }
inline Expr cot(const Expr& a) { return apply(Func::cot, a); }
inline Expr atan(const Expr& a) { return apply(Func::atan, a); }

inline Expr var(Var v) { return Expr::variable(v); }
inline Expr param(std::string n) { return Expr::parameter(std::move(n)); }

// Rebuilds e bottom-up through the canonicalizing constructors.
Expr canonicalize(const Expr& e);

using Substitution = std::unordered_map<Var, Expr, VarHash>;

// Simultaneous substitution followed by canonicalization.
Expr substitute(const Expr& e, const Substitution& map);

// Replaces every occurrence of the subexpression `target` by `replacement`.
Expr replace(const Expr& e, const Expr& target, const Expr& replacement);

Expr differentiate(const Expr& e, const Var& v);

std::vector<std::vector<Expr>> jacobian(std::span<const Expr> rows, std::span<const Var> cols);

std::set<Var> free_variables(const Expr& e);
std::set<std::string> free_parameters(const Expr& e);
bool depends_structurally(const Expr& e, const Var& v);

// Applies `fn` to every variable leaf (used for the y-shift operator and renaming).
Expr map_variables(const Expr& e, const std::function<Expr(const Var&)>& fn);

// ---------------------------------------------------------------------------
// Numeric evaluation

class EvalError : public std::runtime_error {
public:
    enum class Reason { unbound, pole };
    EvalError(Reason r, const std::string& what) : std::runtime_error(what), reason_(r) {}
    Reason reason() const { return reason_; }

private:
    Reason reason_;
};

// Bindings for variables and named parameters. "pi" is always bound.
struct Point {
    std::unordered_map<Var, double, VarHash> vars;
    std::map<std::string, double> params;

    void set(const Var& v, double value) { vars[v] = value; }
    bool has(const Var& v) const { return vars.count(v) != 0; }
    double at(const Var& v) const;
};

double evaluate(const Expr& e, const Point& p);

// ---------------------------------------------------------------------------
// Parsing

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, int line, int column);
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

// Dimensions and declared names an expression may refer to.
struct Dimensions {
    int n = 0;
    int m = 0;
    std::set<std::string> params;
};

// `line` is only used to annotate errors.
Expr parse(const std::string& text, const Dimensions& dims, int line = 1);

// Parses a bare variable token such as "x3", "ubar1[2]" or "zeta2[-1]".
Var parse_variable(const std::string& text, const Dimensions& dims, int line = 1);

}  // namespace dflat
