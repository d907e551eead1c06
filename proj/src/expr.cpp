#include "dflat/expr.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace dflat {

struct Node {
    Kind kind = Kind::number;
    Number num;  // number value / product coefficient / sum constant
    Var var;
    std::string name;
    Func func = Func::sin;
    int exponent = 0;
    std::vector<Expr> ops;  // function: {arg}; power: {base}; product: factors; sum: terms
    std::size_t hash = 0;
};

namespace {

std::size_t mix(std::size_t h, std::size_t v) { return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)); }

int kind_rank(Kind k) { return static_cast<int>(k); }

}  // namespace

// Sole place where nodes are allocated; callers guarantee the canonical invariants.
struct Builder {
    static Expr finish(Node n) {
        std::size_t h = static_cast<std::size_t>(n.kind) * 7919u;
        switch (n.kind) {
            case Kind::number: h = mix(h, n.num.hash()); break;
            case Kind::parameter: h = mix(h, std::hash<std::string>{}(n.name)); break;
            case Kind::variable: h = mix(h, VarHash{}(n.var)); break;
            case Kind::function: h = mix(h, static_cast<std::size_t>(n.func)); break;
            case Kind::power: h = mix(h, static_cast<std::size_t>(n.exponent + 1000)); break;
            case Kind::product:
            case Kind::sum: h = mix(h, n.num.hash()); break;
        }
        for (const auto& op : n.ops) h = mix(h, op.hash());
        n.hash = h;
        return Expr(std::make_shared<const Node>(std::move(n)));
    }
    static Expr number(Number v) {
        Node n;
        n.kind = Kind::number;
        n.num = v;
        return finish(std::move(n));
    }
    static Expr function(Func f, Expr arg) {
        Node n;
        n.kind = Kind::function;
        n.func = f;
        n.ops.push_back(std::move(arg));
        return finish(std::move(n));
    }
    static Expr power(Expr base, int k) {
        Node n;
        n.kind = Kind::power;
        n.exponent = k;
        n.ops.push_back(std::move(base));
        return finish(std::move(n));
    }
    static Expr product(Number coef, std::vector<Expr> factors) {
        Node n;
        n.kind = Kind::product;
        n.num = coef;
        n.ops = std::move(factors);
        return finish(std::move(n));
    }
    static Expr sum(Number constant, std::vector<Expr> terms) {
        Node n;
        n.kind = Kind::sum;
        n.num = constant;
        n.ops = std::move(terms);
        return finish(std::move(n));
    }
    static const std::shared_ptr<const Node>& node(const Expr& e) { return e.node_; }
};

namespace {

const Expr& zero_expr() {
    static const Expr z = Builder::number(Number(0));
    return z;
}

}  // namespace

const char* family_name(Family f) {
    switch (f) {
        case Family::x: return "x";
        case Family::u: return "u";
        case Family::y: return "y";
        case Family::zeta: return "zeta";
        case Family::u_bar: return "ubar";
        case Family::zeta_bar: return "zetabar";
    }
    return "?";
}

const char* func_name(Func f) {
    switch (f) {
        case Func::sin: return "sin";
        case Func::cos: return "cos";
        case Func::tan: return "tan";
        case Func::cot: return "cot";
        case Func::atan: return "atan";
    }
    return "?";
}

std::string Var::str() const {
    std::string s = family_name(family) + std::to_string(component);
    if (shift != 0) s += "[" + std::to_string(shift) + "]";
    return s;
}

Expr::Expr() : node_(Builder::node(zero_expr())) {}
Expr::Expr(Number n) : node_(n.is_zero() && n.is_exact() ? Builder::node(zero_expr()) : Builder::node(Builder::number(n))) {}

Expr Expr::variable(Var v) {
    Node n;
    n.kind = Kind::variable;
    n.var = v;
    return Builder::finish(std::move(n));
}

Expr Expr::parameter(std::string name) {
    Node n;
    n.kind = Kind::parameter;
    n.name = std::move(name);
    return Builder::finish(std::move(n));
}

Kind Expr::kind() const { return node_->kind; }
bool Expr::is_zero() const { return node_->kind == Kind::number && node_->num.is_zero(); }
bool Expr::is_one() const { return node_->kind == Kind::number && node_->num.is_one(); }
const Number& Expr::number() const { return node_->num; }
const Var& Expr::var() const { return node_->var; }
const std::string& Expr::name() const { return node_->name; }
Func Expr::func() const { return node_->func; }
int Expr::exponent() const { return node_->exponent; }
const Expr& Expr::base() const { return node_->ops.front(); }
std::span<const Expr> Expr::operands() const { return node_->ops; }
std::size_t Expr::hash() const { return node_->hash; }

int compare(const Expr& a, const Expr& b) {
    if (a.id() == b.id()) return 0;
    if (a.kind() != b.kind()) return kind_rank(a.kind()) < kind_rank(b.kind()) ? -1 : 1;
    switch (a.kind()) {
        case Kind::number: return compare(a.number(), b.number());
        case Kind::parameter: return a.name() < b.name() ? -1 : (a.name() > b.name() ? 1 : 0);
        case Kind::variable: {
            auto c = a.var() <=> b.var();
            return c < 0 ? -1 : (c > 0 ? 1 : 0);
        }
        case Kind::function:
            if (a.func() != b.func()) return a.func() < b.func() ? -1 : 1;
            return compare(a.base(), b.base());
        case Kind::power: {
            int c = compare(a.base(), b.base());
            if (c != 0) return c;
            return a.exponent() < b.exponent() ? -1 : (a.exponent() > b.exponent() ? 1 : 0);
        }
        case Kind::product:
        case Kind::sum: {
            auto oa = a.operands();
            auto ob = b.operands();
            std::size_t k = std::min(oa.size(), ob.size());
            for (std::size_t i = 0; i < k; ++i) {
                int c = compare(oa[i], ob[i]);
                if (c != 0) return c;
            }
            if (oa.size() != ob.size()) return oa.size() < ob.size() ? -1 : 1;
            return compare(a.number(), b.number());
        }
    }
    return 0;
}

bool operator==(const Expr& a, const Expr& b) {
    if (a.id() == b.id()) return true;
    if (a.hash() != b.hash()) return false;
    return compare(a, b) == 0;
}

// ---------------------------------------------------------------------------
// Canonicalizing constructors

namespace {

// Sign of the leading coefficient, used to pick a representative of +-a.
bool leading_negative(const Expr& e) {
    switch (e.kind()) {
        case Kind::number: return e.number().is_negative();
        case Kind::product: return e.number().is_negative();
        case Kind::sum: return leading_negative(e.operands().front());
        default: return false;
    }
}

Number leading_coefficient(const Expr& sum) {
    const Expr& t = sum.operands().front();
    return t.kind() == Kind::product ? t.number() : Number(1);
}

// Splits a summand into coefficient and monomial.
std::pair<Number, Expr> split_term(const Expr& t) {
    if (t.kind() != Kind::product) return {Number(1), t};
    auto ops = t.operands();
    if (ops.size() == 1) return {t.number(), ops.front()};
    return {t.number(), Builder::product(Number(1), std::vector<Expr>(ops.begin(), ops.end()))};
}

Expr scale(const Expr& monomial, const Number& c) {
    if (c.is_one()) return monomial;
    if (monomial.kind() == Kind::product) {
        auto ops = monomial.operands();
        return Builder::product(c * monomial.number(), std::vector<Expr>(ops.begin(), ops.end()));
    }
    return Builder::product(c, {monomial});
}

bool is_trig(const Expr& e) {
    return e.kind() == Kind::function && e.func() != Func::atan;
}

struct Collector {
    Number coef{1};
    std::map<Expr, int, ExprLess> bases;

    void absorb(const Expr& e, int mult) {
        switch (e.kind()) {
            case Kind::number: coef = coef * e.number().pow(mult); return;
            case Kind::product:
                coef = coef * e.number().pow(mult);
                for (const auto& f : e.operands()) absorb(f, mult);
                return;
            case Kind::power: absorb(e.base(), e.exponent() * mult); return;
            case Kind::sum: {
                Number lead = leading_coefficient(e);
                if (!lead.is_one()) {
                    std::vector<Expr> scaled;
                    Number inv = Number(1) / lead;
                    for (const auto& t : e.operands()) {
                        auto [c, mono] = split_term(t);
                        scaled.push_back(scale(mono, c * inv));
                    }
                    Expr normalized = e.number().is_zero() ? Builder::sum(Number(0), std::move(scaled))
                                                           : Builder::sum(e.number() * inv, std::move(scaled));
                    coef = coef * lead.pow(mult);
                    bases[normalized] += mult;
                } else {
                    bases[e] += mult;
                }
                return;
            }
            default: bases[e] += mult; return;
        }
    }

    // Rewrites every group of sin/cos/tan/cot sharing an argument into the unique
    // form sin^a cos^b tan^c cot^d with at most one of tan/cot present.
    void normalize_trig() {
        std::map<Expr, std::array<int, 4>, ExprLess> groups;
        for (auto it = bases.begin(); it != bases.end();) {
            if (is_trig(it->first)) {
                auto& g = groups[it->first.base()];
                g[static_cast<int>(it->first.func())] += it->second;
                it = bases.erase(it);
            } else {
                ++it;
            }
        }
        for (auto& [arg, g] : groups) {
            int p = g[0] + g[2] - g[3];  // sin exponent
            int q = g[1] - g[2] + g[3];  // cos exponent
            int t = 0, c = 0;
            if (p > 0 && q < 0) {
                t = std::min(p, -q);
                p -= t;
                q += t;
            } else if (p < 0 && q > 0) {
                c = std::min(-p, q);
                p += c;
                q -= c;
            }
            if (p != 0) bases[Builder::function(Func::sin, arg)] += p;
            if (q != 0) bases[Builder::function(Func::cos, arg)] += q;
            if (t != 0) bases[Builder::function(Func::tan, arg)] += t;
            if (c != 0) bases[Builder::function(Func::cot, arg)] += c;
        }
    }

    Expr build() {
        if (coef.is_zero()) return Expr();
        for (auto it = bases.begin(); it != bases.end();) {
            if (it->second == 0) it = bases.erase(it);
            else ++it;
        }
        normalize_trig();
        // Expand the first positive power of a sum.
        for (auto it = bases.begin(); it != bases.end(); ++it) {
            if (it->first.kind() != Kind::sum || it->second <= 0) continue;
            Expr s = it->first;
            std::vector<Expr> rest{Expr(coef)};
            for (const auto& [b, k] : bases) rest.push_back(b == s ? pow(b, k - 1) : pow(b, k));
            Expr others = mul(std::move(rest));
            std::vector<Expr> parts;
            for (const auto& t : s.operands()) parts.push_back(mul({others, t}));
            if (!s.number().is_zero()) parts.push_back(mul({others, Expr(s.number())}));
            return add(std::move(parts));
        }
        std::vector<Expr> factors;
        factors.reserve(bases.size());
        for (const auto& [b, k] : bases) factors.push_back(k == 1 ? b : Builder::power(b, k));
        if (factors.empty()) return Expr(coef);
        if (coef.is_one() && factors.size() == 1) return factors.front();
        return Builder::product(coef, std::move(factors));
    }
};

// Returns the exponent of sin(a) in a monomial, or 0.
struct MonomialView {
    std::vector<std::pair<Expr, int>> factors;
    explicit MonomialView(const Expr& mono) {
        if (mono.kind() == Kind::product) {
            for (const auto& f : mono.operands()) push(f);
        } else {
            push(mono);
        }
    }
    void push(const Expr& f) {
        if (f.kind() == Kind::power) factors.emplace_back(f.base(), f.exponent());
        else factors.emplace_back(f, 1);
    }
};

}  // namespace

Expr add(std::vector<Expr> parts) {
    Number constant{0};
    std::map<Expr, Number, ExprLess> terms;
    auto absorb = [&](const Expr& t) {
        auto [c, mono] = split_term(t);
        auto [it, inserted] = terms.try_emplace(mono, c);
        if (!inserted) it->second = it->second + c;
    };
    for (const auto& p : parts) {
        if (p.kind() == Kind::number) {
            constant = constant + p.number();
        } else if (p.kind() == Kind::sum) {
            constant = constant + p.number();
            for (const auto& t : p.operands()) absorb(t);
        } else {
            absorb(p);
        }
    }
    for (auto it = terms.begin(); it != terms.end();) {
        if (it->second.is_zero()) it = terms.erase(it);
        else ++it;
    }

    // c*M*sin(a)^k + c*M*sin(a)^(k-2)*cos(a)^2 -> c*M*sin(a)^(k-2)
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& [mono, c] : terms) {
            MonomialView view(mono);
            for (std::size_t i = 0; i < view.factors.size() && !changed; ++i) {
                const auto& [b, k] = view.factors[i];
                if (b.kind() != Kind::function || b.func() != Func::sin || k < 2) continue;
                std::vector<Expr> others;
                for (std::size_t j = 0; j < view.factors.size(); ++j)
                    if (j != i) others.push_back(pow(view.factors[j].first, view.factors[j].second));
                others.push_back(pow(b, k - 2));
                Expr reduced = mul(others);
                others.push_back(pow(cos(b.base()), 2));
                Expr partner = mul(others);
                auto [pc, pmono] = split_term(partner);
                auto pit = terms.find(pmono);
                if (pit == terms.end() || !(pit->second == c * pc)) continue;
                Number coef = c;
                Expr mono_copy = mono;
                terms.erase(pit);
                terms.erase(mono_copy);
                auto [rc, rmono] = split_term(reduced);
                if (rmono.is_number()) {
                    constant = constant + coef * rc * rmono.number();
                } else {
                    auto [it, inserted] = terms.try_emplace(rmono, coef * rc);
                    if (!inserted) it->second = it->second + coef * rc;
                    if (it->second.is_zero()) terms.erase(it);
                }
                changed = true;
            }
            if (changed) break;
        }
    }

    std::vector<Expr> ts;
    ts.reserve(terms.size());
    for (const auto& [mono, c] : terms) ts.push_back(scale(mono, c));
    if (ts.empty()) return Expr(constant);
    if (ts.size() == 1 && constant.is_zero()) return ts.front();
    return Builder::sum(constant, std::move(ts));
}

Expr mul(std::vector<Expr> factors) {
    Collector col;
    for (const auto& f : factors) col.absorb(f, 1);
    return col.build();
}

Expr pow(const Expr& base, int k) {
    if (k == 0) return Expr(1);
    if (k == 1) return base;
    if (base.is_number()) return Expr(base.number().pow(k));
    Collector col;
    col.absorb(base, k);
    return col.build();
}

Expr apply(Func f, const Expr& arg) {
    if (arg.is_number()) {
        const Number& v = arg.number();
        if (v.is_exact() && v.is_zero()) {
            switch (f) {
                case Func::sin:
                case Func::tan:
                case Func::atan: return Expr(0);
                case Func::cos: return Expr(1);
                case Func::cot: break;
            }
        } else if (!v.is_exact()) {
            double x = v.value();
            switch (f) {
                case Func::sin: return Expr(Number::real(std::sin(x)));
                case Func::cos: return Expr(Number::real(std::cos(x)));
                case Func::tan: return Expr(Number::real(std::tan(x)));
                case Func::atan: return Expr(Number::real(std::atan(x)));
                case Func::cot:
                    if (std::sin(x) != 0.0) return Expr(Number::real(std::cos(x) / std::sin(x)));
                    break;
            }
        }
    }
    if (leading_negative(arg)) {
        Expr pos = -arg;
        Expr fx = Builder::function(f, pos);
        return f == Func::cos ? fx : -fx;
    }
    return Builder::function(f, arg);
}

Expr operator+(const Expr& a, const Expr& b) { return add({a, b}); }
Expr operator-(const Expr& a, const Expr& b) { return add({a, mul({Expr(-1), b})}); }
Expr operator*(const Expr& a, const Expr& b) { return mul({a, b}); }
Expr operator/(const Expr& a, const Expr& b) { return mul({a, pow(b, -1)}); }
Expr operator-(const Expr& a) { return mul({Expr(-1), a}); }

// ---------------------------------------------------------------------------
// Traversals

namespace {

template <class Leaf>
Expr rebuild(const Expr& e, Leaf&& leaf, std::unordered_map<const Node*, Expr>& memo, bool force) {
    if (auto it = memo.find(e.id()); it != memo.end()) return it->second;
    Expr out;
    switch (e.kind()) {
        case Kind::number:
        case Kind::parameter: out = e; break;
        case Kind::variable: out = leaf(e); break;
        case Kind::function: {
            Expr a = rebuild(e.base(), leaf, memo, force);
            out = (!force && a.id() == e.base().id()) ? e : apply(e.func(), a);
            break;
        }
        case Kind::power: {
            Expr b = rebuild(e.base(), leaf, memo, force);
            out = (!force && b.id() == e.base().id()) ? e : pow(b, e.exponent());
            break;
        }
        case Kind::product:
        case Kind::sum: {
            std::vector<Expr> ops;
            bool same = true;
            for (const auto& op : e.operands()) {
                ops.push_back(rebuild(op, leaf, memo, force));
                same = same && ops.back().id() == op.id();
            }
            if (!force && same) {
                out = e;
            } else if (e.kind() == Kind::product) {
                ops.push_back(Expr(e.number()));
                out = mul(std::move(ops));
            } else {
                ops.push_back(Expr(e.number()));
                out = add(std::move(ops));
            }
            break;
        }
    }
    memo.emplace(e.id(), out);
    return out;
}

}  // namespace

Expr canonicalize(const Expr& e) {
    std::unordered_map<const Node*, Expr> memo;
    return rebuild(e, [](const Expr& v) { return v; }, memo, true);
}

Expr substitute(const Expr& e, const Substitution& map) {
    if (map.empty()) return e;
    std::unordered_map<const Node*, Expr> memo;
    return rebuild(
        e,
        [&](const Expr& v) {
            auto it = map.find(v.var());
            return it == map.end() ? v : it->second;
        },
        memo, false);
}

Expr map_variables(const Expr& e, const std::function<Expr(const Var&)>& fn) {
    std::unordered_map<const Node*, Expr> memo;
    return rebuild(e, [&](const Expr& v) { return fn(v.var()); }, memo, false);
}

Expr replace(const Expr& e, const Expr& target, const Expr& replacement) {
    if (e == target) return replacement;
    switch (e.kind()) {
        case Kind::number:
        case Kind::parameter:
        case Kind::variable: return e;
        case Kind::function: return apply(e.func(), replace(e.base(), target, replacement));
        case Kind::power: return pow(replace(e.base(), target, replacement), e.exponent());
        case Kind::product:
        case Kind::sum: {
            std::vector<Expr> ops{Expr(e.number())};
            for (const auto& op : e.operands()) ops.push_back(replace(op, target, replacement));
            return e.kind() == Kind::product ? mul(std::move(ops)) : add(std::move(ops));
        }
    }
    return e;
}

namespace {

void collect_vars(const Expr& e, std::set<Var>& out, std::unordered_set<const Node*>& seen) {
    if (!seen.insert(e.id()).second) return;
    if (e.kind() == Kind::variable) {
        out.insert(e.var());
        return;
    }
    if (e.kind() == Kind::number || e.kind() == Kind::parameter) return;
    for (const auto& op : e.operands()) collect_vars(op, out, seen);
}

void collect_params(const Expr& e, std::set<std::string>& out, std::unordered_set<const Node*>& seen) {
    if (!seen.insert(e.id()).second) return;
    if (e.kind() == Kind::parameter) {
        out.insert(e.name());
        return;
    }
    if (e.kind() == Kind::number || e.kind() == Kind::variable) return;
    for (const auto& op : e.operands()) collect_params(op, out, seen);
}

bool contains_var(const Expr& e, const Var& v, std::unordered_map<const Node*, bool>& memo) {
    if (auto it = memo.find(e.id()); it != memo.end()) return it->second;
    bool r = false;
    switch (e.kind()) {
        case Kind::number:
        case Kind::parameter: r = false; break;
        case Kind::variable: r = e.var() == v; break;
        default:
            for (const auto& op : e.operands()) {
                if (contains_var(op, v, memo)) {
                    r = true;
                    break;
                }
            }
    }
    memo.emplace(e.id(), r);
    return r;
}

Expr diff(const Expr& e, const Var& v, std::unordered_map<const Node*, Expr>& memo,
          std::unordered_map<const Node*, bool>& dep) {
    if (!contains_var(e, v, dep)) return Expr();
    if (auto it = memo.find(e.id()); it != memo.end()) return it->second;
    Expr out;
    switch (e.kind()) {
        case Kind::number:
        case Kind::parameter: break;
        case Kind::variable: out = Expr(1); break;
        case Kind::sum: {
            std::vector<Expr> parts;
            for (const auto& t : e.operands()) parts.push_back(diff(t, v, memo, dep));
            out = add(std::move(parts));
            break;
        }
        case Kind::product: {
            auto ops = e.operands();
            std::vector<Expr> parts;
            for (std::size_t i = 0; i < ops.size(); ++i) {
                Expr di = diff(ops[i], v, memo, dep);
                if (di.is_zero()) continue;
                std::vector<Expr> fs{Expr(e.number()), di};
                for (std::size_t j = 0; j < ops.size(); ++j)
                    if (j != i) fs.push_back(ops[j]);
                parts.push_back(mul(std::move(fs)));
            }
            out = add(std::move(parts));
            break;
        }
        case Kind::power: {
            int k = e.exponent();
            out = mul({Expr(k), pow(e.base(), k - 1), diff(e.base(), v, memo, dep)});
            break;
        }
        case Kind::function: {
            const Expr& a = e.base();
            Expr da = diff(a, v, memo, dep);
            switch (e.func()) {
                case Func::sin: out = cos(a) * da; break;
                case Func::cos: out = -(sin(a) * da); break;
                case Func::tan: out = (Expr(1) + pow(tan(a), 2)) * da; break;
                case Func::cot: out = -((Expr(1) + pow(cot(a), 2)) * da); break;
                case Func::atan: out = da / (Expr(1) + pow(a, 2)); break;
            }
            break;
        }
    }
    memo.emplace(e.id(), out);
    return out;
}

}  // namespace

Expr differentiate(const Expr& e, const Var& v) {
    std::unordered_map<const Node*, Expr> memo;
    std::unordered_map<const Node*, bool> dep;
    return diff(e, v, memo, dep);
}

std::vector<std::vector<Expr>> jacobian(std::span<const Expr> rows, std::span<const Var> cols) {
    std::vector<std::vector<Expr>> J(rows.size(), std::vector<Expr>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) J[i][j] = differentiate(rows[i], cols[j]);
    return J;
}

std::set<Var> free_variables(const Expr& e) {
    std::set<Var> out;
    std::unordered_set<const Node*> seen;
    collect_vars(e, out, seen);
    return out;
}

std::set<std::string> free_parameters(const Expr& e) {
    std::set<std::string> out;
    std::unordered_set<const Node*> seen;
    collect_params(e, out, seen);
    return out;
}

bool depends_structurally(const Expr& e, const Var& v) {
    std::unordered_map<const Node*, bool> memo;
    return contains_var(e, v, memo);
}

// ---------------------------------------------------------------------------
// Evaluation

double Point::at(const Var& v) const {
    auto it = vars.find(v);
    if (it == vars.end()) throw EvalError(EvalError::Reason::unbound, "unbound variable " + v.str());
    return it->second;
}

namespace {

// Accumulates in long double so that large cancelling terms keep more digits.
long double eval(const Expr& e, const Point& p, std::unordered_map<const Node*, long double>& memo) {
    if (auto it = memo.find(e.id()); it != memo.end()) return it->second;
    long double r = 0.0L;
    switch (e.kind()) {
        case Kind::number: r = e.number().value(); break;
        case Kind::parameter: {
            auto it = p.params.find(e.name());
            if (it != p.params.end()) r = it->second;
            else if (e.name() == "pi") r = std::numbers::pi_v<long double>;
            else throw EvalError(EvalError::Reason::unbound, "unbound parameter " + e.name());
            break;
        }
        case Kind::variable: r = p.at(e.var()); break;
        case Kind::sum:
            r = e.number().value();
            for (const auto& t : e.operands()) r += eval(t, p, memo);
            break;
        case Kind::product:
            r = e.number().value();
            for (const auto& f : e.operands()) r *= eval(f, p, memo);
            break;
        case Kind::power: {
            long double b = eval(e.base(), p, memo);
            if (b == 0.0L && e.exponent() < 0)
                throw EvalError(EvalError::Reason::pole, "division by zero in " + e.str());
            r = std::pow(b, e.exponent());
            break;
        }
        case Kind::function: {
            long double a = eval(e.base(), p, memo);
            switch (e.func()) {
                case Func::sin: r = std::sin(a); break;
                case Func::cos: r = std::cos(a); break;
                case Func::atan: r = std::atan(a); break;
                case Func::tan: {
                    long double c = std::cos(a);
                    if (c == 0.0L) throw EvalError(EvalError::Reason::pole, "pole of tan in " + e.str());
                    r = std::sin(a) / c;
                    break;
                }
                case Func::cot: {
                    long double s = std::sin(a);
                    if (s == 0.0L) throw EvalError(EvalError::Reason::pole, "pole of cot in " + e.str());
                    r = std::cos(a) / s;
                    break;
                }
            }
            break;
        }
    }
    if (!std::isfinite(r)) throw EvalError(EvalError::Reason::pole, "non-finite value of " + e.str());
    memo.emplace(e.id(), r);
    return r;
}

}  // namespace

double evaluate(const Expr& e, const Point& p) {
    std::unordered_map<const Node*, long double> memo;
    double r = static_cast<double>(eval(e, p, memo));
    if (!std::isfinite(r)) throw EvalError(EvalError::Reason::pole, "non-finite value of " + e.str());
    return r;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

// Precedence of the context an expression is printed into.
enum Prec { top = 0, in_sum = 1, in_product = 2, in_power = 3 };

std::string print(const Expr& e, int prec);

std::string wrap(const std::string& s, bool yes) { return yes ? "(" + s + ")" : s; }

std::string print_factor_positive(const Expr& base, int k) {
    std::string b = print(base, in_power);
    return k == 1 ? b : b + "^" + std::to_string(k);
}

std::string print_product(const Number& coef, std::span<const std::pair<Expr, int>> factors, int prec) {
    std::vector<std::string> num, den;
    for (const auto& [b, k] : factors) {
        if (k > 0) num.push_back(print_factor_positive(b, k));
        else den.push_back(print_factor_positive(b, -k));
    }
    Number a = coef.abs();
    std::string s;
    if (!a.is_one() || num.empty()) s = a.str();
    for (const auto& f : num) s += (s.empty() ? "" : "*") + f;
    if (!den.empty()) {
        if (den.size() == 1) {
            s += "/" + den.front();
        } else {
            std::string d;
            for (const auto& f : den) d += (d.empty() ? "" : "*") + f;
            s += "/(" + d + ")";
        }
    }
    bool composite = num.size() + den.size() + (a.is_one() ? 0 : 1) > 1 || !den.empty() ||
                     (a.is_exact() && a.den() != 1);
    if (coef.is_negative()) return wrap("-" + s, prec >= in_product);
    return wrap(s, prec >= in_power && composite);
}

std::string print(const Expr& e, int prec) {
    switch (e.kind()) {
        case Kind::number: {
            const Number& n = e.number();
            std::string s = n.str();
            bool composite = n.is_negative() || (n.is_exact() && n.den() != 1);
            return wrap(s, composite && prec >= in_product);
        }
        case Kind::parameter: return e.name();
        case Kind::variable: return e.var().str();
        case Kind::function: return std::string(func_name(e.func())) + "(" + print(e.base(), top) + ")";
        case Kind::power: {
            std::vector<std::pair<Expr, int>> f{{e.base(), e.exponent()}};
            return print_product(Number(1), f, prec);
        }
        case Kind::product: {
            std::vector<std::pair<Expr, int>> f;
            for (const auto& op : e.operands()) {
                if (op.kind() == Kind::power) f.emplace_back(op.base(), op.exponent());
                else f.emplace_back(op, 1);
            }
            return print_product(e.number(), f, prec);
        }
        case Kind::sum: {
            std::string s;
            auto emit = [&](const Expr& t, bool negative) {
                if (s.empty()) s = negative ? "-" + print(-t, in_product) : print(t, in_sum);
                else s += negative ? " - " + print(-t, in_product) : " + " + print(t, in_sum);
            };
            for (const auto& t : e.operands()) emit(t, leading_negative(t));
            if (!e.number().is_zero()) emit(Expr(e.number()), e.number().is_negative());
            return wrap(s, prec >= in_product);
        }
    }
    return "?";
}

}  // namespace

std::string Expr::str() const { return print(*this, top); }

}  // namespace dflat
