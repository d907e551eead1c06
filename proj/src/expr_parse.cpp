#include <cctype>
#include <charconv>
#include <optional>
#include <regex>

#include "dflat/expr.hpp"

namespace dflat {

ParseError::ParseError(const std::string& msg, int line, int column)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg),
      line_(line),
      column_(column) {}

namespace {

const std::regex& var_pattern() {
    static const std::regex re("^(zetabar|zeta|ubar|x|u|y)([0-9]+)$");
    return re;
}

Family family_of(const std::string& prefix) {
    if (prefix == "x") return Family::x;
    if (prefix == "u") return Family::u;
    if (prefix == "y") return Family::y;
    if (prefix == "zeta") return Family::zeta;
    if (prefix == "ubar") return Family::u_bar;
    return Family::zeta_bar;
}

class Parser {
public:
    Parser(const std::string& text, const Dimensions& dims, int line) : s_(text), dims_(dims), line_(line) {}

    Expr parse_all() {
        Expr e = expr();
        skip_ws();
        if (pos_ < s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return e;
    }

    Var variable_only() {
        skip_ws();
        std::string id = identifier();
        auto v = as_variable(id);
        if (!v) fail("expected a variable, got '" + id + "'");
        skip_ws();
        if (pos_ < s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return *v;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_, static_cast<int>(pos_) + 1); }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    Expr expr() {
        std::vector<Expr> parts{term()};
        for (;;) {
            if (accept('+')) parts.push_back(term());
            else if (accept('-')) parts.push_back(-term());
            else break;
        }
        return add(std::move(parts));
    }

    Expr term() {
        Expr acc = unary();
        for (;;) {
            if (accept('*')) {
                acc = acc * unary();
            } else if (accept('/')) {
                std::size_t at = pos_;
                Expr d = unary();
                if (d.is_zero()) {
                    pos_ = at;
                    fail("division by zero");
                }
                acc = acc / d;
            } else {
                break;
            }
        }
        return acc;
    }

    Expr unary() {
        if (accept('-')) return -unary();
        if (accept('+')) return unary();
        return power();
    }

    Expr power() {
        Expr b = primary();
        if (accept('^')) {
            skip_ws();
            bool neg = false;
            if (accept('-')) neg = true;
            skip_ws();
            if (accept('(')) {
                skip_ws();
                if (accept('-')) neg = !neg;
                int k = integer();
                expect(')');
                return raise(b, neg ? -k : k);
            }
            int k = integer();
            return raise(b, neg ? -k : k);
        }
        return b;
    }

    Expr raise(const Expr& b, int k) {
        if (b.is_zero() && k < 0) fail("division by zero");
        return pow(b, k);
    }

    int integer() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        if (start == pos_) fail("exponent must be an integer literal");
        int k = 0;
        auto res = std::from_chars(s_.data() + start, s_.data() + pos_, k);
        if (res.ec != std::errc()) fail("exponent out of range");
        return k;
    }

    std::string identifier() {
        skip_ws();
        std::size_t start = pos_;
        if (pos_ < s_.size() && (std::isalpha(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
            ++pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
        }
        if (start == pos_) fail("expected an identifier");
        return s_.substr(start, pos_ - start);
    }

    std::optional<Var> as_variable(const std::string& id) {
        std::smatch m;
        if (!std::regex_match(id, m, var_pattern())) return std::nullopt;
        Var v;
        v.family = family_of(m[1].str());
        v.component = std::stoi(m[2].str());
        int limit = v.family == Family::x ? dims_.n : dims_.m;
        if (v.component < 1 || v.component > limit) fail("component of '" + id + "' out of range");
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == '[') {
            ++pos_;
            skip_ws();
            bool neg = accept('-');
            if (!neg) accept('+');
            int k = integer();
            expect(']');
            v.shift = neg ? -k : k;
        }
        return v;
    }

    Expr number() {
        std::size_t start = pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        std::size_t int_end = pos_;
        std::size_t frac_start = pos_, frac_end = pos_;
        if (pos_ < s_.size() && s_[pos_] == '.') {
            ++pos_;
            frac_start = pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            frac_end = pos_;
        }
        bool has_exp = false;
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t save = pos_;
            ++pos_;
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
            if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
                has_exp = true;
            } else {
                pos_ = save;
            }
        }
        if (has_exp) {
            double v = 0.0;
            auto res = std::from_chars(s_.data() + start, s_.data() + pos_, v);
            if (res.ec != std::errc()) fail("malformed number");
            return Expr(Number::real(v));
        }
        // Decimal literals are exact rationals.
        std::string digits = s_.substr(start, int_end - start) + s_.substr(frac_start, frac_end - frac_start);
        std::size_t frac_len = frac_end - frac_start;
        if (digits.size() > 18) {
            double v = 0.0;
            std::from_chars(s_.data() + start, s_.data() + pos_, v);
            return Expr(Number::real(v));
        }
        std::int64_t num = 0;
        std::from_chars(digits.data(), digits.data() + digits.size(), num);
        std::int64_t den = 1;
        for (std::size_t i = 0; i < frac_len; ++i) den *= 10;
        return Expr(Number::rational(num, den));
    }

    Expr primary() {
        skip_ws();
        if (pos_ >= s_.size()) fail("unexpected end of expression");
        char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (accept('(')) {
            Expr e = expr();
            expect(')');
            return e;
        }
        std::size_t at = pos_;
        std::string id = identifier();
        if (auto v = as_variable(id)) return var(*v);
        static const std::pair<const char*, Func> funcs[] = {
            {"sin", Func::sin}, {"cos", Func::cos}, {"tan", Func::tan}, {"cot", Func::cot}, {"atan", Func::atan}};
        for (const auto& [name, f] : funcs) {
            if (id == name) {
                expect('(');
                Expr a = expr();
                expect(')');
                return apply(f, a);
            }
        }
        if (id == "pi" || dims_.params.count(id)) return param(id);
        pos_ = at;
        fail("undeclared identifier '" + id + "'");
    }

    const std::string& s_;
    const Dimensions& dims_;
    int line_;
    std::size_t pos_ = 0;
};

}  // namespace

Expr parse(const std::string& text, const Dimensions& dims, int line) { return Parser(text, dims, line).parse_all(); }

Var parse_variable(const std::string& text, const Dimensions& dims, int line) {
    return Parser(text, dims, line).variable_only();
}

}  // namespace dflat
