#include "dflat/number.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dflat {

namespace {

using i128 = __int128;

bool fits(i128 v) {
    return v >= std::numeric_limits<std::int64_t>::min() + 1 &&
           v <= std::numeric_limits<std::int64_t>::max();
}

i128 gcd128(i128 a, i128 b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
        i128 t = a % b;
        a = b;
        b = t;
    }
    return a;
}

Number make(i128 num, i128 den) {
    if (den == 0) throw std::domain_error("division by zero in constant folding");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    i128 g = gcd128(num, den);
    if (g > 1) {
        num /= g;
        den /= g;
    }
    if (!fits(num) || !fits(den)) return Number::real(static_cast<double>(num) / static_cast<double>(den));
    return Number::rational(static_cast<std::int64_t>(num), static_cast<std::int64_t>(den));
}

}  // namespace

Number Number::rational(std::int64_t num, std::int64_t den) {
    if (den == 0) throw std::domain_error("division by zero in constant folding");
    Number r;
    if (den < 0) {
        num = -num;
        den = -den;
    }
    std::int64_t g = std::gcd(num, den);
    if (g > 1) {
        num /= g;
        den /= g;
    }
    r.num_ = num;
    r.den_ = den;
    return r;
}

Number Number::real(double v) {
    Number r;
    r.exact_ = false;
    r.real_ = v;
    r.num_ = 0;
    r.den_ = 1;
    return r;
}

double Number::value() const {
    return exact_ ? static_cast<double>(num_) / static_cast<double>(den_) : real_;
}

bool Number::is_zero() const { return exact_ ? num_ == 0 : real_ == 0.0; }
bool Number::is_one() const { return exact_ ? (num_ == 1 && den_ == 1) : real_ == 1.0; }
bool Number::is_minus_one() const { return exact_ ? (num_ == -1 && den_ == 1) : real_ == -1.0; }
bool Number::is_negative() const { return exact_ ? num_ < 0 : real_ < 0.0; }

Number Number::operator-() const {
    if (!exact_) return real(-real_);
    return rational(-num_, den_);
}

Number operator+(const Number& a, const Number& b) {
    if (!a.exact_ || !b.exact_) return Number::real(a.value() + b.value());
    return make(static_cast<i128>(a.num_) * b.den_ + static_cast<i128>(b.num_) * a.den_,
                static_cast<i128>(a.den_) * b.den_);
}

Number operator*(const Number& a, const Number& b) {
    if (!a.exact_ || !b.exact_) return Number::real(a.value() * b.value());
    return make(static_cast<i128>(a.num_) * b.num_, static_cast<i128>(a.den_) * b.den_);
}

Number operator/(const Number& a, const Number& b) {
    if (b.is_zero()) throw std::domain_error("division by zero in constant folding");
    if (!a.exact_ || !b.exact_) return Number::real(a.value() / b.value());
    return make(static_cast<i128>(a.num_) * b.den_, static_cast<i128>(a.den_) * b.num_);
}

Number Number::pow(int k) const {
    if (k < 0) return Number(1) / pow(-k);
    Number result(1);
    Number base = *this;
    while (k > 0) {
        if (k & 1) result = result * base;
        k >>= 1;
        if (k > 0) base = base * base;
    }
    return result;
}

bool operator==(const Number& a, const Number& b) {
    if (a.exact_ != b.exact_) return false;
    if (a.exact_) return a.num_ == b.num_ && a.den_ == b.den_;
    return a.real_ == b.real_;
}

int compare(const Number& a, const Number& b) {
    if (a.exact_ != b.exact_) return a.exact_ ? -1 : 1;
    if (a.exact_) {
        i128 lhs = static_cast<i128>(a.num_) * b.den_;
        i128 rhs = static_cast<i128>(b.num_) * a.den_;
        return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
    }
    return a.real_ < b.real_ ? -1 : (a.real_ > b.real_ ? 1 : 0);
}

std::size_t Number::hash() const {
    if (!exact_) return std::hash<double>{}(real_) ^ 0x9e3779b97f4a7c15ULL;
    return std::hash<std::int64_t>{}(num_) * 31 + std::hash<std::int64_t>{}(den_);
}

std::string Number::str() const {
    if (exact_) {
        if (den_ == 1) return std::to_string(num_);
        return std::to_string(num_) + "/" + std::to_string(den_);
    }
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), real_, std::chars_format::scientific);
    return std::string(buf, res.ptr);
}

}  // namespace dflat
