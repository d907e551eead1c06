#pragma once

#include <cstdint>
#include <string>

namespace dflat {

// Numeric constant of an expression: an exact rational while it fits in 64 bits,
// otherwise (or when built from a floating literal) an IEEE double.
class Number {
public:
    Number() = default;
    Number(int v) : num_(v) {}  // NOLINT: implicit on purpose, integers are exact

    static Number rational(std::int64_t num, std::int64_t den);
    static Number real(double v);

    bool is_exact() const { return exact_; }
    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }
    double value() const;

    bool is_zero() const;
    bool is_one() const;
    bool is_minus_one() const;
    bool is_negative() const;
    bool is_integer() const { return exact_ && den_ == 1; }

    Number operator-() const;
    friend Number operator+(const Number& a, const Number& b);
    friend Number operator-(const Number& a, const Number& b) { return a + (-b); }
    friend Number operator*(const Number& a, const Number& b);
    friend Number operator/(const Number& a, const Number& b);
    Number pow(int k) const;
    Number abs() const { return is_negative() ? -*this : *this; }

    // Structural equality: an exact 1/2 and the double 0.5 are different constants.
    friend bool operator==(const Number& a, const Number& b);
    friend int compare(const Number& a, const Number& b);

    std::size_t hash() const;

    // Exact values print as "p" or "p/q"; doubles in scientific notation so that
    // re-parsing yields a double again.
    std::string str() const;

private:
    bool exact_ = true;
    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
    double real_ = 0.0;
};

}  // namespace dflat
