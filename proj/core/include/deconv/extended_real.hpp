#pragma once

#include <compare>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace deconv {

// Real numbers extended by +inf and -inf, over an exact or floating scalar.
// Conventions: 1/inf = 0, 1/0 = +inf (reciprocals only arise for nonnegative
// quantities here), 0 * inf = 0.
template <class T>
class Extended {
public:
    enum class Kind { finite, pos_inf, neg_inf };

    Extended() : value_(0), kind_(Kind::finite) {}
    Extended(T v) : value_(std::move(v)), kind_(Kind::finite) {}  // NOLINT: implicit by design
    Extended(int v) : value_(v), kind_(Kind::finite) {}              // NOLINT

    static Extended infinity() { return Extended(Kind::pos_inf); }
    static Extended neg_infinity() { return Extended(Kind::neg_inf); }

    bool is_finite() const { return kind_ == Kind::finite; }
    bool is_pos_inf() const { return kind_ == Kind::pos_inf; }
    bool is_neg_inf() const { return kind_ == Kind::neg_inf; }
    Kind kind() const { return kind_; }

    const T& value() const {
        if (!is_finite()) throw std::domain_error("value() of an infinite extended real");
        return value_;
    }

    int sign() const {
        if (kind_ == Kind::pos_inf) return 1;
        if (kind_ == Kind::neg_inf) return -1;
        return value_ > T(0) ? 1 : (value_ < T(0) ? -1 : 0);
    }

    Extended reciprocal() const {
        if (!is_finite()) return Extended(T(0));
        if (value_ == T(0)) return infinity();
        return Extended(T(1) / value_);
    }

    Extended operator-() const {
        if (kind_ == Kind::pos_inf) return neg_infinity();
        if (kind_ == Kind::neg_inf) return infinity();
        return Extended(-value_);
    }

    friend Extended operator+(const Extended& a, const Extended& b) {
        if (a.is_finite() && b.is_finite()) return Extended(a.value_ + b.value_);
        if (!a.is_finite() && !b.is_finite() && a.kind_ != b.kind_)
            throw std::domain_error("inf - inf in extended arithmetic");
        return a.is_finite() ? b : a;
    }
    friend Extended operator-(const Extended& a, const Extended& b) { return a + (-b); }

    friend Extended operator*(const Extended& a, const Extended& b) {
        if (a.is_finite() && b.is_finite()) return Extended(a.value_ * b.value_);
        int s = a.sign() * b.sign();
        if (s == 0) return Extended(T(0));
        return s > 0 ? infinity() : neg_infinity();
    }

    friend Extended operator/(const Extended& a, const Extended& b) {
        if (b.is_finite() && b.value_ == T(0)) {
            if (a.sign() == 0) return Extended(T(0));  // 0/0 = 0
            return a.sign() > 0 ? infinity() : neg_infinity();
        }
        return a * b.reciprocal_signed();
    }

    friend std::partial_ordering operator<=>(const Extended& a, const Extended& b) {
        auto rank = [](const Extended& x) {
            return x.kind_ == Kind::neg_inf ? -1 : (x.kind_ == Kind::pos_inf ? 1 : 0);
        };
        int ra = rank(a), rb = rank(b);
        if (ra != rb) return ra <=> rb;
        if (ra != 0) return std::partial_ordering::equivalent;
        if (a.value_ < b.value_) return std::partial_ordering::less;
        if (b.value_ < a.value_) return std::partial_ordering::greater;
        return std::partial_ordering::equivalent;
    }
    friend bool operator==(const Extended& a, const Extended& b) {
        return (a <=> b) == std::partial_ordering::equivalent;
    }

    double to_double() const {
        if (kind_ == Kind::pos_inf) return std::numeric_limits<double>::infinity();
        if (kind_ == Kind::neg_inf) return -std::numeric_limits<double>::infinity();
        return static_cast<double>(value_);
    }

    friend std::ostream& operator<<(std::ostream& os, const Extended& x) {
        if (x.is_pos_inf()) return os << "inf";
        if (x.is_neg_inf()) return os << "-inf";
        return os << x.value_;
    }

private:
    explicit Extended(Kind k) : value_(0), kind_(k) {}

    Extended reciprocal_signed() const {
        if (!is_finite()) return Extended(T(0));
        return Extended(T(1) / value_);
    }

    T value_;
    Kind kind_;
};

template <class T>
Extended<T> max(const Extended<T>& a, const Extended<T>& b) { return a < b ? b : a; }
template <class T>
Extended<T> min(const Extended<T>& a, const Extended<T>& b) { return b < a ? b : a; }

}  // namespace deconv
