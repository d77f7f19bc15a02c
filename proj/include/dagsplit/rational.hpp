#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>

namespace dagsplit {

// Exact rational number on 64-bit numerator/denominator, plus a single
// +infinity value (denominator 0). All durations, sizes and model
// coefficients in this project are Rats, so solver comparisons are exact.
// Inputs parsed from JSON doubles are snapped to short decimal fractions
// (see from_double); values that do not fit fall back to a 1e-9 grid.
// Intermediate products are computed in 128 bits; a result that cannot be
// reduced back into 64 bits throws std::overflow_error. In practice desk-
// scale workloads stay far below that.
class Rat {
 public:
  constexpr Rat() : num_(0), den_(1) {}
  Rat(long long n) : num_(n), den_(1) {}          // NOLINT(implicit)
  Rat(long n) : num_(n), den_(1) {}               // NOLINT(implicit)
  Rat(int n) : num_(n), den_(1) {}                // NOLINT(implicit)
  Rat(long long n, long long d);

  static Rat infinity();
  static Rat from_double(double x);

  bool is_infinite() const { return den_ == 0; }
  bool is_zero() const { return den_ != 0 && num_ == 0; }
  bool is_negative() const { return num_ < 0; }
  bool is_integer() const { return den_ == 1; }

  long long numerator() const { return num_; }
  long long denominator() const { return den_; }

  double to_double() const;
  // Exact decimal when the denominator is of the form 2^a 5^b, otherwise
  // "num/den".
  std::string to_string() const;
  // Decimal text suitable for LP/CSV emission: exact when possible, else a
  // 17-significant-digit double rendering.
  std::string to_decimal_string() const;

  Rat operator-() const;
  Rat& operator+=(const Rat& o);
  Rat& operator-=(const Rat& o);
  Rat& operator*=(const Rat& o);
  Rat& operator/=(const Rat& o);

  friend Rat operator+(Rat a, const Rat& b) { return a += b; }
  friend Rat operator-(Rat a, const Rat& b) { return a -= b; }
  friend Rat operator*(Rat a, const Rat& b) { return a *= b; }
  friend Rat operator/(Rat a, const Rat& b) { return a /= b; }

  friend bool operator==(const Rat& a, const Rat& b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend bool operator!=(const Rat& a, const Rat& b) { return !(a == b); }
  friend bool operator<(const Rat& a, const Rat& b);
  friend bool operator>(const Rat& a, const Rat& b) { return b < a; }
  friend bool operator<=(const Rat& a, const Rat& b) { return !(b < a); }
  friend bool operator>=(const Rat& a, const Rat& b) { return !(a < b); }

  static Rat min(const Rat& a, const Rat& b) { return a < b ? a : b; }
  static Rat max(const Rat& a, const Rat& b) { return a < b ? b : a; }

  size_t hash() const {
    return std::hash<long long>()(num_) * 1000003u ^
           std::hash<long long>()(den_);
  }

 private:
  long long num_;
  long long den_;  // > 0 for finite values, 0 for +infinity (num_ == 1)

  void normalize();
};

std::ostream& operator<<(std::ostream& os, const Rat& r);

}  // namespace dagsplit

template <>
struct std::hash<dagsplit::Rat> {
  size_t operator()(const dagsplit::Rat& r) const { return r.hash(); }
};
