#include "dagsplit/rational.hpp"

#include <cmath>
#include <cstdlib>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dagsplit {

namespace {

using i128 = __int128;

long long checked_narrow(i128 x) {
  if (x > i128(INT64_MAX) || x < i128(INT64_MIN)) {
    throw std::overflow_error("rational overflow");
  }
  return static_cast<long long>(x);
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

Rat make_reduced(i128 num, i128 den) {
  if (den == 0) {
    if (num <= 0) throw std::domain_error("invalid rational");
    return Rat::infinity();
  }
  if (den < 0) {
    den = -den;
    num = -num;
  }
  i128 g = gcd128(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return Rat(checked_narrow(num), checked_narrow(den));
}

}  // namespace

Rat::Rat(long long n, long long d) : num_(n), den_(d) { normalize(); }

void Rat::normalize() {
  if (den_ == 0) {
    if (num_ <= 0) throw std::domain_error("invalid rational");
    num_ = 1;
    return;
  }
  if (den_ < 0) {
    num_ = -num_;
    den_ = -den_;
  }
  long long g = std::gcd(num_ < 0 ? -num_ : num_, den_);
  if (g > 1) {
    num_ /= g;
    den_ /= g;
  }
}

Rat Rat::infinity() {
  Rat r;
  r.num_ = 1;
  r.den_ = 0;
  return r;
}

Rat Rat::from_double(double x) {
  if (std::isinf(x) && x > 0) return infinity();
  if (!std::isfinite(x)) throw std::domain_error("non-finite number");
  // Snap to the shortest decimal fraction within 1e-9 relative error. JSON
  // inputs are decimal literals, so this recovers them exactly.
  double scale = 1.0;
  for (int k = 0; k <= 9; ++k) {
    double scaled = x * scale;
    double rounded = std::nearbyint(scaled);
    if (std::abs(scaled - rounded) <= 1e-9 * std::max(1.0, std::abs(scaled)) &&
        std::abs(rounded) < 9e15) {
      long long den = 1;
      for (int i = 0; i < k; ++i) den *= 10;
      return Rat(static_cast<long long>(rounded), den);
    }
    scale *= 10.0;
  }
  return Rat(static_cast<long long>(std::llround(x * 1e9)), 1000000000LL);
}

double Rat::to_double() const {
  if (is_infinite()) return HUGE_VAL;
  return static_cast<double>(num_) / static_cast<double>(den_);
}

Rat Rat::operator-() const {
  if (is_infinite()) throw std::domain_error("negating infinity");
  Rat r = *this;
  r.num_ = -r.num_;
  return r;
}

Rat& Rat::operator+=(const Rat& o) {
  if (is_infinite() || o.is_infinite()) {
    *this = infinity();
    return *this;
  }
  *this = make_reduced(i128(num_) * o.den_ + i128(o.num_) * den_,
                       i128(den_) * o.den_);
  return *this;
}

Rat& Rat::operator-=(const Rat& o) {
  if (o.is_infinite()) throw std::domain_error("subtracting infinity");
  if (is_infinite()) return *this;
  *this = make_reduced(i128(num_) * o.den_ - i128(o.num_) * den_,
                       i128(den_) * o.den_);
  return *this;
}

Rat& Rat::operator*=(const Rat& o) {
  if (is_infinite() || o.is_infinite()) {
    if (is_zero() || o.is_zero()) throw std::domain_error("0 * infinity");
    if (is_negative() || o.is_negative()) {
      throw std::domain_error("negative * infinity");
    }
    *this = infinity();
    return *this;
  }
  *this = make_reduced(i128(num_) * o.num_, i128(den_) * o.den_);
  return *this;
}

Rat& Rat::operator/=(const Rat& o) {
  if (o.is_infinite()) throw std::domain_error("dividing by infinity");
  if (o.is_zero()) throw std::domain_error("division by zero");
  if (is_infinite()) {
    if (o.is_negative()) throw std::domain_error("infinity / negative");
    return *this;
  }
  *this = make_reduced(i128(num_) * o.den_, i128(den_) * o.num_);
  return *this;
}

bool operator<(const Rat& a, const Rat& b) {
  if (a.is_infinite()) return false;
  if (b.is_infinite()) return true;
  return i128(a.num_) * b.den_ < i128(b.num_) * a.den_;
}

std::string Rat::to_string() const {
  if (is_infinite()) return "inf";
  if (den_ == 1) return std::to_string(num_);
  std::string dec = to_decimal_string();
  if (!dec.empty() && dec.find('e') == std::string::npos) {
    // to_decimal_string is exact when the denominator divides a power of 10
    long long d = den_;
    while (d % 2 == 0) d /= 2;
    while (d % 5 == 0) d /= 5;
    if (d == 1) return dec;
  }
  return std::to_string(num_) + "/" + std::to_string(den_);
}

std::string Rat::to_decimal_string() const {
  if (is_infinite()) return "inf";
  if (den_ == 1) return std::to_string(num_);
  long long d = den_;
  int twos = 0, fives = 0;
  while (d % 2 == 0) {
    d /= 2;
    ++twos;
  }
  while (d % 5 == 0) {
    d /= 5;
    ++fives;
  }
  if (d == 1) {
    int k = std::max(twos, fives);
    i128 scaled = i128(num_);
    for (int i = 0; i < k; ++i) scaled *= 10;
    scaled /= den_;
    bool neg = scaled < 0;
    if (neg) scaled = -scaled;
    std::string digits;
    if (scaled == 0) digits = "0";
    while (scaled > 0) {
      digits.insert(digits.begin(), char('0' + int(scaled % 10)));
      scaled /= 10;
    }
    while (static_cast<int>(digits.size()) <= k) digits.insert(digits.begin(), '0');
    digits.insert(digits.end() - k, '.');
    while (digits.back() == '0') digits.pop_back();
    if (digits.back() == '.') digits.pop_back();
    return (neg ? "-" : "") + digits;
  }
  std::ostringstream os;
  os.precision(17);
  os << to_double();
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const Rat& r) {
  return os << r.to_string();
}

}  // namespace dagsplit
