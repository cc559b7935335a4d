#include "mdds/exact_sum.hpp"

#include <bit>
#include <cmath>
#include <limits>

namespace mdds {

void ExactSum::add(float v) {
  if (std::isnan(v)) {
    nan_ = true;
    return;
  }
  if (std::isinf(v)) {
    (v > 0 ? pos_inf_ : neg_inf_) = true;
    return;
  }
  const auto bits = std::bit_cast<std::uint32_t>(v);
  const bool negative = (bits >> 31) != 0;
  const std::uint32_t exponent = (bits >> 23) & 0xffu;
  const std::uint32_t fraction = bits & 0x7fffffu;
  if (exponent == 0) {
    if (fraction != 0) add_magnitude(fraction, 0, negative);  // subnormal: fraction * 2^-149
    return;
  }
  // (fraction | 2^23) * 2^(exponent - 150), i.e. shifted by exponent - 1 units.
  add_magnitude(fraction | 0x800000u, static_cast<int>(exponent) - 1, negative);
}

void ExactSum::add(std::int64_t v) {
  if (v == 0) return;
  const bool negative = v < 0;
  const std::uint64_t mag = negative ? 0 - static_cast<std::uint64_t>(v) : static_cast<std::uint64_t>(v);
  add_magnitude(mag, -kUnitExponent, negative);
}

void ExactSum::add(const ExactSum& other) {
  ExactSum o = other;
  o.normalize();
  normalize();
  for (int i = 0; i < kLimbs; ++i) limbs_[i] += o.limbs_[i];
  pending_ = 1;
  nan_ |= o.nan_;
  pos_inf_ |= o.pos_inf_;
  neg_inf_ |= o.neg_inf_;
}

void ExactSum::add_magnitude(std::uint64_t mag, int shift, bool negative) {
  const int limb = shift / 32;
  const unsigned __int128 w = static_cast<unsigned __int128>(mag) << (shift % 32);
  for (int k = 0; k < 3; ++k) {
    const auto part = static_cast<std::int64_t>((w >> (32 * k)) & 0xffffffffu);
    if (part != 0) limbs_[limb + k] += negative ? -part : part;
  }
  if (++pending_ >= (1u << 30)) normalize();
}

// Brings limbs 0..n-2 into [0, 2^32); the top limb keeps the sign.
void ExactSum::normalize() {
  for (int i = 0; i + 1 < kLimbs; ++i) {
    const std::int64_t carry = limbs_[i] >> 32;  // arithmetic shift: floor division
    limbs_[i] -= carry * (std::int64_t{1} << 32);
    limbs_[i + 1] += carry;
  }
  pending_ = 0;
}

double ExactSum::value() const {
  if (nan_ || (pos_inf_ && neg_inf_)) return std::numeric_limits<double>::quiet_NaN();
  if (pos_inf_) return std::numeric_limits<double>::infinity();
  if (neg_inf_) return -std::numeric_limits<double>::infinity();

  ExactSum s = *this;
  s.normalize();
  const bool negative = s.limbs_[kLimbs - 1] < 0;
  if (negative) {
    for (auto& l : s.limbs_) l = -l;
    s.normalize();
  }
  const auto& x = s.limbs_;
  int top = -1;
  for (int i = kLimbs - 1; i >= 0; --i) {
    if (x[i] != 0) {
      top = 32 * i + 63 - std::countl_zero(static_cast<std::uint64_t>(x[i]));
      break;
    }
  }
  if (top < 0) return 0.0;

  auto bit = [&](int j) -> std::uint64_t {
    return (static_cast<std::uint64_t>(x[j / 32]) >> (j % 32)) & 1u;
  };
  double magnitude;
  if (top <= 52) {
    const std::uint64_t m = static_cast<std::uint64_t>(x[0]) | (static_cast<std::uint64_t>(x[1]) << 32);
    magnitude = std::ldexp(static_cast<double>(m), kUnitExponent);
  } else {
    int low = top - 52;
    std::uint64_t mant = 0;
    for (int j = top; j >= low; --j) mant = (mant << 1) | bit(j);
    const bool round = bit(low - 1) != 0;
    bool sticky = false;
    for (int j = low - 2; j >= 0 && !sticky; --j) sticky = bit(j) != 0;
    if (round && (sticky || (mant & 1u))) {
      if (++mant == (std::uint64_t{1} << 53)) {
        mant >>= 1;
        ++low;
      }
    }
    magnitude = std::ldexp(static_cast<double>(mant), low + kUnitExponent);
  }
  return negative ? -magnitude : magnitude;
}

}  // namespace mdds
