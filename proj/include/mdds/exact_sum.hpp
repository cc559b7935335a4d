#pragma once

#include <array>
#include <cstdint>

namespace mdds {

/// Order-independent exact accumulator for float32 and integer values.
///
/// Every float32 and every int64 is an integer multiple of 2^-149, so the sum
/// is kept as a fixed-point integer in units of 2^-149, spread over 32-bit
/// limbs stored in int64 words (carry-save; carries are propagated lazily).
/// value() rounds the exact sum to the nearest double, ties to even, so the
/// result does not depend on the order in which values were added.
class ExactSum {
 public:
  void add(float v);
  void add(std::int64_t v);
  void add(std::uint32_t v) { add(static_cast<std::int64_t>(v)); }
  void add(const ExactSum& other);

  /// Correctly rounded sum. NaN if a NaN (or both infinities) was added.
  double value() const;

 private:
  static constexpr int kLimbs = 12;  // 384 bits: 2^-149 .. 2^234
  static constexpr int kUnitExponent = -149;

  void add_magnitude(std::uint64_t mag, int shift, bool negative);
  void normalize();

  std::array<std::int64_t, kLimbs> limbs_{};
  std::uint32_t pending_ = 0;  // additions since the last normalize
  bool nan_ = false;
  bool pos_inf_ = false;
  bool neg_inf_ = false;
};

}  // namespace mdds
