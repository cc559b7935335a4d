#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mdds/record_model.hpp"

namespace mdds {

/// Axis-aligned box in key space; interval [lo[d], hi[d]] is closed on both
/// ends. The dimension kinds live with whoever owns the box (descriptor or
/// index), so the box itself is just two key vectors.
struct Hyperrectangle {
  std::vector<std::uint64_t> lo;
  std::vector<std::uint64_t> hi;

  Hyperrectangle() = default;
  explicit Hyperrectangle(std::size_t dims)
      : lo(dims, std::numeric_limits<std::uint64_t>::max()), hi(dims, 0) {}

  /// A box covering the whole key domain in every dimension.
  static Hyperrectangle unbounded(std::size_t dims) {
    Hyperrectangle r;
    r.lo.assign(dims, 0);
    r.hi.assign(dims, std::numeric_limits<std::uint64_t>::max());
    return r;
  }

  std::size_t dims() const { return lo.size(); }

  /// True when no point has been accumulated yet (lo > hi somewhere).
  bool empty() const {
    for (std::size_t d = 0; d < lo.size(); ++d) {
      if (lo[d] > hi[d]) return true;
    }
    return lo.empty();
  }

  void expand(std::size_t d, std::uint64_t key) {
    if (key < lo[d]) lo[d] = key;
    if (key > hi[d]) hi[d] = key;
  }

  void expand(const Hyperrectangle& other) {
    for (std::size_t d = 0; d < lo.size(); ++d) {
      if (other.lo[d] < lo[d]) lo[d] = other.lo[d];
      if (other.hi[d] > hi[d]) hi[d] = other.hi[d];
    }
  }

  void expand_record(const std::byte* record, std::span<const DimAccessor> dims) {
    for (std::size_t d = 0; d < dims.size(); ++d) expand(d, dims[d].key(record));
  }

  bool intersects(const Hyperrectangle& other) const {
    for (std::size_t d = 0; d < lo.size(); ++d) {
      if (other.hi[d] < lo[d] || hi[d] < other.lo[d]) return false;
    }
    return true;
  }

  bool contains(const Hyperrectangle& other) const {
    for (std::size_t d = 0; d < lo.size(); ++d) {
      if (other.lo[d] < lo[d] || other.hi[d] > hi[d]) return false;
    }
    return true;
  }

  bool contains_record(const std::byte* record, std::span<const DimAccessor> dims) const {
    for (std::size_t d = 0; d < dims.size(); ++d) {
      auto k = dims[d].key(record);
      if (k < lo[d] || k > hi[d]) return false;
    }
    return true;
  }

  DimValue min_value(std::size_t d, FieldType kind) const { return DimValue::from_key(kind, lo[d]); }
  DimValue max_value(std::size_t d, FieldType kind) const { return DimValue::from_key(kind, hi[d]); }

  friend bool operator==(const Hyperrectangle&, const Hyperrectangle&) = default;
};

/// Bounding box of a set of records (exact per-dimension min/max).
Hyperrectangle bounding_box(std::span<const std::byte* const> records,
                            std::span<const DimAccessor> dims);

}  // namespace mdds
