#pragma once

#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mdds/error.hpp"
#include "mdds/uuid.hpp"

namespace mdds {

static_assert(std::endian::native == std::endian::little,
              "record layout assumes a little-endian host");

enum class FieldType : std::uint8_t { char_array, int64, uint32, float32, epoch };

std::string_view to_string(FieldType type);
bool is_numeric(FieldType type);

struct FieldSpec {
  std::string name;
  FieldType type = FieldType::int64;
  std::uint32_t array_len = 0;  // char_array only
  std::size_t offset = 0;       // filled in by RecordDescriptor

  std::size_t width() const;
};

// Order-preserving 64-bit keys.
//
// Every numeric kind maps onto an unsigned key whose integer order equals the
// numeric order of the values: signed integers get their sign bit flipped,
// floats use the usual sign-magnitude trick with -0.0 folded onto +0.0. All
// tree ordering, hyperrectangles and range predicates work on keys, so that
// comparisons never branch on the kind in inner loops.
namespace keys {

inline std::uint64_t from_int64(std::int64_t v) {
  return static_cast<std::uint64_t>(v) ^ (std::uint64_t{1} << 63);
}
inline std::int64_t to_int64(std::uint64_t k) {
  return static_cast<std::int64_t>(k ^ (std::uint64_t{1} << 63));
}
inline std::uint64_t from_uint32(std::uint32_t v) { return v; }
inline std::uint32_t to_uint32(std::uint64_t k) { return static_cast<std::uint32_t>(k); }

inline std::uint64_t from_float32(float v) {
  std::uint32_t bits = v == 0.0f ? 0u : std::bit_cast<std::uint32_t>(v);
  bits = (bits & 0x80000000u) ? ~bits : (bits | 0x80000000u);
  return bits;
}
inline float to_float32(std::uint64_t k) {
  auto bits = static_cast<std::uint32_t>(k);
  bits = (bits & 0x80000000u) ? (bits ^ 0x80000000u) : ~bits;
  return std::bit_cast<float>(bits);
}

/// Numeric value of a key, widened to double (exact for float32/uint32).
double to_double(FieldType kind, std::uint64_t key);

}  // namespace keys

/// Location and kind of one indexing dimension inside a record.
struct DimAccessor {
  std::size_t offset = 0;
  FieldType kind = FieldType::int64;

  std::uint64_t key(const std::byte* record) const {
    switch (kind) {
      case FieldType::uint32: {
        std::uint32_t v;
        std::memcpy(&v, record + offset, sizeof v);
        return keys::from_uint32(v);
      }
      case FieldType::float32: {
        float v;
        std::memcpy(&v, record + offset, sizeof v);
        return keys::from_float32(v);
      }
      default: {
        std::int64_t v;
        std::memcpy(&v, record + offset, sizeof v);
        return keys::from_int64(v);
      }
    }
  }
};

/// One indexing-dimension value together with its kind.
class DimValue {
 public:
  DimValue() = default;

  static DimValue of_int64(std::int64_t v) { return {FieldType::int64, keys::from_int64(v)}; }
  static DimValue of_epoch(std::int64_t v) { return {FieldType::epoch, keys::from_int64(v)}; }
  static DimValue of_uint32(std::uint32_t v) { return {FieldType::uint32, keys::from_uint32(v)}; }
  static DimValue of_float32(float v) { return {FieldType::float32, keys::from_float32(v)}; }
  static DimValue from_key(FieldType kind, std::uint64_t key) { return {kind, key}; }

  /// Decodes the little-endian raw field bytes (8-byte zero-extended form).
  static DimValue from_raw(FieldType kind, std::uint64_t raw);

  FieldType kind() const { return kind_; }
  std::uint64_t key() const { return key_; }

  /// Raw field bytes zero-extended to 8, as stored in segment headers.
  std::uint64_t raw() const;
  double to_double() const { return keys::to_double(kind_, key_); }
  std::string to_string() const;

  friend bool operator==(const DimValue&, const DimValue&) = default;

 private:
  DimValue(FieldType kind, std::uint64_t key) : kind_(kind), key_(key) {}

  FieldType kind_ = FieldType::int64;
  std::uint64_t key_ = keys::from_int64(0);
};

/// Total order within one kind; throws type_mismatch across kinds.
std::weak_ordering compare_dim(const DimValue& a, const DimValue& b);

class RecordDescriptor {
 public:
  /// Validates the schema and lays fields out back to back.
  RecordDescriptor(Uuid type_uuid, std::vector<FieldSpec> fields,
                   std::vector<std::string> indexing_dims);

  const Uuid& type_uuid() const { return type_uuid_; }
  std::span<const FieldSpec> fields() const { return fields_; }
  const FieldSpec& field(std::size_t i) const { return fields_.at(i); }
  std::size_t record_size() const { return record_size_; }

  std::size_t dim_count() const { return dims_.size(); }
  std::span<const DimAccessor> dims() const { return dims_; }
  const DimAccessor& dim(std::size_t i) const { return dims_[i]; }
  /// Ordinal (into fields()) of indexing dimension i.
  std::size_t dim_field(std::size_t i) const { return dim_fields_[i]; }
  std::span<const std::size_t> dim_fields() const { return dim_fields_; }

  std::optional<std::size_t> find_field(std::string_view name) const;
  std::optional<std::size_t> find_dim(std::string_view name) const;

  friend bool operator==(const RecordDescriptor&, const RecordDescriptor&);

 private:
  Uuid type_uuid_;
  std::vector<FieldSpec> fields_;
  std::vector<std::size_t> dim_fields_;
  std::vector<DimAccessor> dims_;
  std::size_t record_size_ = 0;
};

bool operator==(const FieldSpec& a, const FieldSpec& b);

/// Parses an XML record descriptor (description/struct/field and
/// description/indexing-dimensions/field). Attribute values may be quoted or
/// bare, as in hand-written descriptors such as `array_len=33`.
RecordDescriptor parse_descriptor(std::string_view xml_text);

/// Decoded value of a single field.
using FieldValue = std::variant<std::string, std::int64_t, std::uint32_t, float>;

std::string format_value(const FieldValue& value);

/// Encodes one CSV row into `out` (exactly record_size bytes). char_array
/// cells are zero-padded or truncated; NaN in an indexing dimension and
/// unparsable or out-of-range numbers are errors.
void encode_csv_row(std::span<const std::string_view> row, const RecordDescriptor& desc,
                    std::span<std::byte> out);
std::vector<std::byte> encode_csv_row(std::span<const std::string_view> row,
                                      const RecordDescriptor& desc);

/// Splits one CSV line on commas. A cell wrapped in double quotes may contain
/// commas; the quotes are stripped. `cells` is reused across calls.
void split_csv_line(std::string_view line, std::vector<std::string_view>& cells);

FieldValue decode_field(std::span<const std::byte> record, const RecordDescriptor& desc,
                        std::size_t field_index);

DimValue extract_dim(std::span<const std::byte> record, const RecordDescriptor& desc,
                     std::size_t dim_index);

/// Throws if any float indexing dimension of any record is NaN.
void check_no_nan_dims(std::span<const std::byte> records, const RecordDescriptor& desc);

}  // namespace mdds
