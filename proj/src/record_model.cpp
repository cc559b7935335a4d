#include "mdds/record_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "xml.hpp"

namespace mdds {

std::string_view to_string(FieldType type) {
  switch (type) {
    case FieldType::char_array: return "char";
    case FieldType::int64: return "int64_t";
    case FieldType::uint32: return "uint32_t";
    case FieldType::float32: return "float";
    case FieldType::epoch: return "epoch_t";
  }
  return "?";
}

bool is_numeric(FieldType type) { return type != FieldType::char_array; }

std::size_t FieldSpec::width() const {
  switch (type) {
    case FieldType::char_array: return array_len;
    case FieldType::int64:
    case FieldType::epoch: return 8;
    case FieldType::uint32:
    case FieldType::float32: return 4;
  }
  return 0;
}

bool operator==(const FieldSpec& a, const FieldSpec& b) {
  return a.name == b.name && a.type == b.type && a.array_len == b.array_len &&
         a.offset == b.offset;
}

double keys::to_double(FieldType kind, std::uint64_t key) {
  switch (kind) {
    case FieldType::uint32: return to_uint32(key);
    case FieldType::float32: return to_float32(key);
    default: return static_cast<double>(to_int64(key));
  }
}

DimValue DimValue::from_raw(FieldType kind, std::uint64_t raw) {
  switch (kind) {
    case FieldType::uint32: return of_uint32(static_cast<std::uint32_t>(raw));
    case FieldType::float32: return of_float32(std::bit_cast<float>(static_cast<std::uint32_t>(raw)));
    case FieldType::int64: return of_int64(static_cast<std::int64_t>(raw));
    case FieldType::epoch: return of_epoch(static_cast<std::int64_t>(raw));
    case FieldType::char_array: break;
  }
  throw Error(ErrorCode::type_mismatch, "char_array is not a dimension kind");
}

std::uint64_t DimValue::raw() const {
  switch (kind_) {
    case FieldType::uint32: return keys::to_uint32(key_);
    case FieldType::float32: return std::bit_cast<std::uint32_t>(keys::to_float32(key_));
    default: return static_cast<std::uint64_t>(keys::to_int64(key_));
  }
}

std::string DimValue::to_string() const {
  switch (kind_) {
    case FieldType::uint32: return std::to_string(keys::to_uint32(key_));
    case FieldType::float32: return format_value(keys::to_float32(key_));
    default: return std::to_string(keys::to_int64(key_));
  }
}

std::weak_ordering compare_dim(const DimValue& a, const DimValue& b) {
  if (a.kind() != b.kind()) {
    throw Error(ErrorCode::type_mismatch, "compare_dim: " + std::string(to_string(a.kind())) +
                                              " vs " + std::string(to_string(b.kind())));
  }
  return a.key() <=> b.key();
}

// ---------------------------------------------------------------------------
// RecordDescriptor

RecordDescriptor::RecordDescriptor(Uuid type_uuid, std::vector<FieldSpec> fields,
                                   std::vector<std::string> indexing_dims)
    : type_uuid_(type_uuid), fields_(std::move(fields)) {
  if (fields_.size() < 2) {
    throw Error(ErrorCode::schema_error, "a record needs at least 2 fields");
  }
  std::unordered_set<std::string> seen;
  std::size_t offset = 0;
  for (auto& f : fields_) {
    if (f.name.empty()) throw Error(ErrorCode::schema_error, "field with empty name");
    if (!seen.insert(f.name).second) {
      throw Error(ErrorCode::schema_error, "duplicate field name '" + f.name + "'");
    }
    if (f.type == FieldType::char_array) {
      if (f.array_len < 1) {
        throw Error(ErrorCode::schema_error, "char field '" + f.name + "' needs array_len >= 1");
      }
    } else if (f.array_len != 0) {
      throw Error(ErrorCode::schema_error, "array_len given for non-char field '" + f.name + "'");
    }
    f.offset = offset;
    offset += f.width();
  }
  record_size_ = offset;

  if (indexing_dims.size() < 2) {
    throw Error(ErrorCode::schema_error, "at least 2 indexing dimensions are required");
  }
  std::unordered_set<std::string> seen_dims;
  for (const auto& name : indexing_dims) {
    if (!seen_dims.insert(name).second) {
      throw Error(ErrorCode::schema_error, "duplicate indexing dimension '" + name + "'");
    }
    auto idx = find_field(name);
    if (!idx) throw Error(ErrorCode::schema_error, "indexing dimension '" + name + "' is not a field");
    const auto& f = fields_[*idx];
    if (!is_numeric(f.type)) {
      throw Error(ErrorCode::schema_error, "indexing dimension '" + name + "' is not numeric");
    }
    dim_fields_.push_back(*idx);
    dims_.push_back(DimAccessor{f.offset, f.type});
  }
}

std::optional<std::size_t> RecordDescriptor::find_field(std::string_view name) const {
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    if (fields_[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> RecordDescriptor::find_dim(std::string_view name) const {
  for (std::size_t i = 0; i < dim_fields_.size(); ++i) {
    if (fields_[dim_fields_[i]].name == name) return i;
  }
  return std::nullopt;
}

bool operator==(const RecordDescriptor& a, const RecordDescriptor& b) {
  return a.type_uuid_ == b.type_uuid_ && a.fields_ == b.fields_ &&
         a.dim_fields_ == b.dim_fields_ && a.record_size_ == b.record_size_;
}

namespace {

FieldType parse_field_type(std::string_view t) {
  if (t == "char") return FieldType::char_array;
  if (t == "int64_t" || t == "int64") return FieldType::int64;
  if (t == "uint32_t" || t == "uint32") return FieldType::uint32;
  if (t == "float" || t == "float32") return FieldType::float32;
  if (t == "epoch_t" || t == "epoch") return FieldType::epoch;
  throw Error(ErrorCode::schema_error, "unknown field type '" + std::string(t) + "'");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

RecordDescriptor parse_descriptor(std::string_view xml_text) {
  auto root = xml::parse(xml_text);
  if (root->name != "description") {
    throw Error(ErrorCode::parse_error, "root element must be <description>, got <" + root->name + ">");
  }
  Uuid type_id{};
  auto typeid_attr = root->attribute("typeid");
  if (!typeid_attr || typeid_attr->empty()) {
    throw Error(ErrorCode::schema_error, "<description> lacks a typeid attribute");
  }
  if (auto parsed = parse_uuid(*typeid_attr)) {
    type_id = *parsed;
  } else {
    type_id = name_uuid(*typeid_attr);
  }

  const auto* record_struct = root->child("struct");
  if (!record_struct) throw Error(ErrorCode::schema_error, "missing <struct>");
  std::vector<FieldSpec> fields;
  for (const auto& el : record_struct->children) {
    if (el->name != "field") {
      throw Error(ErrorCode::schema_error, "unexpected <" + el->name + "> in <struct>");
    }
    FieldSpec f;
    auto name = el->attribute("name");
    auto type = el->attribute("type");
    if (!name || !type) throw Error(ErrorCode::schema_error, "<field> needs name and type");
    f.name = std::string(*name);
    f.type = parse_field_type(*type);
    if (auto len = el->attribute("array_len")) {
      std::uint32_t n = 0;
      auto [p, ec] = std::from_chars(len->data(), len->data() + len->size(), n);
      if (ec != std::errc{} || p != len->data() + len->size()) {
        throw Error(ErrorCode::schema_error, "bad array_len '" + std::string(*len) + "'");
      }
      f.array_len = n;
    } else if (f.type == FieldType::char_array) {
      throw Error(ErrorCode::schema_error, "char field '" + f.name + "' lacks array_len");
    }
    fields.push_back(std::move(f));
  }

  const auto* dims_el = root->child("indexing-dimensions");
  if (!dims_el) throw Error(ErrorCode::schema_error, "missing <indexing-dimensions>");
  std::vector<std::string> dims;
  for (const auto& el : dims_el->children) {
    if (el->name != "field") {
      throw Error(ErrorCode::schema_error, "unexpected <" + el->name + "> in <indexing-dimensions>");
    }
    auto name = el->attribute("name");
    if (!name) throw Error(ErrorCode::schema_error, "indexing <field> needs a name");
    dims.emplace_back(*name);
  }
  return RecordDescriptor(type_id, std::move(fields), std::move(dims));
}

// ---------------------------------------------------------------------------
// Values and CSV encoding

std::string format_value(const FieldValue& value) {
  struct Visitor {
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(std::uint32_t v) const { return std::to_string(v); }
    std::string operator()(float v) const {
      char buf[32];
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
      return std::string(buf, p);
    }
  };
  return std::visit(Visitor{}, value);
}

void split_csv_line(std::string_view line, std::vector<std::string_view>& cells) {
  cells.clear();
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::size_t i = 0;
  for (;;) {
    if (i < line.size() && line[i] == '"') {
      auto close = line.find('"', i + 1);
      if (close == std::string_view::npos) {
        throw Error(ErrorCode::parse_error, "unterminated quoted CSV cell");
      }
      cells.push_back(line.substr(i + 1, close - i - 1));
      i = close + 1;
      if (i < line.size() && line[i] != ',') {
        throw Error(ErrorCode::parse_error, "garbage after quoted CSV cell");
      }
    } else {
      auto comma = line.find(',', i);
      auto end = comma == std::string_view::npos ? line.size() : comma;
      cells.push_back(line.substr(i, end - i));
      i = end;
    }
    if (i >= line.size()) return;
    ++i;  // skip ','
  }
}

namespace {

template <typename T>
T parse_number(std::string_view cell, const FieldSpec& f) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  T value{};
  auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc{} || p != cell.data() + cell.size()) {
    throw Error(ErrorCode::parse_error, "field '" + f.name + "': cannot parse '" +
                                            std::string(cell) + "' as " +
                                            std::string(to_string(f.type)));
  }
  return value;
}

}  // namespace

void encode_csv_row(std::span<const std::string_view> row, const RecordDescriptor& desc,
                    std::span<std::byte> out) {
  const auto fields = desc.fields();
  if (row.size() != fields.size()) {
    throw Error(ErrorCode::parse_error, "CSV row has " + std::to_string(row.size()) +
                                            " cells, descriptor has " +
                                            std::to_string(fields.size()) + " fields");
  }
  if (out.size() != desc.record_size()) {
    throw Error(ErrorCode::invalid_argument, "output buffer is not record_size bytes");
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto& f = fields[i];
    std::byte* dst = out.data() + f.offset;
    switch (f.type) {
      case FieldType::char_array: {
        auto n = std::min<std::size_t>(row[i].size(), f.array_len);
        std::memcpy(dst, row[i].data(), n);
        std::memset(dst + n, 0, f.array_len - n);
        break;
      }
      case FieldType::int64:
      case FieldType::epoch: {
        auto v = parse_number<std::int64_t>(row[i], f);
        std::memcpy(dst, &v, sizeof v);
        break;
      }
      case FieldType::uint32: {
        auto v = parse_number<std::uint32_t>(row[i], f);
        std::memcpy(dst, &v, sizeof v);
        break;
      }
      case FieldType::float32: {
        auto v = parse_number<float>(row[i], f);
        std::memcpy(dst, &v, sizeof v);
        break;
      }
    }
  }
  for (std::size_t d = 0; d < desc.dim_count(); ++d) {
    const auto& acc = desc.dim(d);
    if (acc.kind != FieldType::float32) continue;
    float v;
    std::memcpy(&v, out.data() + acc.offset, sizeof v);
    if (std::isnan(v)) {
      throw Error(ErrorCode::parse_error,
                  "NaN in indexing dimension '" + desc.field(desc.dim_field(d)).name + "'");
    }
  }
}

std::vector<std::byte> encode_csv_row(std::span<const std::string_view> row,
                                      const RecordDescriptor& desc) {
  std::vector<std::byte> out(desc.record_size());
  encode_csv_row(row, desc, out);
  return out;
}

FieldValue decode_field(std::span<const std::byte> record, const RecordDescriptor& desc,
                        std::size_t field_index) {
  if (record.size() != desc.record_size()) {
    throw Error(ErrorCode::invalid_argument, "record is not record_size bytes");
  }
  if (field_index >= desc.fields().size()) {
    throw Error(ErrorCode::out_of_range, "field index " + std::to_string(field_index));
  }
  const auto& f = desc.field(field_index);
  const std::byte* src = record.data() + f.offset;
  switch (f.type) {
    case FieldType::char_array: {
      const char* p = reinterpret_cast<const char*>(src);
      return std::string(p, strnlen(p, f.array_len));
    }
    case FieldType::uint32: {
      std::uint32_t v;
      std::memcpy(&v, src, sizeof v);
      return v;
    }
    case FieldType::float32: {
      float v;
      std::memcpy(&v, src, sizeof v);
      return v;
    }
    default: {
      std::int64_t v;
      std::memcpy(&v, src, sizeof v);
      return v;
    }
  }
}

DimValue extract_dim(std::span<const std::byte> record, const RecordDescriptor& desc,
                     std::size_t dim_index) {
  if (dim_index >= desc.dim_count()) {
    throw Error(ErrorCode::out_of_range, "dimension index " + std::to_string(dim_index) +
                                             " >= " + std::to_string(desc.dim_count()));
  }
  if (record.size() != desc.record_size()) {
    throw Error(ErrorCode::invalid_argument, "record is not record_size bytes");
  }
  const auto& acc = desc.dim(dim_index);
  return DimValue::from_key(acc.kind, acc.key(record.data()));
}

void check_no_nan_dims(std::span<const std::byte> records, const RecordDescriptor& desc) {
  const std::size_t r = desc.record_size();
  for (std::size_t d = 0; d < desc.dim_count(); ++d) {
    const auto& acc = desc.dim(d);
    if (acc.kind != FieldType::float32) continue;
    for (std::size_t off = 0; off + r <= records.size(); off += r) {
      float v;
      std::memcpy(&v, records.data() + off + acc.offset, sizeof v);
      if (std::isnan(v)) {
        throw Error(ErrorCode::invalid_argument,
                    "NaN in indexing dimension '" + desc.field(desc.dim_field(d)).name +
                        "' of record " + std::to_string(off / r));
      }
    }
  }
}

}  // namespace mdds
