#pragma once

// Helpers shared by unit and acceptance tests. The oracles here deliberately
// avoid the library's key encoding and query normalization: they decode
// field values and compare them as plain numbers.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "mdds/query.hpp"
#include "mdds/record_model.hpp"

namespace testing {

inline std::filesystem::path descriptor_path(const std::string& name) {
  return std::filesystem::path(MDDS_DESCRIPTOR_DIR) / name;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::shared_ptr<const mdds::RecordDescriptor> load_descriptor(const std::string& name) {
  return std::make_shared<const mdds::RecordDescriptor>(mdds::parse_descriptor(read_text(descriptor_path(name))));
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mdds-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

  std::size_t count(const std::string& ext) const {
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(path_)) n += e.path().extension() == ext;
    return n;
  }

 private:
  std::filesystem::path path_;
};

// Plain numeric value of a field, read straight from the record bytes.
inline long double field_number(const std::byte* rec, const mdds::FieldSpec& f) {
  switch (f.type) {
    case mdds::FieldType::float32: {
      float v;
      std::memcpy(&v, rec + f.offset, 4);
      return v;
    }
    case mdds::FieldType::uint32: {
      std::uint32_t v;
      std::memcpy(&v, rec + f.offset, 4);
      return v;
    }
    case mdds::FieldType::int64:
    case mdds::FieldType::epoch: {
      std::int64_t v;
      std::memcpy(&v, rec + f.offset, 8);
      return static_cast<long double>(v);
    }
    case mdds::FieldType::char_array: break;
  }
  return NAN;
}

// One predicate as an oracle sees it: field, operator and the literal value.
struct OraclePredicate {
  std::size_t field;
  long double lo = -INFINITY, hi = INFINITY;
  bool lo_inclusive = true, hi_inclusive = true;

  bool holds(long double v) const {
    if (lo_inclusive ? v < lo : v <= lo) return false;
    if (hi_inclusive ? v > hi : v >= hi) return false;
    return true;
  }
};

// A randomly drawn conjunctive query kept in two forms: DSL text for the
// engine and literal predicates for the oracle. Literal values are printed
// with enough digits that text and value denote the same number.
struct GeneratedQuery {
  std::string where;  // "" or " where ..."
  std::vector<OraclePredicate> predicates;

  bool matches(const std::byte* rec, const mdds::RecordDescriptor& desc) const {
    for (const auto& p : predicates) {
      if (!p.holds(field_number(rec, desc.field(p.field)))) return false;
    }
    return true;
  }
};

inline std::string literal_text(long double v, bool integral) {
  std::ostringstream os;
  if (integral) {
    os << static_cast<long long>(v);
  } else {
    os.precision(6);
    os << std::fixed << static_cast<double>(v);
  }
  return os.str();
}

// Value range of the data on one field, used to aim query bounds.
struct Span {
  long double lo, hi;
};

inline Span data_span(std::span<const std::byte> records, const mdds::RecordDescriptor& desc, std::size_t field) {
  Span s{INFINITY, -INFINITY};
  const std::size_t rs = desc.record_size();
  for (std::size_t off = 0; off < records.size(); off += rs) {
    const long double v = field_number(records.data() + off, desc.field(field));
    s.lo = std::min(s.lo, v);
    s.hi = std::max(s.hi, v);
  }
  return s;
}

// Draws 1..3 conditions over random indexing dimensions. `width` is the
// fraction of each dimension's span covered by a two-sided range.
inline GeneratedQuery random_query(std::mt19937_64& rng, const mdds::RecordDescriptor& desc,
                                   const std::vector<Span>& spans, double width) {
  GeneratedQuery q;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const std::size_t nconds = 1 + rng() % 3;
  std::vector<std::size_t> dims(desc.dim_count());
  for (std::size_t i = 0; i < dims.size(); ++i) dims[i] = i;
  std::shuffle(dims.begin(), dims.end(), rng);
  std::vector<std::string> conds;
  for (std::size_t c = 0; c < nconds && c < dims.size(); ++c) {
    const std::size_t field = desc.dim_field(dims[c]);
    const auto& f = desc.field(field);
    const bool integral = f.type != mdds::FieldType::float32;
    const Span s = spans[dims[c]];
    const long double extent = s.hi - s.lo;
    auto pick = [&](long double at) {
      const std::string t = literal_text(at, integral);
      return std::pair{t, integral ? std::stold(t) : static_cast<long double>(std::stod(t))};
    };
    OraclePredicate p;
    p.field = field;
    const int shape = static_cast<int>(rng() % 6);
    if (shape <= 2) {
      const long double a = s.lo + extent * (u01(rng) * (1.0 - width));
      auto [lt, lv] = pick(a);
      auto [ht, hv] = pick(a + extent * width);
      const bool li = shape != 1, hi = shape != 2;
      p.lo = lv;
      p.hi = hv;
      p.lo_inclusive = li;
      p.hi_inclusive = hi;
      conds.push_back(f.name + " in " + (li ? "[" : "(") + lt + ", " + ht + (hi ? "]" : ")"));
    } else {
      auto [t, v] = pick(s.lo + extent * u01(rng));
      static const char* ops[] = {">=", "<=", ">", "<"};
      const int op = static_cast<int>(rng() % 4);
      if (op == 0 || op == 2) {
        p.lo = v;
        p.lo_inclusive = op == 0;
      } else {
        p.hi = v;
        p.hi_inclusive = op == 1;
      }
      conds.push_back(f.name + " " + ops[op] + " " + t);
    }
    q.predicates.push_back(p);
  }
  for (std::size_t i = 0; i < conds.size(); ++i) q.where += (i ? " and " : " where ") + conds[i];
  return q;
}

// Byte images of all matching records, sorted: a multiset fingerprint.
inline std::vector<std::string> matching_images(std::span<const std::byte> records, const mdds::RecordDescriptor& desc,
                                                const GeneratedQuery& q) {
  std::vector<std::string> out;
  const std::size_t rs = desc.record_size();
  for (std::size_t off = 0; off < records.size(); off += rs) {
    const std::byte* rec = records.data() + off;
    if (q.matches(rec, desc)) out.emplace_back(reinterpret_cast<const char*>(rec), rs);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::string> all_images(std::span<const std::byte> records, std::size_t rs) {
  std::vector<std::string> out;
  for (std::size_t off = 0; off < records.size(); off += rs) {
    out.emplace_back(reinterpret_cast<const char*>(records.data() + off), rs);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace testing
