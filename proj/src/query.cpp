#include "mdds/query.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include <boost/asio/post.hpp>
#include <boost/asio/thread_pool.hpp>
#include "json.hpp"

#include "mdds/exact_sum.hpp"

namespace mdds {

std::string_view to_string(IteratorKind kind) {
  return kind == IteratorKind::kdtree ? "kd" : "seq";
}

IteratorKind parse_iterator_kind(std::string_view text) {
  if (text == "kd" || text == "kdtree") return IteratorKind::kdtree;
  if (text == "seq" || text == "sequential") return IteratorKind::sequential;
  throw Error(ErrorCode::invalid_argument, "unknown iterator kind '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Bound normalization

namespace {

using i128 = __int128;

// Smallest key whose value satisfies `v >= x` (inclusive) or `v > x`;
// nullopt if no value of the kind does.
std::optional<std::uint64_t> integer_lower(const Literal& lit, bool inclusive, i128 min, i128 max,
                                           FieldType kind) {
  i128 v;
  if (lit.is_integer) {
    v = static_cast<i128>(lit.integer) + (inclusive ? 0 : 1);
  } else {
    const long double x = lit.real;
    const long double c = inclusive ? std::ceil(x) : std::floor(x) + 1;
    if (c > static_cast<long double>(max)) return std::nullopt;
    if (c < static_cast<long double>(min)) return min == 0 ? keys::from_uint32(0) : keys::from_int64(INT64_MIN);
    v = static_cast<i128>(c);
  }
  if (v > max) return std::nullopt;
  if (v < min) v = min;
  return kind == FieldType::uint32 ? keys::from_uint32(static_cast<std::uint32_t>(v))
                                   : keys::from_int64(static_cast<std::int64_t>(v));
}

std::optional<std::uint64_t> integer_upper(const Literal& lit, bool inclusive, i128 min, i128 max,
                                           FieldType kind) {
  i128 v;
  if (lit.is_integer) {
    v = static_cast<i128>(lit.integer) - (inclusive ? 0 : 1);
  } else {
    const long double x = lit.real;
    const long double f = inclusive ? std::floor(x) : std::ceil(x) - 1;
    if (f < static_cast<long double>(min)) return std::nullopt;
    if (f > static_cast<long double>(max)) {
      return max == UINT32_MAX ? keys::from_uint32(UINT32_MAX) : keys::from_int64(INT64_MAX);
    }
    v = static_cast<i128>(f);
  }
  if (v < min) return std::nullopt;
  if (v > max) v = max;
  return kind == FieldType::uint32 ? keys::from_uint32(static_cast<std::uint32_t>(v))
                                   : keys::from_int64(static_cast<std::int64_t>(v));
}

constexpr float kInf = std::numeric_limits<float>::infinity();

std::optional<std::uint64_t> float_lower(const Literal& lit, bool inclusive) {
  const long double x = lit.value();
  auto ok = [&](float f) { return inclusive ? static_cast<long double>(f) >= x : static_cast<long double>(f) > x; };
  float f = static_cast<float>(x);
  while (!ok(f)) {
    if (f == kInf) return std::nullopt;
    f = std::nextafter(f, kInf);
  }
  for (float g = std::nextafter(f, -kInf); g != f && ok(g); g = std::nextafter(f, -kInf)) f = g;
  return keys::from_float32(f);
}

std::optional<std::uint64_t> float_upper(const Literal& lit, bool inclusive) {
  const long double x = lit.value();
  auto ok = [&](float f) { return inclusive ? static_cast<long double>(f) <= x : static_cast<long double>(f) < x; };
  float f = static_cast<float>(x);
  while (!ok(f)) {
    if (f == -kInf) return std::nullopt;
    f = std::nextafter(f, -kInf);
  }
  for (float g = std::nextafter(f, kInf); g != f && ok(g); g = std::nextafter(f, kInf)) f = g;
  return keys::from_float32(f);
}

std::optional<std::uint64_t> lower_key(FieldType kind, const Literal& lit, bool inclusive) {
  switch (kind) {
    case FieldType::float32: return float_lower(lit, inclusive);
    case FieldType::uint32: return integer_lower(lit, inclusive, 0, UINT32_MAX, kind);
    default: return integer_lower(lit, inclusive, INT64_MIN, INT64_MAX, kind);
  }
}

std::optional<std::uint64_t> upper_key(FieldType kind, const Literal& lit, bool inclusive) {
  switch (kind) {
    case FieldType::float32: return float_upper(lit, inclusive);
    case FieldType::uint32: return integer_upper(lit, inclusive, 0, UINT32_MAX, kind);
    default: return integer_upper(lit, inclusive, INT64_MIN, INT64_MAX, kind);
  }
}

// ---------------------------------------------------------------------------
// Lexer

enum class Tok { ident, number, punct, end };

struct Token {
  Tok kind = Tok::end;
  std::string_view text;
  std::size_t pos = 0;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
bool digit(char c) { return c >= '0' && c <= '9'; }

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (ident_start(c)) {
      while (i < s.size() && ident_char(s[i])) ++i;
      out.push_back({Tok::ident, s.substr(start, i - start), start});
      continue;
    }
    const bool sign = (c == '-' || c == '+') && i + 1 < s.size() && (digit(s[i + 1]) || s[i + 1] == '.');
    if (digit(c) || sign || (c == '.' && i + 1 < s.size() && digit(s[i + 1]))) {
      if (sign) ++i;
      while (i < s.size() && (digit(s[i]) || s[i] == '.')) ++i;
      if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < s.size() && (s[j] == '+' || s[j] == '-')) ++j;
        if (j < s.size() && digit(s[j])) {
          i = j;
          while (i < s.size() && digit(s[i])) ++i;
        }
      }
      out.push_back({Tok::number, s.substr(start, i - start), start});
      continue;
    }
    if ((c == '>' || c == '<') && i + 1 < s.size() && s[i + 1] == '=') {
      out.push_back({Tok::punct, s.substr(start, 2), start});
      i += 2;
      continue;
    }
    if (std::string_view("()[],*/=<>").find(c) != std::string_view::npos) {
      out.push_back({Tok::punct, s.substr(start, 1), start});
      ++i;
      continue;
    }
    throw ParseError(start, std::string("unexpected character '") + c + "'");
  }
  out.push_back({Tok::end, {}, s.size()});
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

Literal parse_literal(const Token& t) {
  Literal lit;
  lit.text = std::string(t.text);
  std::string_view s = t.text;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const bool integral = s.find_first_of(".eE") == std::string_view::npos;
  if (integral) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), lit.integer);
    if (ec == std::errc() && p == s.data() + s.size()) {
      lit.is_integer = true;
      lit.real = static_cast<double>(lit.integer);
      return lit;
    }
  }
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), lit.real);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(lit.real)) {
    throw ParseError(t.pos, "invalid number '" + lit.text + "'");
  }
  return lit;
}

class Parser {
 public:
  Parser(std::string_view text, const RecordDescriptor& desc) : toks_(tokenize(text)), desc_(desc) {}

  RangeQuery run() {
    q_.ranges.resize(desc_.dim_count());
    keyword("select");
    select_clause();
    if (keyword("where")) {
      condition();
      while (keyword("and")) condition();
    }
    if (keyword("order")) {
      expect_keyword("by");
      OrderBy ob;
      ob.field = field(peek());
      ++i_;
      if (keyword("desc")) {
        ob.descending = true;
      } else {
        keyword("asc");
      }
      if (q_.aggregate != Aggregate::none) throw ParseError(peek().pos, "order by requires a non-aggregate query");
      if (q_.distinct && std::find(q_.projection.begin(), q_.projection.end(), ob.field) == q_.projection.end()) {
        throw ParseError(peek().pos, "order by field must be selected when using distinct");
      }
      q_.order_by = ob;
    }
    if (keyword("limit")) {
      const Token& t = peek();
      if (q_.aggregate != Aggregate::none) throw ParseError(t.pos, "limit requires a non-aggregate query");
      std::uint64_t n = 0;
      auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), n);
      if (t.kind != Tok::number || ec != std::errc() || p != t.text.data() + t.text.size()) {
        throw ParseError(t.pos, "expected a non-negative integer after limit");
      }
      q_.limit = n;
      ++i_;
    }
    if (peek().kind != Tok::end) throw ParseError(peek().pos, "unexpected '" + std::string(peek().text) + "'");
    for (const auto& r : q_.ranges) {
      if (r.lo_key > r.hi_key) q_.unsatisfiable = true;
    }
    return std::move(q_);
  }

 private:
  const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(i_ + ahead, toks_.size() - 1)]; }

  bool keyword(std::string_view kw) {
    if (peek().kind == Tok::ident && iequals(peek().text, kw)) {
      ++i_;
      return true;
    }
    return false;
  }
  void expect_keyword(std::string_view kw) {
    if (!keyword(kw)) throw ParseError(peek().pos, "expected '" + std::string(kw) + "'");
  }
  bool punct(std::string_view p) {
    if (peek().kind == Tok::punct && peek().text == p) {
      ++i_;
      return true;
    }
    return false;
  }
  void expect(std::string_view p) {
    if (!punct(p)) throw ParseError(peek().pos, "expected '" + std::string(p) + "'");
  }

  std::size_t field(const Token& t) const {
    if (t.kind != Tok::ident) throw ParseError(t.pos, "expected a field name");
    auto f = desc_.find_field(t.text);
    if (!f) throw ParseError(t.pos, "unknown field '" + std::string(t.text) + "'");
    return *f;
  }

  Literal number() {
    const Token& t = peek();
    if (t.kind != Tok::number) throw ParseError(t.pos, "expected a number");
    ++i_;
    return parse_literal(t);
  }

  void select_clause() {
    const Token& t = peek();
    if (t.kind == Tok::ident && peek(1).kind == Tok::punct && peek(1).text == "(") {
      if (iequals(t.text, "count")) {
        i_ += 2;
        expect("*");
        expect(")");
        q_.aggregate = Aggregate::count_all;
      } else if (iequals(t.text, "avg") || iequals(t.text, "min") || iequals(t.text, "max")) {
        q_.aggregate = iequals(t.text, "avg") ? Aggregate::avg
                       : iequals(t.text, "min") ? Aggregate::min
                                                : Aggregate::max;
        i_ += 2;
        const Token& ft = peek();
        const std::size_t f = field(ft);
        if (!is_numeric(desc_.field(f).type)) {
          throw ParseError(ft.pos, "aggregate over non-numeric field '" + std::string(ft.text) + "'");
        }
        q_.aggregate_field = f;
        ++i_;
        expect(")");
      } else {
        throw ParseError(t.pos, "unknown aggregate '" + std::string(t.text) + "'");
      }
      if (punct("/")) {
        const Token& st = peek();
        Literal s = number();
        if (s.real == 0.0) throw ParseError(st.pos, "division by zero");
        q_.scale = s.real;
      }
      return;
    }
    if (keyword("distinct")) q_.distinct = true;
    if (punct("*")) {
      for (std::size_t f = 0; f < desc_.fields().size(); ++f) q_.projection.push_back(f);
      return;
    }
    q_.projection.push_back(field(peek()));
    ++i_;
    while (punct(",")) {
      q_.projection.push_back(field(peek()));
      ++i_;
    }
  }

  std::size_t dim_of(const Token& t) const {
    const std::size_t f = field(t);
    for (std::size_t d = 0; d < desc_.dim_count(); ++d) {
      if (desc_.dim_field(d) == f) return d;
    }
    throw ParseError(t.pos, "bound on non-indexing field '" + std::string(t.text) + "'");
  }

  void condition() {
    const Token& ft = peek();
    const std::size_t d = dim_of(ft);
    ++i_;
    if (keyword("in")) {
      const Token& open = peek();
      bool lo_inc;
      if (punct("[")) {
        lo_inc = true;
      } else if (punct("(")) {
        lo_inc = false;
      } else {
        throw ParseError(open.pos, "expected '[' or '('");
      }
      Literal lo = number();
      expect(",");
      Literal hi = number();
      bool hi_inc;
      if (punct("]")) {
        hi_inc = true;
      } else if (punct(")")) {
        hi_inc = false;
      } else {
        throw ParseError(peek().pos, "expected ']' or ')'");
      }
      if (lo.value() > hi.value()) throw ParseError(open.pos, "low bound exceeds high bound");
      apply_low(d, {lo, lo_inc}, ft.pos);
      apply_high(d, {hi, hi_inc}, ft.pos);
      return;
    }
    const Token& op = peek();
    if (op.kind != Tok::punct) throw ParseError(op.pos, "expected a comparison");
    ++i_;
    Literal v = number();
    if (op.text == "=") {
      apply_low(d, {v, true}, ft.pos);
      apply_high(d, {v, true}, ft.pos);
    } else if (op.text == ">=" || op.text == ">") {
      apply_low(d, {v, op.text == ">="}, ft.pos);
    } else if (op.text == "<=" || op.text == "<") {
      apply_high(d, {v, op.text == "<="}, ft.pos);
    } else {
      throw ParseError(op.pos, "expected a comparison");
    }
  }

  void check_cross(const DimRange& r, std::size_t pos) const {
    if (r.low && r.high && r.low->literal.value() > r.high->literal.value()) {
      throw ParseError(pos, "low bound exceeds high bound");
    }
  }

  void apply_low(std::size_t d, Bound b, std::size_t pos) {
    auto& r = q_.ranges[d];
    auto key = lower_key(desc_.dim(d).kind, b.literal, b.inclusive);
    const std::uint64_t k = key ? *key : ~std::uint64_t{0};
    if (!key) q_.unsatisfiable = true;
    if (!r.low || k > r.lo_key) {
      r.low = std::move(b);
      r.lo_key = std::max(r.lo_key, k);
    }
    check_cross(r, pos);
  }

  void apply_high(std::size_t d, Bound b, std::size_t pos) {
    auto& r = q_.ranges[d];
    auto key = upper_key(desc_.dim(d).kind, b.literal, b.inclusive);
    const std::uint64_t k = key ? *key : 0;
    if (!key) q_.unsatisfiable = true;
    if (!r.high || k < r.hi_key) {
      r.high = std::move(b);
      r.hi_key = std::min(r.hi_key, k);
    }
    check_cross(r, pos);
  }

  std::vector<Token> toks_;
  std::size_t i_ = 0;
  const RecordDescriptor& desc_;
  RangeQuery q_;
};

}  // namespace

RangeQuery parse_query(std::string_view text, const RecordDescriptor& desc) {
  Parser p(text, desc);
  return p.run();
}

Hyperrectangle RangeQuery::rect() const {
  Hyperrectangle r = Hyperrectangle::unbounded(ranges.size());
  for (std::size_t d = 0; d < ranges.size(); ++d) {
    r.lo[d] = ranges[d].lo_key;
    r.hi[d] = ranges[d].hi_key;
  }
  return r;
}

bool RangeQuery::matches(const std::byte* record, std::span<const DimAccessor> dims) const {
  if (unsatisfiable) return false;
  for (std::size_t d = 0; d < dims.size(); ++d) {
    const auto k = dims[d].key(record);
    if (k < ranges[d].lo_key || k > ranges[d].hi_key) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Iterators

RecordIterator::RecordIterator(const DataSegment& seg, std::span<const DimAccessor> dims,
                               const Hyperrectangle& rect, IteratorKind kind)
    : seg_(&seg), dims_(dims), rect_(&rect), kind_(kind) {
  if (kind_ == IteratorKind::kdtree && seg.record_count() > 0 && seg.bounds.intersects(rect)) {
    stack_.emplace_back(0, 0);
  }
}

const std::byte* RecordIterator::next() {
  return kind_ == IteratorKind::kdtree ? next_kd() : next_seq();
}

const std::byte* RecordIterator::next_kd() {
  const auto& nodes = seg_->nodes;
  const std::size_t count = nodes.size();
  const std::size_t dims = dims_.size();
  while (!stack_.empty()) {
    const auto [n, level] = stack_.back();
    stack_.pop_back();
    if (n < 0 || static_cast<std::size_t>(n) >= count || ++visited_ > count) {
      throw Error(ErrorCode::corrupt_segment, "kd-tree traversal left the node array or revisited a node");
    }
    const PackedKdNode& node = nodes[static_cast<std::size_t>(n)];
    if (node.record_pos + seg_->record_size > seg_->records.size()) {
      throw Error(ErrorCode::corrupt_segment, "record position out of range");
    }
    const std::byte* rec = seg_->record_at(node.record_pos);
    const std::size_t d = level_dim(seg_->initial_dimension, level, dims);
    const std::uint64_t v = dims_[d].key(rec);
    // Left subtree holds values <= v, right subtree values > v.
    if (node.right != kNilChild && rect_->hi[d] > v) stack_.emplace_back(node.right, level + 1);
    if (node.left != kNilChild && rect_->lo[d] <= v) stack_.emplace_back(node.left, level + 1);
    if (rect_->contains_record(rec, dims_)) return rec;
  }
  return nullptr;
}

const std::byte* RecordIterator::next_seq() {
  const std::size_t count = seg_->record_count();
  while (pos_ < count) {
    const std::byte* rec = seg_->record(pos_++);
    ++visited_;
    if (rect_->contains_record(rec, dims_)) return rec;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Cursor

Cursor::Cursor(SegmentSource& source, const RangeQuery& q, IteratorKind kind)
    : source_(&source), dims_(source.descriptor().dims()), rect_(q.rect()), kind_(kind) {
  if (!q.unsatisfiable) refs_ = source.search(rect_);
}

Cursor::~Cursor() {
  try {
    close_current();
  } catch (...) {
  }
}

void Cursor::close_current() {
  if (!current_) return;
  visited_done_ += iter_->visited();
  iter_.reset();
  auto ref = std::move(current_);
  current_.reset();
  source_->unpin(ref);
}

const std::byte* Cursor::next() {
  for (;;) {
    if (iter_) {
      if (const std::byte* r = iter_->next()) return r;
      close_current();
    }
    if (next_ref_ == refs_.size()) return nullptr;
    const SegmentRefPtr& ref = refs_[next_ref_++];
    const DataSegment* seg = source_->pin(ref);
    current_ = ref;
    iter_.emplace(*seg, dims_, rect_, kind_);
  }
}

std::uint64_t Cursor::records_visited() const {
  return visited_done_ + (iter_ ? iter_->visited() : 0);
}

Cursor open_cursor(SegmentSource& source, const RangeQuery& q, IteratorKind kind) {
  return Cursor(source, q, kind);
}

// ---------------------------------------------------------------------------
// Execution

namespace {

Cell to_cell(const FieldValue& v) {
  return std::visit([](const auto& x) -> Cell { return x; }, v);
}

Cell numeric_cell(const std::byte* rec, const FieldSpec& f) {
  switch (f.type) {
    case FieldType::uint32: {
      std::uint32_t v;
      std::memcpy(&v, rec + f.offset, sizeof v);
      return v;
    }
    case FieldType::float32: {
      float v;
      std::memcpy(&v, rec + f.offset, sizeof v);
      return v;
    }
    default: {
      std::int64_t v;
      std::memcpy(&v, rec + f.offset, sizeof v);
      return v;
    }
  }
}

double cell_to_double(const Cell& c) {
  return std::visit(
      [](const auto& x) -> double {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::monostate> || std::is_same_v<T, std::string>) {
          return std::numeric_limits<double>::quiet_NaN();
        } else {
          return static_cast<double>(x);
        }
      },
      c);
}

bool is_nan_cell(const Cell& c) {
  const float* f = std::get_if<float>(&c);
  return f && std::isnan(*f);
}

// Strict weak order on cells of one column: NaN sorts after every number
// and equals itself.
bool cell_less(const Cell& a, const Cell& b) {
  const float* fa = std::get_if<float>(&a);
  const float* fb = std::get_if<float>(&b);
  if (fa && fb && (std::isnan(*fa) || std::isnan(*fb))) return !std::isnan(*fa);
  return a < b;
}

bool cell_equal(const Cell& a, const Cell& b) { return !cell_less(a, b) && !cell_less(b, a); }

bool tuple_less(const std::vector<Cell>& a, const std::vector<Cell>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), cell_less);
}

bool tuple_equal(const std::vector<Cell>& a, const std::vector<Cell>& b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end(), cell_equal);
}

std::string aggregate_column(const RangeQuery& q, const RecordDescriptor& desc, const std::string& scale_text) {
  std::string name;
  switch (q.aggregate) {
    case Aggregate::count_all: name = "count(*)"; break;
    case Aggregate::avg: name = "avg(" + desc.field(*q.aggregate_field).name + ")"; break;
    case Aggregate::min: name = "min(" + desc.field(*q.aggregate_field).name + ")"; break;
    case Aggregate::max: name = "max(" + desc.field(*q.aggregate_field).name + ")"; break;
    case Aggregate::none: break;
  }
  if (q.scale) name += "/" + scale_text;
  return name;
}

std::string shortest(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

std::string format_cell(const Cell& c) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return "";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return x;
        } else if constexpr (std::is_same_v<T, float> || std::is_same_v<T, double>) {
          char buf[64];
          auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
          return std::string(buf, p);
        } else {
          return std::to_string(x);
        }
      },
      c);
}

QueryResult execute(SegmentSource& source, const RangeQuery& q, IteratorKind kind) {
  const RecordDescriptor& desc = source.descriptor();
  QueryResult res;
  Cursor cursor(source, q, kind);

  if (q.aggregate != Aggregate::none) {
    res.columns.push_back(aggregate_column(q, desc, q.scale ? shortest(*q.scale) : std::string()));
    std::uint64_t matched = 0;
    ExactSum sum;
    Cell best;
    const FieldSpec* f = q.aggregate_field ? &desc.field(*q.aggregate_field) : nullptr;
    while (const std::byte* rec = cursor.next()) {
      ++matched;
      if (q.aggregate == Aggregate::count_all) continue;
      Cell v = numeric_cell(rec, *f);
      if (q.aggregate == Aggregate::avg) {
        std::visit(
            [&](const auto& x) {
              using T = std::decay_t<decltype(x)>;
              if constexpr (std::is_same_v<T, std::int64_t> || std::is_same_v<T, std::uint32_t> ||
                            std::is_same_v<T, float>) {
                sum.add(x);
              }
            },
            v);
        continue;
      }
      if (is_nan_cell(v)) continue;
      if (std::holds_alternative<std::monostate>(best) ||
          (q.aggregate == Aggregate::min ? v < best : best < v)) {
        best = std::move(v);
      }
    }
    res.records_matched = matched;
    std::optional<Cell> out;
    switch (q.aggregate) {
      case Aggregate::count_all: out = static_cast<std::int64_t>(matched); break;
      case Aggregate::avg:
        if (matched > 0) out = sum.value() / static_cast<double>(matched);
        break;
      default:
        if (!std::holds_alternative<std::monostate>(best)) out = best;
        break;
    }
    if (out && q.scale) out = cell_to_double(*out) / *q.scale;
    if (out) res.rows.push_back({*out});
  } else {
    for (std::size_t f : q.projection) res.columns.push_back(desc.field(f).name);
    const bool early_stop = q.limit && !q.distinct && !q.order_by;
    struct Row {
      Cell key;
      std::vector<Cell> cells;
    };
    std::vector<Row> rows;
    if (!(early_stop && *q.limit == 0)) {
      while (const std::byte* rec = cursor.next()) {
        ++res.records_matched;
        Row row;
        std::span<const std::byte> bytes(rec, desc.record_size());
        row.cells.reserve(q.projection.size());
        for (std::size_t f : q.projection) row.cells.push_back(to_cell(decode_field(bytes, desc, f)));
        if (q.order_by) row.key = to_cell(decode_field(bytes, desc, q.order_by->field));
        rows.push_back(std::move(row));
        if (early_stop && rows.size() >= *q.limit) break;
      }
    }
    if (q.distinct) {
      std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return tuple_less(a.cells, b.cells); });
      rows.erase(std::unique(rows.begin(), rows.end(),
                             [](const Row& a, const Row& b) { return tuple_equal(a.cells, b.cells); }),
                 rows.end());
    }
    if (q.order_by) {
      // Ties are broken by the projected tuple so that limit is deterministic.
      const bool desc_order = q.order_by->descending;
      std::sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
        if (!cell_equal(a.key, b.key)) return desc_order ? cell_less(b.key, a.key) : cell_less(a.key, b.key);
        return tuple_less(a.cells, b.cells);
      });
    }
    if (q.limit && rows.size() > *q.limit) rows.resize(*q.limit);
    res.rows.reserve(rows.size());
    for (auto& r : rows) res.rows.push_back(std::move(r.cells));
  }
  res.segments_inspected = cursor.segments_listed();
  res.records_visited = cursor.records_visited();
  return res;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string format_csv(const QueryResult& r) {
  std::string out;
  for (const auto& c : r.columns) out += csv_escape(c) + ",";
  out += "segments_inspected,records_visited\n";
  const std::string counters = std::to_string(r.segments_inspected) + "," + std::to_string(r.records_visited) + "\n";
  if (r.rows.empty()) {
    out += std::string(r.columns.size(), ',') + counters;
    return out;
  }
  for (const auto& row : r.rows) {
    for (const auto& c : row) out += csv_escape(format_cell(c)) + ",";
    out += counters;
  }
  return out;
}

std::string format_json(const QueryResult& r) {
  nlohmann::json j;
  j["columns"] = r.columns;
  auto rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    auto jr = nlohmann::json::array();
    for (const auto& c : row) {
      std::visit(
          [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
              jr.push_back(nullptr);
            } else if constexpr (std::is_same_v<T, float>) {
              // Via the shortest decimal form, so 40.76f prints as 40.76.
              jr.push_back(std::isfinite(x) ? nlohmann::json(std::stod(format_cell(c))) : nlohmann::json(nullptr));
            } else if constexpr (std::is_same_v<T, double>) {
              jr.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
            } else {
              jr.push_back(x);
            }
          },
          c);
    }
    rows.push_back(std::move(jr));
  }
  j["rows"] = std::move(rows);
  j["segments_inspected"] = r.segments_inspected;
  j["records_visited"] = r.records_visited;
  j["records_matched"] = r.records_matched;
  return j.dump();
}

// ---------------------------------------------------------------------------

struct QueryPool::Impl {
  explicit Impl(std::size_t threads) : pool(threads) {}
  boost::asio::thread_pool pool;
};

QueryPool::QueryPool(SegmentSource& source, std::size_t threads)
    : source_(&source), impl_(std::make_unique<Impl>(std::max<std::size_t>(1, threads))) {}

QueryPool::~QueryPool() { impl_->pool.join(); }

std::future<QueryResult> QueryPool::submit(RangeQuery q, IteratorKind kind) {
  auto task = std::make_shared<std::packaged_task<QueryResult()>>(
      [src = source_, q = std::move(q), kind] { return execute(*src, q, kind); });
  auto fut = task->get_future();
  boost::asio::post(impl_->pool, [task] { (*task)(); });
  return fut;
}

}  // namespace mdds
