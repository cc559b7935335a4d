#pragma once

#include <cstdint>
#include <future>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mdds/global_index.hpp"
#include "mdds/hyperrectangle.hpp"
#include "mdds/record_model.hpp"
#include "mdds/segment_format.hpp"

namespace mdds {

enum class IteratorKind { kdtree, sequential };

std::string_view to_string(IteratorKind kind);
IteratorKind parse_iterator_kind(std::string_view text);

/// A numeric literal as written in the query.
struct Literal {
  std::string text;
  bool is_integer = false;
  std::int64_t integer = 0;
  double real = 0.0;

  long double value() const { return is_integer ? static_cast<long double>(integer) : real; }
};

struct Bound {
  Literal literal;
  bool inclusive = true;
};

/// Constraint on one indexing dimension. `low`/`high` keep the predicate as
/// written; lo_key/hi_key are the equivalent inclusive key range, exact for
/// every field kind (e.g. `> 5` on an integer becomes `>= 6`, and a decimal
/// bound on a float field becomes the nearest float on the correct side).
struct DimRange {
  std::optional<Bound> low;
  std::optional<Bound> high;
  std::uint64_t lo_key = 0;
  std::uint64_t hi_key = ~std::uint64_t{0};
};

enum class Aggregate { none, count_all, avg, min, max };

struct OrderBy {
  std::size_t field = 0;
  bool descending = false;
};

struct RangeQuery {
  std::vector<DimRange> ranges;  // one per indexing dimension
  bool unsatisfiable = false;    // bounds admit no value of the field kind

  Aggregate aggregate = Aggregate::none;
  std::optional<std::size_t> aggregate_field;
  std::optional<double> scale;

  std::vector<std::size_t> projection;  // field ordinals, for Aggregate::none
  bool distinct = false;
  std::optional<OrderBy> order_by;
  std::optional<std::uint64_t> limit;

  /// Closed key box used against segment bounding boxes.
  Hyperrectangle rect() const;
  bool matches(const std::byte* record, std::span<const DimAccessor> dims) const;
};

/// Query DSL:
///
///   [select] AGG [where COND {and COND}] [order by FIELD [asc|desc]] [limit N]
///   AGG  := count(*) | avg(F) | min(F) | max(F), optionally followed by / NUMBER
///         | [distinct] * | [distinct] F {, F}
///   COND := F in [lo, hi]   (brackets [ ] inclusive, ( ) exclusive, mixable)
///         | F (= | >= | <= | > | <) NUMBER
///
/// Keywords are case-insensitive. Conditions may only name indexing
/// dimensions. Errors are ParseError with the byte offset.
RangeQuery parse_query(std::string_view text, const RecordDescriptor& desc);

/// Pull iterator over one segment's records that satisfy a query box.
class RecordIterator {
 public:
  RecordIterator(const DataSegment& seg, std::span<const DimAccessor> dims, const Hyperrectangle& rect,
                 IteratorKind kind);

  /// Next matching record, or nullptr when exhausted. Throws
  /// Error(corrupt_segment) on a malformed kd-tree.
  const std::byte* next();
  /// Nodes (kd) or records (sequential) examined so far.
  std::uint64_t visited() const { return visited_; }

 private:
  const std::byte* next_kd();
  const std::byte* next_seq();

  const DataSegment* seg_;
  std::span<const DimAccessor> dims_;
  const Hyperrectangle* rect_;
  IteratorKind kind_;
  std::uint64_t visited_ = 0;
  std::size_t pos_ = 0;
  std::vector<std::pair<std::int32_t, std::uint32_t>> stack_;  // (node, level)
};

/// Whatever cursors read segments from: an index to search and a way to pin
/// and unpin segments.
class SegmentSource {
 public:
  virtual ~SegmentSource() = default;
  virtual const RecordDescriptor& descriptor() const = 0;
  virtual std::vector<SegmentRefPtr> search(const Hyperrectangle& rect) const = 0;
  virtual const DataSegment* pin(const SegmentRefPtr& ref) = 0;
  virtual void unpin(const SegmentRefPtr& ref) = 0;
};

/// Iterates the matching records of all segments found by the index search
/// made at construction. Segments are pinned one at a time while iterated;
/// each listed segment is pinned and unpinned exactly once.
class Cursor {
 public:
  Cursor(SegmentSource& source, const RangeQuery& q, IteratorKind kind);
  ~Cursor();
  Cursor(const Cursor&) = delete;
  Cursor& operator=(const Cursor&) = delete;

  const std::byte* next();

  std::size_t segments_listed() const { return refs_.size(); }
  std::uint64_t records_visited() const;
  const std::vector<SegmentRefPtr>& segments() const { return refs_; }

 private:
  void close_current();

  SegmentSource* source_;
  std::span<const DimAccessor> dims_;
  Hyperrectangle rect_;
  IteratorKind kind_;
  std::vector<SegmentRefPtr> refs_;
  std::size_t next_ref_ = 0;
  SegmentRefPtr current_;
  std::optional<RecordIterator> iter_;
  std::uint64_t visited_done_ = 0;
};

Cursor open_cursor(SegmentSource& source, const RangeQuery& q, IteratorKind kind);

using Cell = std::variant<std::monostate, std::string, std::int64_t, std::uint32_t, float, double>;

std::string format_cell(const Cell& c);

struct QueryResult {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  std::uint64_t segments_inspected = 0;
  std::uint64_t records_visited = 0;
  std::uint64_t records_matched = 0;
};

/// Runs the query. count(*) always yields one row; avg/min/max over no
/// matching record yield no row.
QueryResult execute(SegmentSource& source, const RangeQuery& q, IteratorKind kind);

std::string format_csv(const QueryResult& r);
std::string format_json(const QueryResult& r);

/// Fixed-size pool for running queries concurrently.
class QueryPool {
 public:
  QueryPool(SegmentSource& source, std::size_t threads);
  ~QueryPool();

  std::future<QueryResult> submit(RangeQuery q, IteratorKind kind);

 private:
  struct Impl;
  SegmentSource* source_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mdds
