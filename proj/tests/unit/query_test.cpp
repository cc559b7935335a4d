#include "doctest.h"

#include <mpfr.h>

#include <map>
#include <random>
#include <set>

#include "mdds/query.hpp"
#include "mdds/stats.hpp"
#include "mdds/store.hpp"
#include "support.hpp"

using namespace mdds;

namespace {

std::size_t parse_error_position(std::string_view text, const RecordDescriptor& d) {
  try {
    parse_query(text, d);
  } catch (const ParseError& e) {
    return e.position();
  }
  FAIL("query parsed: " << text);
  return 0;
}

std::string parse_error_message(std::string_view text, const RecordDescriptor& d) {
  try {
    parse_query(text, d);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

RecordDescriptor two_floats() {
  return RecordDescriptor(random_uuid(), {FieldSpec{"x", FieldType::float32}, FieldSpec{"y", FieldType::float32}},
                          {"x", "y"});
}

DataSegment float_segment(const RecordDescriptor& d, const std::vector<std::pair<float, float>>& pts,
                          std::vector<std::byte>& backing, std::uint64_t seed = 1) {
  backing.resize(pts.size() * d.record_size());
  std::vector<RecordRef> refs;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::memcpy(backing.data() + i * 8, &pts[i].first, 4);
    std::memcpy(backing.data() + i * 8 + 4, &pts[i].second, 4);
    refs.push_back(backing.data() + i * 8);
  }
  NodePool pool(pts.size(), 1);
  Rng rng(seed);
  return assemble_with_fresh_tree(refs, d, pool, rng);
}

std::vector<const std::byte*> drain(RecordIterator it) {
  std::vector<const std::byte*> out;
  while (auto r = it.next()) out.push_back(r);
  return out;
}

StoreConfig memory_config(const std::filesystem::path& dir, SegmentationScheme scheme, std::size_t chunk = 2000) {
  StoreConfig c;
  c.data_dir = dir;
  c.background_writers = false;
  c.ingest.scheme = scheme;
  c.ingest.max_chunk_records = chunk;
  c.ingest.segmentation.max_segment_size = 8 * 1024;
  c.ingest.ingestor_threads = 2;
  return c;
}

double mpfr_avg(const std::vector<long double>& values) {
  mpfr_t acc;
  mpfr_init2(acc, 1200);
  mpfr_set_zero(acc, 1);
  for (long double v : values) mpfr_add_d(acc, acc, static_cast<double>(v), MPFR_RNDN);
  const double s = mpfr_get_d(acc, MPFR_RNDN);
  mpfr_clear(acc);
  return s / static_cast<double>(values.size());
}

}  // namespace

TEST_SUITE("query") {
  TEST_CASE("parse: range-and-average shape") {
    const auto d = testing::load_descriptor("nyc_taxi.xml");
    const RangeQuery q = parse_query(
        "avg(passenger_count) where pickup_latitude in [40.76,40.78] and pickup_longitude in [-73.89,-73.88]", *d);
    CHECK(q.aggregate == Aggregate::avg);
    CHECK(q.aggregate_field == d->find_field("passenger_count"));
    CHECK(q.ranges[0].low.has_value());
    CHECK(q.ranges[0].high.has_value());
    CHECK(q.ranges[1].low.has_value());
    CHECK(!q.ranges[2].low.has_value());
    CHECK(!q.ranges[2].high.has_value());
    CHECK(keys::to_float32(q.ranges[0].lo_key) >= 40.76f);
    CHECK(static_cast<double>(std::nextafter(keys::to_float32(q.ranges[0].lo_key), 0.0f)) < 40.76);
    CHECK(!q.unsatisfiable);
  }

  TEST_CASE("parse: equality is a degenerate inclusive range") {
    const auto d = testing::load_descriptor("ghcn.xml");
    const RangeQuery q = parse_query("count(*) where element_id = 1465135408 and latitude >= 40", *d);
    CHECK(q.aggregate == Aggregate::count_all);
    CHECK(q.ranges[0].lo_key == keys::from_uint32(1465135408u));
    CHECK(q.ranges[0].hi_key == keys::from_uint32(1465135408u));
    CHECK(q.ranges[1].lo_key == keys::from_float32(40.0f));
  }

  TEST_CASE("parse: errors") {
    const auto d = testing::load_descriptor("nyc_taxi.xml");
    CHECK(parse_error_message("count(*) where medallion = 3", *d).find("non-indexing") != std::string::npos);
    CHECK(parse_error_message("count(*) where passenger_count in [5, 1]", *d).find("exceeds") != std::string::npos);
    CHECK(parse_error_message("count(*) where passenger_count > 5 and passenger_count < 2", *d).find("exceeds") !=
          std::string::npos);
    CHECK(parse_error_position("count(*) where nosuch > 1", *d) == 15);
    CHECK(parse_error_position("count(* where", *d) == 8);
    CHECK(parse_error_position("avg(medallion)", *d) == 4);
    CHECK_THROWS_AS(parse_query("count(*) order by passenger_count", *d), ParseError);
    CHECK_THROWS_AS(parse_query("max(passenger_count) limit 3", *d), ParseError);
    CHECK_THROWS_AS(parse_query("distinct medallion order by passenger_count", *d), ParseError);
    CHECK_THROWS_AS(parse_query("avg(passenger_count) / 0", *d), ParseError);
    CHECK_THROWS_AS(parse_query("* limit -1", *d), ParseError);
    CHECK_NOTHROW(parse_query("SELECT Distinct medallion, passenger_count WHERE passenger_count >= 1 "
                              "ORDER BY passenger_count DESC LIMIT 3",
                              *d));
  }

  TEST_CASE("bound normalization per kind") {
    const auto d = testing::load_descriptor("uniform5.xml");  // x,y float; t epoch; n uint32; v int64
    auto q = parse_query("count(*) where n > 5 and v < 7 and t in (1.5, 9.5)", *d);
    CHECK(q.ranges[3].lo_key == keys::from_uint32(6));
    CHECK(q.ranges[4].hi_key == keys::from_int64(6));
    CHECK(q.ranges[2].lo_key == keys::from_int64(2));
    CHECK(q.ranges[2].hi_key == keys::from_int64(9));

    q = parse_query("count(*) where n >= -5 and v <= 1e30", *d);
    CHECK(q.ranges[3].lo_key == keys::from_uint32(0));
    CHECK(q.ranges[4].hi_key == keys::from_int64(INT64_MAX));
    CHECK(!q.unsatisfiable);

    CHECK(parse_query("count(*) where n < 0", *d).unsatisfiable);
    CHECK(parse_query("count(*) where n in (3, 4)", *d).unsatisfiable);
    CHECK(parse_query("count(*) where x > 1e39", *d).ranges[0].lo_key == keys::from_float32(INFINITY));

    q = parse_query("count(*) where x > 0.1 and y < 0.1", *d);
    const float lo = keys::to_float32(q.ranges[0].lo_key);
    const float hi = keys::to_float32(q.ranges[1].hi_key);
    CHECK(static_cast<double>(lo) > 0.1);
    CHECK(static_cast<double>(std::nextafter(lo, -1.0f)) <= 0.1);
    CHECK(static_cast<double>(hi) < 0.1);
    CHECK(static_cast<double>(std::nextafter(hi, 1.0f)) >= 0.1);

    q = parse_query("count(*) where x >= 0.5 and x <= 0.5", *d);
    CHECK(q.ranges[0].lo_key == keys::from_float32(0.5f));
    CHECK(q.ranges[0].hi_key == keys::from_float32(0.5f));
  }

  TEST_CASE("kd and seq iterators on three diagonal points") {
    const RecordDescriptor d = two_floats();
    std::vector<std::byte> backing;
    DataSegment s = float_segment(d, {{1, 1}, {2, 2}, {3, 3}}, backing);
    const RangeQuery q = parse_query("* where x in [1.5, 2.5] and y in [1.5, 2.5]", d);
    const Hyperrectangle rect = q.rect();
    for (auto kind : {IteratorKind::kdtree, IteratorKind::sequential}) {
      auto got = drain(RecordIterator(s, d.dims(), rect, kind));
      REQUIRE(got.size() == 1);
      float x;
      std::memcpy(&x, got[0], 4);
      CHECK(x == 2.0f);
    }

    const Hyperrectangle all = Hyperrectangle::unbounded(2);
    RecordIterator kd(s, d.dims(), all, IteratorKind::kdtree);
    CHECK(drain(std::move(kd)).size() == 3);
    RecordIterator kd2(s, d.dims(), all, IteratorKind::kdtree);
    while (kd2.next()) {
    }
    CHECK(kd2.visited() == 3);

    RecordIterator seq(s, d.dims(), all, IteratorKind::sequential);
    std::vector<const std::byte*> order;
    while (auto r = seq.next()) order.push_back(r);
    CHECK(order == std::vector<const std::byte*>{s.record(0), s.record(1), s.record(2)});

    const Hyperrectangle far = parse_query("* where x > 10", d).rect();
    RecordIterator disjoint(s, d.dims(), far, IteratorKind::kdtree);
    CHECK(disjoint.next() == nullptr);
    CHECK(disjoint.visited() <= 2);
  }

  TEST_CASE("iterator equivalence on random segments and boxes") {
    const auto d = testing::load_descriptor("uniform5.xml");
    std::mt19937_64 g(9);
    for (int trial = 0; trial < 30; ++trial) {
      GenConfig gc;
      gc.records = 1 + g() % 3000;
      gc.seed = g();
      gc.mode = trial % 2 ? GenMode::clustered : GenMode::uniform;
      auto bytes = generate_records(*d, gc);
      NodePool pool(gc.records, 1);
      Rng rng(trial);
      std::vector<RecordRef> refs;
      for (std::size_t i = 0; i < gc.records; ++i) refs.push_back(bytes.data() + i * d->record_size());
      DataSegment s = assemble_with_fresh_tree(refs, *d, pool, rng);
      std::span<const std::byte> recs(s.records);
      std::vector<testing::Span> spans;
      for (std::size_t k = 0; k < d->dim_count(); ++k) spans.push_back(testing::data_span(recs, *d, d->dim_field(k)));
      for (int qi = 0; qi < 40; ++qi) {
        auto gq = testing::random_query(g, *d, spans, 0.02 + 0.5 * static_cast<double>(g() % 100) / 100.0);
        const RangeQuery q = parse_query("*" + gq.where, *d);
        auto expect = testing::matching_images(recs, *d, gq);
        for (auto kind : {IteratorKind::kdtree, IteratorKind::sequential}) {
          std::vector<std::string> got;
          if (!q.unsatisfiable) {
            const Hyperrectangle rect = q.rect();
            RecordIterator it(s, d->dims(), rect, kind);
            while (auto r = it.next()) got.emplace_back(reinterpret_cast<const char*>(r), d->record_size());
          }
          std::sort(got.begin(), got.end());
          CHECK(got == expect);
        }
      }
    }
  }

  TEST_CASE("a cycle in the packed tree is a corruption error") {
    const RecordDescriptor d = two_floats();
    std::vector<std::byte> backing;
    DataSegment s = float_segment(d, {{1, 1}, {2, 2}, {3, 3}}, backing);
    const std::int32_t child = s.nodes[0].left != kNilChild ? s.nodes[0].left : s.nodes[0].right;
    s.nodes[child].left = 0;
    s.nodes[child].right = 0;
    const Hyperrectangle all = Hyperrectangle::unbounded(2);
    RecordIterator it(s, d.dims(), all, IteratorKind::kdtree);
    CHECK_THROWS_AS(drain(std::move(it)), Error);
    s.nodes[child].left = 7;
    RecordIterator bad(s, d.dims(), all, IteratorKind::kdtree);
    CHECK_THROWS_AS(drain(std::move(bad)), Error);
  }

  TEST_CASE("empty store and empty matches") {
    const auto d = testing::load_descriptor("uniform5.xml");
    testing::TempDir dir("q");
    DataStore store(d, memory_config(dir.path(), SegmentationScheme::random));
    auto r = store.query("count(*)");
    CHECK(r.segments_inspected == 0);
    REQUIRE(r.rows.size() == 1);
    CHECK(std::get<std::int64_t>(r.rows[0][0]) == 0);
    CHECK(store.query("avg(v)").rows.empty());
    CHECK(store.query("min(x)").rows.empty());
    CHECK(store.query("*").rows.empty());
  }

  TEST_CASE("segment list and aggregates against brute force") {
    const auto d = testing::load_descriptor("uniform5.xml");
    GenConfig gc;
    gc.records = 20'000;
    gc.mode = GenMode::clustered;
    gc.seed = 4;
    const auto bytes = generate_records(*d, gc);
    std::vector<testing::Span> spans;
    for (std::size_t k = 0; k < d->dim_count(); ++k) spans.push_back(testing::data_span(bytes, *d, d->dim_field(k)));

    for (auto scheme : {SegmentationScheme::random, SegmentationScheme::kdtree}) {
      testing::TempDir dir("q");
      DataStore store(d, memory_config(dir.path(), scheme));
      for (std::size_t off = 0; off < bytes.size(); off += 2000 * d->record_size()) {
        store.ingest_chunk(std::span(bytes).subspan(off, std::min(bytes.size() - off, 2000 * d->record_size())));
      }
      store.flush();
      auto segs = store.index().all();
      std::mt19937_64 g(static_cast<int>(scheme) + 1);
      for (int qi = 0; qi < 40; ++qi) {
        auto gq = testing::random_query(g, *d, spans, 0.05 + 0.3 * static_cast<double>(g() % 100) / 100.0);
        const RangeQuery q = parse_query("count(*)" + gq.where, *d);

        std::size_t expect_segments = 0;
        if (!q.unsatisfiable) {
          for (const auto& s : segs) expect_segments += s->rect().intersects(q.rect());
        }

        std::vector<long double> v, x;
        for (std::size_t off = 0; off < bytes.size(); off += d->record_size()) {
          const std::byte* rec = bytes.data() + off;
          if (!gq.matches(rec, *d)) continue;
          v.push_back(testing::field_number(rec, d->field(5)));
          x.push_back(testing::field_number(rec, d->field(1)));
        }
        for (auto kind : {IteratorKind::kdtree, IteratorKind::sequential}) {
          auto count = store.query("count(*)" + gq.where, kind);
          CHECK(count.segments_inspected == expect_segments);
          CHECK(std::get<std::int64_t>(count.rows.at(0).at(0)) == static_cast<std::int64_t>(v.size()));

          auto avg = store.query("avg(v)" + gq.where, kind);
          auto mn = store.query("min(x)" + gq.where, kind);
          auto mx = store.query("max(v) / 10.0" + gq.where, kind);
          if (v.empty()) {
            CHECK(avg.rows.empty());
            CHECK(mn.rows.empty());
            CHECK(mx.rows.empty());
            continue;
          }
          CHECK(std::get<double>(avg.rows.at(0).at(0)) == mpfr_avg(v));
          CHECK(std::get<float>(mn.rows.at(0).at(0)) == static_cast<float>(*std::min_element(x.begin(), x.end())));
          CHECK(std::get<double>(mx.rows.at(0).at(0)) ==
                static_cast<double>(*std::max_element(v.begin(), v.end())) / 10.0);
        }
      }
    }
  }

  TEST_CASE("distinct, order by, limit against brute force") {
    const auto d = testing::load_descriptor("ghcn.xml");
    GenConfig gc;
    gc.records = 6000;
    gc.seed = 8;
    auto bytes = generate_records(*d, gc);
    // Few distinct stations and elevations so duplicates and ties occur.
    const auto& st = d->field(*d->find_field("station"));
    const auto& el = d->field(*d->find_field("elevation"));
    for (std::size_t off = 0; off < bytes.size(); off += d->record_size()) {
      const std::size_t i = off / d->record_size();
      std::memset(bytes.data() + off + st.offset, 0, st.array_len);
      const std::string name = "ST" + std::to_string(i % 37);
      std::memcpy(bytes.data() + off + st.offset, name.data(), name.size());
      const float e = static_cast<float>((i * 7) % 23) * 10.0f;
      std::memcpy(bytes.data() + off + el.offset, &e, 4);
    }
    testing::TempDir dir("q");
    DataStore store(d, memory_config(dir.path(), SegmentationScheme::kdtree));
    for (std::size_t off = 0; off < bytes.size(); off += 2000 * d->record_size()) {
      store.ingest_chunk(std::span(bytes).subspan(off, 2000 * d->record_size()));
    }
    const std::string where = " where element_value in [1000, 90000] and latitude > -500";
    std::set<std::pair<std::string, float>> tuples;
    for (std::size_t off = 0; off < bytes.size(); off += d->record_size()) {
      const std::byte* rec = bytes.data() + off;
      const long double ev = testing::field_number(rec, d->field(*d->find_field("element_value")));
      const long double lat = testing::field_number(rec, d->field(*d->find_field("latitude")));
      if (ev < 1000 || ev > 90000 || lat <= -500) continue;
      std::string s(reinterpret_cast<const char*>(rec + st.offset), st.array_len);
      s.resize(std::strlen(s.c_str()));
      tuples.insert({s, static_cast<float>(testing::field_number(rec, el))});
    }
    std::vector<std::pair<std::string, float>> expect(tuples.begin(), tuples.end());
    std::sort(expect.begin(), expect.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a < b;
    });
    expect.resize(3);
    for (auto kind : {IteratorKind::kdtree, IteratorKind::sequential}) {
      auto r = store.query("distinct station, elevation" + where + " order by elevation desc limit 3", kind);
      REQUIRE(r.rows.size() == 3);
      for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::get<std::string>(r.rows[i][0]) == expect[i].first);
        CHECK(std::get<float>(r.rows[i][1]) == expect[i].second);
      }
      auto all = store.query("distinct station, elevation" + where, kind);
      CHECK(all.rows.size() == tuples.size());
      auto plain = store.query("element_value" + where + " limit 5", kind);
      CHECK(plain.rows.size() == 5);
    }
  }

  TEST_CASE("result formatting") {
    QueryResult r;
    r.columns = {"count(*)"};
    r.rows = {{Cell(std::int64_t{42})}};
    r.segments_inspected = 3;
    r.records_visited = 100;
    r.records_matched = 42;
    CHECK(format_csv(r) == "count(*),segments_inspected,records_visited\n42,3,100\n");
    const std::string j = format_json(r);
    CHECK(j.find("\"segments_inspected\":3") != std::string::npos);
    CHECK(j.find("42") != std::string::npos);
    CHECK(format_cell(Cell(0.1f)) == "0.1");
    CHECK(format_cell(Cell(std::string("a,b"))) == "a,b");
  }

  TEST_CASE("query pool runs queries concurrently") {
    const auto d = testing::load_descriptor("uniform5.xml");
    GenConfig gc;
    gc.records = 8000;
    auto bytes = generate_records(*d, gc);
    testing::TempDir dir("q");
    DataStore store(d, memory_config(dir.path(), SegmentationScheme::random));
    for (std::size_t off = 0; off < bytes.size(); off += 2000 * d->record_size()) {
      store.ingest_chunk(std::span(bytes).subspan(off, 2000 * d->record_size()));
    }
    store.flush();
    QueryPool pool(store, 4);
    std::vector<std::future<QueryResult>> fs;
    for (int i = 0; i < 32; ++i) {
      fs.push_back(pool.submit(parse_query("count(*) where v >= " + std::to_string(i * 1000), *d),
                               i % 2 ? IteratorKind::kdtree : IteratorKind::sequential));
    }
    for (int i = 0; i < 32; ++i) {
      const auto r = fs[i].get();
      const auto expect = store.query("count(*) where v >= " + std::to_string(i * 1000));
      CHECK(r.rows == expect.rows);
    }
  }
}
