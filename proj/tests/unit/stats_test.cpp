#include "doctest.h"

#include <cmath>
#include <random>

#include "mdds/stats.hpp"
#include "support.hpp"

using namespace mdds;

namespace {

Hyperrectangle box(std::initializer_list<std::pair<std::int64_t, std::int64_t>> sides) {
  Hyperrectangle r(sides.size());
  std::size_t d = 0;
  for (auto [lo, hi] : sides) {
    r.lo[d] = keys::from_int64(lo);
    r.hi[d] = keys::from_int64(hi);
    ++d;
  }
  return r;
}

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("disjoint and identical boxes") {
    const std::vector<FieldType> kinds{FieldType::int64, FieldType::int64};
    std::vector<Hyperrectangle> disjoint{box({{0, 1}, {0, 1}}), box({{2, 3}, {0, 1}})};
    auto r = overlap_stats(disjoint, kinds);
    CHECK(r.mean == 0.0);
    CHECK(r.stddev == 0.0);
    CHECK(r.segment_count == 2);

    std::vector<Hyperrectangle> same{box({{0, 1}, {0, 1}}), box({{0, 1}, {0, 1}})};
    r = overlap_stats(same, kinds);
    CHECK(r.mean == 1.0);
    CHECK(r.stddev == 0.0);

    std::vector<Hyperrectangle> touching{box({{0, 1}, {0, 1}}), box({{1, 2}, {1, 2}}), box({{5, 6}, {0, 0}})};
    r = overlap_stats(touching, kinds);
    CHECK(r.counts == std::vector<std::size_t>{1, 1, 0});

    r = overlap_stats(std::vector<Hyperrectangle>{}, kinds);
    CHECK(r.segment_count == 0);
    CHECK(r.mean == 0.0);
  }

  TEST_CASE("matches an all-pairs count and is symmetric") {
    std::mt19937_64 g(3);
    const std::vector<FieldType> kinds{FieldType::int64, FieldType::int64, FieldType::int64};
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<Hyperrectangle> rects;
      const int n = 50 + static_cast<int>(g() % 400);
      for (int i = 0; i < n; ++i) {
        std::int64_t a = g() % 1000, b = g() % 1000, c = g() % 1000;
        rects.push_back(box({{a, a + static_cast<std::int64_t>(g() % 100)},
                             {b, b + static_cast<std::int64_t>(g() % 100)},
                             {c, c + static_cast<std::int64_t>(g() % 300)}}));
      }
      std::vector<std::size_t> expect(n, 0);
      std::size_t pairs = 0;
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (i == j) continue;
          bool all = true;
          for (std::size_t d = 0; d < 3; ++d) {
            all = all && rects[i].lo[d] <= rects[j].hi[d] && rects[j].lo[d] <= rects[i].hi[d];
          }
          expect[i] += all;
          pairs += all;
        }
      }
      const auto r = overlap_stats(rects, kinds);
      CHECK(r.counts == expect);
      CHECK(pairs % 2 == 0);
      double mean = static_cast<double>(pairs) / n, var = 0;
      for (auto c : expect) var += (static_cast<double>(c) - mean) * (static_cast<double>(c) - mean);
      CHECK(r.mean == doctest::Approx(mean).epsilon(1e-12));
      CHECK(r.stddev == doctest::Approx(std::sqrt(var / n)).epsilon(1e-12));
    }
  }

  TEST_CASE("generated values stay inside their domains") {
    const auto d = testing::load_descriptor("uniform5.xml");
    for (auto mode : {GenMode::uniform, GenMode::clustered}) {
      GenConfig gc;
      gc.records = 5000;
      gc.mode = mode;
      const auto bytes = generate_records(*d, gc);
      CHECK(bytes.size() == 5000 * d->record_size());
      for (std::size_t f = 0; f < d->fields().size(); ++f) {
        const auto& spec = d->field(f);
        if (spec.type == FieldType::char_array) continue;
        const auto dom = field_domain(spec.type);
        const auto span = testing::data_span(bytes, *d, f);
        CHECK(span.lo >= dom.lo);
        CHECK(span.hi <= dom.hi);
        CHECK(span.hi > span.lo);
      }
      CHECK_NOTHROW(check_no_nan_dims(bytes, *d));
    }
    GenConfig a, b;
    a.records = b.records = 100;
    CHECK(generate_records(*d, a) == generate_records(*d, b));
    b.seed = 2;
    CHECK(generate_records(*d, a) != generate_records(*d, b));
  }
}
