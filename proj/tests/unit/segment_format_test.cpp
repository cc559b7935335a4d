#include "doctest.h"

#include <random>
#include <set>

#include "mdds/segment_format.hpp"
#include "mdds/segmentation.hpp"
#include "mdds/stats.hpp"
#include "support.hpp"

using namespace mdds;

namespace {

struct Fixture {
  std::shared_ptr<const RecordDescriptor> desc = testing::load_descriptor("uniform5.xml");
  DescriptorRegistry registry{desc};
};

// Independent structural checks on a packed tree.
void check_packed(const DataSegment& s, const RecordDescriptor& d) {
  const std::size_t n = s.nodes.size();
  REQUIRE(n == s.records.size() / d.record_size());
  std::vector<int> parents(n, 0);
  for (const auto& node : s.nodes) {
    CHECK(node.record_pos % d.record_size() == 0);
    CHECK(node.record_pos < s.records.size());
    for (auto c : {node.left, node.right}) {
      if (c == kNilChild) continue;
      REQUIRE(c >= 0);
      REQUIRE(static_cast<std::size_t>(c) < n);
      parents[c]++;
    }
  }
  CHECK(parents[0] == 0);
  for (std::size_t i = 1; i < n; ++i) CHECK(parents[i] == 1);

  // Reachability from the root plus the ordering invariant.
  std::vector<bool> seen(n, false);
  std::function<void(std::int32_t, std::size_t, std::vector<std::pair<std::size_t, std::pair<std::uint64_t, bool>>>&)>
      walk = [&](std::int32_t i, std::size_t level, auto& constraints) {
        REQUIRE(!seen[i]);
        seen[i] = true;
        const std::byte* rec = s.record_at(s.nodes[i].record_pos);
        for (auto& [dim, c] : constraints) {
          const std::uint64_t k = d.dim(dim).key(rec);
          if (c.second) {
            CHECK(k <= c.first);
          } else {
            CHECK(k > c.first);
          }
        }
        const std::size_t dim = (s.initial_dimension + level) % d.dim_count();
        const std::uint64_t key = d.dim(dim).key(rec);
        if (s.nodes[i].left != kNilChild) {
          constraints.push_back({dim, {key, true}});
          walk(s.nodes[i].left, level + 1, constraints);
          constraints.pop_back();
        }
        if (s.nodes[i].right != kNilChild) {
          constraints.push_back({dim, {key, false}});
          walk(s.nodes[i].right, level + 1, constraints);
          constraints.pop_back();
        }
      };
  std::vector<std::pair<std::size_t, std::pair<std::uint64_t, bool>>> cons;
  walk(0, 0, cons);
  for (bool b : seen) CHECK(b);

  // Containment and tightness of the box.
  for (std::size_t k = 0; k < d.dim_count(); ++k) {
    std::uint64_t lo = ~0ull, hi = 0;
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, d.dim(k).key(s.record(i)));
      hi = std::max(hi, d.dim(k).key(s.record(i)));
    }
    CHECK(s.bounds.lo[k] == lo);
    CHECK(s.bounds.hi[k] == hi);
  }
}

DataSegment random_segment(Fixture& f, std::mt19937_64& g, std::vector<std::byte>& backing, std::size_t n) {
  GenConfig gc;
  gc.records = n;
  gc.seed = g();
  gc.mode = g() % 2 ? GenMode::clustered : GenMode::uniform;
  backing = generate_records(*f.desc, gc);
  const Chunk c = Chunk::of(backing, *f.desc);
  NodePool pool(n, 1);
  Rng rng(g());
  if (g() % 2) {
    SegmentationConfig cfg;
    cfg.max_segment_size = n * f.desc->record_size();
    cfg.overpacking = 1;
    auto plan = segment_kdtree(c, cfg, pool, rng);
    REQUIRE(plan.groups.size() >= 1);
    auto& grp = plan.groups[0];
    return assemble(grp.records, *f.desc, grp.initial_dim, grp.tree, &grp.bounds);
  }
  std::vector<RecordRef> refs;
  for (std::size_t i = 0; i < n; ++i) refs.push_back(c.record(i));
  return assemble_with_fresh_tree(refs, *f.desc, pool, rng);
}

ErrorCode rejection(std::span<const std::byte> bytes, const DescriptorRegistry& reg) {
  try {
    deserialize(bytes, reg);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::invalid_argument;  // not rejected
}

}  // namespace

TEST_SUITE("segment_format") {
  TEST_CASE("pack_tree shapes") {
    std::vector<std::int64_t> v{5, 1, 9};
    KdNode a{reinterpret_cast<RecordRef>(&v[0]), nullptr, nullptr, 1};
    auto single = pack_tree(&a, 8);
    REQUIRE(single.nodes.size() == 1);
    CHECK(single.nodes[0] == PackedKdNode{0, kNilChild, kNilChild});

    KdNode l{reinterpret_cast<RecordRef>(&v[1]), nullptr, nullptr, 1};
    KdNode r{reinterpret_cast<RecordRef>(&v[2]), nullptr, nullptr, 1};
    KdNode root{reinterpret_cast<RecordRef>(&v[0]), &l, &r, 3};
    auto three = pack_tree(&root, 8);
    REQUIRE(three.nodes.size() == 3);
    CHECK(three.nodes[0] == PackedKdNode{0, 1, 2});
    CHECK(three.nodes[1] == PackedKdNode{8, kNilChild, kNilChild});
    CHECK(three.nodes[2] == PackedKdNode{16, kNilChild, kNilChild});
    CHECK(three.records == std::vector<RecordRef>{root.record, l.record, r.record});

    KdNode c2{reinterpret_cast<RecordRef>(&v[2]), nullptr, nullptr, 1};
    KdNode c1{reinterpret_cast<RecordRef>(&v[1]), &c2, nullptr, 2};
    KdNode c0{reinterpret_cast<RecordRef>(&v[0]), &c1, nullptr, 3};
    auto spine = pack_tree(&c0, 8);
    CHECK(spine.nodes[0] == PackedKdNode{0, 1, kNilChild});
    CHECK(spine.nodes[1] == PackedKdNode{8, 2, kNilChild});
    CHECK(spine.nodes[2] == PackedKdNode{16, kNilChild, kNilChild});
  }

  TEST_CASE("assemble: one record, and three on one dimension") {
    Fixture f;
    std::vector<std::byte> rec(f.desc->record_size());
    const float x = 1.5f;
    std::memcpy(rec.data() + f.desc->field(1).offset, &x, 4);
    NodePool pool(3, 1);
    Rng rng(1);
    std::vector<RecordRef> one{rec.data()};
    DataSegment s = assemble_with_fresh_tree(one, *f.desc, pool, rng);
    REQUIRE(s.nodes.size() == 1);
    CHECK(s.nodes[0] == PackedKdNode{0, kNilChild, kNilChild});
    CHECK(s.bounds.lo == s.bounds.hi);
    CHECK(s.bounds.lo[0] == keys::from_float32(1.5f));

    // Three records that differ only on x (dimension 0).
    std::vector<std::byte> three(3 * f.desc->record_size());
    const float xs[] = {9.0f, 1.0f, 5.0f};
    std::vector<RecordRef> refs;
    for (int i = 0; i < 3; ++i) {
      std::memcpy(three.data() + i * f.desc->record_size() + f.desc->field(1).offset, &xs[i], 4);
      refs.push_back(three.data() + i * f.desc->record_size());
    }
    DataSegment t = assemble_with_fresh_tree(refs, *f.desc, pool, rng);
    auto xat = [&](std::int32_t node) {
      float v;
      std::memcpy(&v, t.record_at(t.nodes[node].record_pos) + f.desc->field(1).offset, 4);
      return v;
    };
    CHECK(xat(0) == 5.0f);
    CHECK(xat(t.nodes[0].left) == 1.0f);
    CHECK(xat(t.nodes[0].right) == 9.0f);
    check_packed(t, *f.desc);

    std::vector<RecordRef> none;
    CHECK_THROWS_AS(assemble_with_fresh_tree(none, *f.desc, pool, rng), Error);
  }

  TEST_CASE("layout sizes") {
    Fixture f;
    std::mt19937_64 g(1);
    std::vector<std::byte> backing;
    DataSegment s = random_segment(f, g, backing, 10);
    auto bytes = serialize(s, *f.desc);
    CHECK(bytes.size() == s.total_length());
    CHECK(s.total_length() == 40 + (12 + 20 * 5) + (16 + 16 * 10) + (8 + 10 * f.desc->record_size()));
    std::uint64_t total;
    std::memcpy(&total, bytes.data() + 16, 8);
    CHECK(total == bytes.size());
  }

  TEST_CASE("round trip and fixpoint on random segments") {
    Fixture f;
    std::mt19937_64 g(2);
    for (int i = 0; i < 60; ++i) {
      std::vector<std::byte> backing;
      DataSegment s = random_segment(f, g, backing, 1 + g() % 800);
      check_packed(s, *f.desc);
      auto bytes = serialize(s, *f.desc);
      DataSegment back = deserialize(bytes, f.registry);
      CHECK(back == s);
      CHECK(serialize(back, *f.desc) == bytes);
    }
  }

  TEST_CASE("truncation, length and type errors") {
    Fixture f;
    std::mt19937_64 g(3);
    std::vector<std::byte> backing;
    DataSegment s = random_segment(f, g, backing, 50);
    auto bytes = serialize(s, *f.desc);
    CHECK(rejection(std::span(bytes).first(bytes.size() / 2), f.registry) == ErrorCode::corrupt_segment);
    CHECK(rejection(std::span(bytes).first(10), f.registry) == ErrorCode::corrupt_segment);

    auto flipped = bytes;
    flipped[40] ^= std::byte{0x01};  // dims section_length
    CHECK(rejection(flipped, f.registry) == ErrorCode::corrupt_segment);

    auto longer = bytes;
    longer.push_back(std::byte{0});
    CHECK(rejection(longer, f.registry) == ErrorCode::corrupt_segment);

    DescriptorRegistry other(testing::load_descriptor("ghcn.xml"));
    CHECK(rejection(bytes, other) == ErrorCode::unknown_record_type);
  }

  TEST_CASE("every single-byte flip in the structural parts is rejected") {
    Fixture f;
    std::mt19937_64 g(4);
    std::vector<std::byte> backing;
    DataSegment s = random_segment(f, g, backing, 40);
    auto bytes = serialize(s, *f.desc);
    // Lengths, dim ordinals and tree links (not the uuids, bounds or records).
    std::vector<std::size_t> positions;
    for (std::size_t i = 16; i < 24; ++i) positions.push_back(i);
    for (std::size_t i = 40; i < 52; ++i) positions.push_back(i);
    for (std::size_t k = 0; k < 5; ++k) {
      for (std::size_t i = 0; i < 4; ++i) positions.push_back(52 + 20 * k + i);
    }
    const std::size_t kd = 40 + s.dims_section_length();
    for (std::size_t i = kd; i < kd + 16; ++i) positions.push_back(i);
    for (std::size_t n = 0; n < s.nodes.size(); ++n) {
      for (std::size_t i = 0; i < 16; ++i) positions.push_back(kd + 16 + 16 * n + i);
    }
    const std::size_t rs = kd + s.kdtree_section_length();
    for (std::size_t i = rs; i < rs + 8; ++i) positions.push_back(i);
    std::size_t accepted = 0;
    for (std::size_t p : positions) {
      for (std::uint8_t bit : {0x01, 0x80}) {
        auto m = bytes;
        m[p] ^= std::byte{bit};
        try {
          auto back = deserialize(m, f.registry);
          // A flip that leaves a valid segment must describe the same records.
          ++accepted;
          check_packed(back, *f.desc);
        } catch (const Error& e) {
          CHECK((e.code() == ErrorCode::corrupt_segment || e.code() == ErrorCode::unknown_record_type));
        }
      }
    }
    // Swapping two children can keep a tree valid only by coincidence; most
    // flips here must fail.
    CHECK(accepted * 20 < positions.size() * 2);
  }

  TEST_CASE("summary prefix") {
    Fixture f;
    std::mt19937_64 g(5);
    std::vector<std::byte> backing;
    DataSegment s = random_segment(f, g, backing, 30);
    auto bytes = serialize(s, *f.desc);
    auto sum = read_summary(std::span(bytes).first(summary_prefix_size(5)), *f.desc);
    CHECK(sum.segment_uuid == s.segment_uuid);
    CHECK(sum.total_length == bytes.size());
    CHECK(sum.bounds == s.bounds);
    CHECK(sum.record_count == 30);
  }
}
