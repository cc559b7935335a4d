#include "doctest.h"

#include <algorithm>
#include <functional>
#include <thread>

#include "mdds/kdtree.hpp"

using namespace mdds;

namespace {

// Records of `dims` int64 values each, as raw bytes.
struct Table {
  std::size_t dims;
  std::vector<std::int64_t> values;
  std::vector<DimAccessor> acc;

  Table(std::size_t d, std::vector<std::int64_t> v) : dims(d), values(std::move(v)) {
    for (std::size_t i = 0; i < d; ++i) acc.push_back({i * 8, FieldType::int64});
  }
  std::size_t size() const { return values.size() / dims; }
  std::vector<RecordRef> refs() const {
    std::vector<RecordRef> r;
    for (std::size_t i = 0; i < size(); ++i) r.push_back(reinterpret_cast<RecordRef>(values.data() + i * dims));
    return r;
  }
  static std::int64_t get(RecordRef r, std::size_t d) {
    std::int64_t v;
    std::memcpy(&v, r + d * 8, 8);
    return v;
  }
};

Table random_table(std::mt19937_64& rng, std::size_t n, std::size_t dims, std::int64_t domain) {
  std::vector<std::int64_t> v(n * dims);
  for (auto& x : v) x = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(domain)) - domain / 2;
  return Table(dims, std::move(v));
}

void collect(const KdNode* n, std::vector<RecordRef>& out) {
  if (!n) return;
  collect(n->left, out);
  out.push_back(n->record);
  collect(n->right, out);
}

std::uint32_t recount(const KdNode* n) { return n ? 1 + recount(n->left) + recount(n->right) : 0; }

// Checks the <= left / > right ordering at every node against an exhaustive
// scan of its subtrees, and every stored subtree_count against a recount.
bool check_tree(const KdNode* n, std::size_t level, std::size_t root_dim, std::size_t dims) {
  if (!n) return true;
  if (n->subtree_count != recount(n)) return false;
  const std::size_t d = (root_dim + level) % dims;
  const std::int64_t v = Table::get(n->record, d);
  std::vector<RecordRef> left, right;
  collect(n->left, left);
  collect(n->right, right);
  for (auto r : left) {
    if (Table::get(r, d) > v) return false;
  }
  for (auto r : right) {
    if (Table::get(r, d) <= v) return false;
  }
  return check_tree(n->left, level + 1, root_dim, dims) && check_tree(n->right, level + 1, root_dim, dims);
}

}  // namespace

TEST_SUITE("kdtree") {
  TEST_CASE("pool capacity is chunk records times ingestor threads") {
    NodePool p(10'000, 4);
    CHECK(p.capacity() == 40'000);
    CHECK(p.free_count() == 40'000);
    CHECK(NodePool(1, 1).capacity() == 1);
    CHECK_THROWS_AS(NodePool(0, 4), Error);
  }

  TEST_CASE("pool leases return their nodes") {
    NodePool p(10, 2);
    {
      auto a = p.acquire(15);
      CHECK(p.free_count() == 5);
      CHECK_THROWS_AS(p.acquire(6), Error);
      auto b = p.acquire(5);
      CHECK(p.free_count() == 0);
    }
    CHECK(p.free_count() == 20);
  }

  TEST_CASE("pool under concurrent acquire and release") {
    NodePool p(100, 4);
    std::vector<std::thread> ts;
    std::atomic<int> failures{0};
    for (int t = 0; t < 4; ++t) {
      ts.emplace_back([&] {
        for (int i = 0; i < 2000; ++i) {
          try {
            auto l = p.acquire(100);
            for (int k = 0; k < 100; ++k) l.next();
          } catch (const Error&) {
            failures++;
          }
        }
      });
    }
    for (auto& t : ts) t.join();
    CHECK(failures == 0);
    CHECK(p.free_count() == 400);
  }

  TEST_CASE("select_pivot picks the median of the sample") {
    Table t(1, {9, 1, 5});
    Rng rng(1);
    auto r = t.refs();
    CHECK(Table::get(r[select_pivot(r, t.acc[0], 3, rng)], 0) == 5);
    Table one(1, {42});
    auto r1 = one.refs();
    CHECK(select_pivot(r1, one.acc[0], 3, rng) == 0);
    Table same(1, {2, 2, 2});
    auto rs = same.refs();
    CHECK(select_pivot(rs, same.acc[0], 3, rng) < 3);
    CHECK_THROWS_AS(select_pivot(r, t.acc[0], 2, rng), Error);
  }

  TEST_CASE("select_pivot result is the median of some 3 records") {
    std::mt19937_64 g(5);
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
      Table t = random_table(g, 50, 1, 20);
      auto r = t.refs();
      const std::int64_t v = Table::get(r[select_pivot(r, t.acc[0], 3, rng)], 0);
      std::size_t le = 0, ge = 0;
      for (auto x : r) {
        le += Table::get(x, 0) <= v;
        ge += Table::get(x, 0) >= v;
      }
      CHECK(le >= 2);
      CHECK(ge >= 2);
    }
  }

  TEST_CASE("partition_level splits on <= / >") {
    Table t(1, {5, 1, 9, 3});
    auto r = t.refs();
    const std::size_t split = partition_level(r, t.acc[0], 3);
    CHECK(Table::get(r[split], 0) == 3);
    for (std::size_t i = 0; i < split; ++i) CHECK(Table::get(r[i], 0) <= 3);
    for (std::size_t i = split + 1; i < r.size(); ++i) CHECK(Table::get(r[i], 0) > 3);

    Table eq(1, {4, 4, 4, 4});
    auto re = eq.refs();
    const std::size_t s2 = partition_level(re, eq.acc[0], 1);
    for (std::size_t i = s2 + 1; i < re.size(); ++i) CHECK(Table::get(re[i], 0) > 4);

    Table one(1, {1});
    auto r1 = one.refs();
    CHECK(partition_level(r1, one.acc[0], 0) == 0);
  }

  TEST_CASE("partition_level on random slices, brute-force check") {
    std::mt19937_64 g(17);
    for (int i = 0; i < 300; ++i) {
      Table t = random_table(g, 1 + g() % 64, 1, 10);
      auto r = t.refs();
      auto before = r;
      const std::size_t pi = g() % r.size();
      const std::int64_t pv = Table::get(r[pi], 0);
      const RecordRef pivot = r[pi];
      const std::size_t split = partition_level(r, t.acc[0], pi);
      CHECK(r[split] == pivot);
      for (std::size_t k = 0; k < split; ++k) CHECK(Table::get(r[k], 0) <= pv);
      for (std::size_t k = split + 1; k < r.size(); ++k) CHECK(Table::get(r[k], 0) > pv);
      std::sort(before.begin(), before.end());
      auto after = r;
      std::sort(after.begin(), after.end());
      CHECK(before == after);
    }
  }

  TEST_CASE("bulkload of three records") {
    Table t(1, {1, 5, 9});
    NodePool p(3, 1);
    Rng rng(1);
    auto r = t.refs();
    KdTree tree = bulkload(r, t.acc, 0, BulkloadMode::full_recursive, p, rng);
    REQUIRE(tree.root());
    CHECK(Table::get(tree.root()->record, 0) == 5);
    CHECK(Table::get(tree.root()->left->record, 0) == 1);
    CHECK(Table::get(tree.root()->right->record, 0) == 9);
    CHECK(tree.root()->subtree_count == 3);
  }

  TEST_CASE("bulkload of nothing") {
    NodePool p(1, 1);
    Rng rng(1);
    std::vector<RecordRef> none;
    std::vector<DimAccessor> acc{{0, FieldType::int64}};
    KdTree tree = bulkload(none, acc, 0, BulkloadMode::full_recursive, p, rng);
    CHECK(tree.empty());
    CHECK(tree.size() == 0);
  }

  TEST_CASE("bulkload ordering invariant, both modes, random data") {
    std::mt19937_64 g(23);
    for (auto mode : {BulkloadMode::full_recursive, BulkloadMode::root_level_only}) {
      for (int trial = 0; trial < 40; ++trial) {
        const std::size_t dims = 1 + g() % 5;
        const std::size_t n = trial == 0 ? 7 : 1 + g() % 2000;
        Table t = random_table(g, n, dims, trial % 2 ? 8 : 1'000'000);
        NodePool p(n, 1);
        Rng rng(trial);
        auto r = t.refs();
        const std::size_t root_dim = g() % dims;
        KdTree tree = bulkload(r, t.acc, root_dim, mode, p, rng);
        CHECK(tree.size() == n);
        CHECK(check_tree(tree.root(), 0, root_dim, dims));
        std::vector<RecordRef> in;
        collect(tree.root(), in);
        std::sort(in.begin(), in.end());
        auto all = t.refs();
        std::sort(all.begin(), all.end());
        CHECK(in == all);
      }
    }
  }

  TEST_CASE("bulkload on 10^4 nodes, exhaustive check") {
    std::mt19937_64 g(29);
    Table t = random_table(g, 10'000, 3, 1000);
    NodePool p(10'000, 1);
    Rng rng(2);
    auto r = t.refs();
    KdTree tree = bulkload(r, t.acc, 0, BulkloadMode::root_level_only, p, rng);
    CHECK(check_tree(tree.root(), 0, 0, 3));
  }

  TEST_CASE("one-dimensional in-order traversal is sorted") {
    std::mt19937_64 g(31);
    Table t = random_table(g, 3000, 1, 500);
    NodePool p(3000, 1);
    Rng rng(3);
    auto r = t.refs();
    KdTree tree = bulkload(r, t.acc, 0, BulkloadMode::full_recursive, p, rng);
    std::vector<RecordRef> in;
    collect(tree.root(), in);
    CHECK(std::is_sorted(in.begin(), in.end(),
                         [](RecordRef a, RecordRef b) { return Table::get(a, 0) < Table::get(b, 0); }));
  }

  TEST_CASE("bulkload fails when the pool is short") {
    Table t(1, {1, 2, 3});
    NodePool p(2, 1);
    Rng rng(1);
    auto r = t.refs();
    CHECK_THROWS_AS(bulkload(r, t.acc, 0, BulkloadMode::full_recursive, p, rng), Error);
    CHECK(p.free_count() == 2);
  }

  TEST_CASE("detach_subtree updates ancestor counts") {
    Table t(1, {1, 5, 9});
    NodePool p(3, 1);
    Rng rng(1);
    auto r = t.refs();
    KdTree tree = bulkload(r, t.acc, 0, BulkloadMode::full_recursive, p, rng);
    KdNode* left = tree.root()->left;
    CHECK(tree.detach_subtree(left) == left);
    CHECK(tree.root()->subtree_count == 2);
    CHECK(tree.root()->left == nullptr);
    CHECK_THROWS_AS(tree.detach_subtree(left), Error);
    tree.detach_subtree(tree.root());
    CHECK(tree.empty());
  }

  TEST_CASE("detach conservation on random trees") {
    std::mt19937_64 g(37);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 1 + g() % 1500;
      Table t = random_table(g, n, 2, 100);
      NodePool p(n, 1);
      const std::size_t free_before = p.free_count();
      {
        Rng rng(trial);
        auto r = t.refs();
        KdTree tree = bulkload(r, t.acc, 0, BulkloadMode::root_level_only, p, rng);
        std::size_t detached = 0;
        while (!tree.empty()) {
          // Walk a random path and detach where it stops.
          KdNode* n2 = tree.root();
          while (g() % 3 && (n2->left || n2->right)) n2 = (g() % 2 && n2->left) || !n2->right ? n2->left : n2->right;
          const std::uint32_t c = n2->subtree_count;
          tree.detach_subtree(n2);
          detached += c;
          if (!tree.empty()) CHECK(check_tree(tree.root(), 0, 0, 2));
          CHECK(detached + tree.size() == n);
        }
        CHECK(detached == n);
      }
      CHECK(p.free_count() == free_before);
    }
  }
}
