#pragma once

// R*-tree over hyperrectangles (Beckmann et al.): ChooseSubtree with
// overlap-enlargement at the leaf level, forced reinsertion once per level
// per insertion, and the margin/overlap split. Boxes are compared exactly in
// key space; the area/margin/overlap heuristics run on the decoded values.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mdds/hyperrectangle.hpp"
#include "mdds/record_model.hpp"

namespace mdds {

struct RStarParams {
  std::size_t max_entries = 64;
  std::size_t min_entries = 25;     // 40% of max_entries
  std::size_t reinsert_count = 19;  // 30% of max_entries
  std::size_t overlap_candidates = 32;

  static RStarParams with_max(std::size_t max_entries) {
    RStarParams p;
    p.max_entries = max_entries;
    p.min_entries = std::max<std::size_t>(1, max_entries * 2 / 5);
    p.reinsert_count = std::max<std::size_t>(1, max_entries * 3 / 10);
    return p;
  }
};

template <typename Value>
class RStarTree {
 public:
  explicit RStarTree(std::vector<FieldType> kinds, RStarParams params = {})
      : kinds_(std::move(kinds)), params_(params) {
    if (params_.max_entries < 4 || params_.min_entries < 1 ||
        params_.min_entries * 2 > params_.max_entries || params_.reinsert_count < 1 ||
        params_.reinsert_count > params_.max_entries - params_.min_entries) {
      throw Error(ErrorCode::invalid_argument, "inconsistent R*-tree parameters");
    }
    clear();
  }

  std::size_t size() const { return size_; }
  std::size_t height() const { return height_; }
  std::size_t dims() const { return kinds_.size(); }
  const RStarParams& params() const { return params_; }

  void clear() {
    root_ = std::make_unique<Node>();
    root_->leaf = true;
    height_ = 1;
    size_ = 0;
  }

  void insert(const Hyperrectangle& box, Value value) {
    if (box.dims() != kinds_.size() || box.empty()) {
      throw Error(ErrorCode::invalid_argument, "R*-tree insert: invalid rectangle");
    }
    Entry e;
    e.box = box;
    e.value = std::move(value);
    std::vector<bool> reinserted(height_, false);
    insert_at_level(std::move(e), 0, reinserted);
    ++size_;
  }

  /// Calls fn(box, value) for every entry whose box intersects `query`.
  template <typename Fn>
  void search(const Hyperrectangle& query, Fn&& fn) const {
    std::vector<const Node*> stack{root_.get()};
    while (!stack.empty()) {
      const Node* n = stack.back();
      stack.pop_back();
      for (const auto& e : n->entries) {
        if (!e.box.intersects(query)) continue;
        if (n->leaf) {
          fn(e.box, e.value);
        } else {
          stack.push_back(e.child.get());
        }
      }
    }
  }

  std::vector<Value> search(const Hyperrectangle& query) const {
    std::vector<Value> out;
    search(query, [&](const Hyperrectangle&, const Value& v) { out.push_back(v); });
    return out;
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    search(Hyperrectangle::unbounded(kinds_.size()), std::forward<Fn>(fn));
  }

  /// Removes the entry equal to `value` stored under `box`; returns false if
  /// absent. Underfull nodes are dissolved and their entries reinserted.
  bool remove(const Hyperrectangle& box, const Value& value) {
    std::vector<std::pair<Node*, std::size_t>> path;  // (node, entry index within it)
    if (!find_leaf(root_.get(), box, value, path)) return false;
    auto [leaf, idx] = path.back();
    leaf->entries.erase(leaf->entries.begin() + static_cast<std::ptrdiff_t>(idx));
    --size_;

    // Condense: walk upward, dissolving underfull non-root nodes.
    std::vector<std::pair<Entry, std::size_t>> orphans;  // (entry, level)
    for (std::size_t i = path.size() - 1; i > 0; --i) {
      Node* node = path[i].first;
      auto [parent, child_idx] = path[i - 1];
      const std::size_t level = height_ - 1 - i;
      if (node->entries.size() < params_.min_entries) {
        for (auto& e : node->entries) orphans.emplace_back(std::move(e), level);
        parent->entries.erase(parent->entries.begin() + static_cast<std::ptrdiff_t>(child_idx));
      } else {
        parent->entries[child_idx].box = mbr(node->entries);
      }
    }
    while (!root_->leaf && root_->entries.size() == 1) {
      root_ = std::move(root_->entries.front().child);
      --height_;
    }
    if (!root_->leaf && root_->entries.empty()) clear();
    for (auto& [e, level] : orphans) {
      // Orphaned subtrees taller than the (possibly shrunken) tree are
      // flattened back to leaf entries.
      if (level >= height_) {
        reinsert_leaves(std::move(e));
        continue;
      }
      std::vector<bool> reinserted(height_, false);
      insert_at_level(std::move(e), level, reinserted);
    }
    return true;
  }

  /// Structural check used by tests: fill factors, equal leaf depth, parent
  /// boxes equal to the minimum bounding rectangle of their children, and the
  /// entry count. Returns an empty string when everything holds.
  std::string check_invariants() const {
    std::size_t leaf_entries = 0;
    std::string err = check_node(root_.get(), true, height_ - 1, nullptr, leaf_entries);
    if (err.empty() && leaf_entries != size_) err = "entry count mismatch";
    return err;
  }

 private:
  struct Node;
  struct Entry {
    Hyperrectangle box;
    std::unique_ptr<Node> child;
    Value value{};
  };
  struct Node {
    bool leaf = false;
    std::vector<Entry> entries;
  };

  // -- geometry on decoded values ------------------------------------------

  double extent(const Hyperrectangle& b, std::size_t d) const {
    return keys::to_double(kinds_[d], b.hi[d]) - keys::to_double(kinds_[d], b.lo[d]);
  }
  double area(const Hyperrectangle& b) const {
    double a = 1.0;
    for (std::size_t d = 0; d < kinds_.size(); ++d) a *= extent(b, d);
    return a;
  }
  double margin(const Hyperrectangle& b) const {
    double m = 0.0;
    for (std::size_t d = 0; d < kinds_.size(); ++d) m += extent(b, d);
    return m;
  }
  double overlap(const Hyperrectangle& a, const Hyperrectangle& b) const {
    double o = 1.0;
    for (std::size_t d = 0; d < kinds_.size(); ++d) {
      const auto lo = std::max(a.lo[d], b.lo[d]);
      const auto hi = std::min(a.hi[d], b.hi[d]);
      if (lo > hi) return 0.0;
      o *= keys::to_double(kinds_[d], hi) - keys::to_double(kinds_[d], lo);
    }
    return o;
  }
  double center(const Hyperrectangle& b, std::size_t d) const {
    return 0.5 * (keys::to_double(kinds_[d], b.lo[d]) + keys::to_double(kinds_[d], b.hi[d]));
  }
  static Hyperrectangle united(const Hyperrectangle& a, const Hyperrectangle& b) {
    Hyperrectangle u = a;
    u.expand(b);
    return u;
  }
  Hyperrectangle mbr(const std::vector<Entry>& entries) const {
    Hyperrectangle b(kinds_.size());
    for (const auto& e : entries) b.expand(e.box);
    return b;
  }
  template <typename It>
  Hyperrectangle mbr(It first, It last) const {
    Hyperrectangle b(kinds_.size());
    for (; first != last; ++first) b.expand(first->box);
    return b;
  }

  // -- insertion -------------------------------------------------------------

  std::size_t choose_subtree(const Node& node, const Hyperrectangle& box, bool children_are_leaves) const {
    const auto& es = node.entries;
    std::vector<std::size_t> order(es.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> enlarge(es.size()), areas(es.size());
    for (std::size_t i = 0; i < es.size(); ++i) {
      areas[i] = area(es[i].box);
      enlarge[i] = area(united(es[i].box, box)) - areas[i];
    }
    auto by_enlargement = [&](std::size_t a, std::size_t b) {
      if (enlarge[a] != enlarge[b]) return enlarge[a] < enlarge[b];
      return areas[a] < areas[b];
    };
    if (!children_are_leaves) {
      return *std::min_element(order.begin(), order.end(), by_enlargement);
    }
    // Least overlap enlargement, evaluated on the candidates with the least
    // area enlargement.
    std::sort(order.begin(), order.end(), by_enlargement);
    const std::size_t candidates = std::min(order.size(), params_.overlap_candidates);
    std::size_t best = order[0];
    double best_overlap = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < candidates; ++c) {
      const std::size_t i = order[c];
      const auto grown = united(es[i].box, box);
      double delta = 0.0;
      for (std::size_t j = 0; j < es.size(); ++j) {
        if (j == i) continue;
        delta += overlap(grown, es[j].box) - overlap(es[i].box, es[j].box);
      }
      if (delta < best_overlap) {
        best_overlap = delta;
        best = i;
      }
    }
    return best;
  }

  // Inserts `e` into the subtree at the given level (0 = leaves hold data).
  void insert_at_level(Entry e, std::size_t level, std::vector<bool>& reinserted) {
    std::vector<std::pair<Entry, std::size_t>> pending;
    auto split = insert_rec(root_.get(), height_ - 1, std::move(e), level, reinserted, pending);
    if (split) grow_root(std::move(*split));
    for (auto& [pe, plevel] : pending) {
      if (reinserted.size() < height_) reinserted.resize(height_, false);
      insert_at_level(std::move(pe), plevel, reinserted);
    }
  }

  void grow_root(Entry sibling) {
    auto new_root = std::make_unique<Node>();
    new_root->leaf = false;
    Entry old;
    old.box = mbr(root_->entries);
    old.child = std::move(root_);
    new_root->entries.push_back(std::move(old));
    new_root->entries.push_back(std::move(sibling));
    root_ = std::move(new_root);
    ++height_;
  }

  std::optional<Entry> insert_rec(Node* node, std::size_t node_level, Entry e, std::size_t target,
                                  std::vector<bool>& reinserted,
                                  std::vector<std::pair<Entry, std::size_t>>& pending) {
    if (node_level == target) {
      node->entries.push_back(std::move(e));
    } else {
      const std::size_t idx = choose_subtree(*node, e.box, node_level == 1);
      Node* child = node->entries[idx].child.get();
      auto split = insert_rec(child, node_level - 1, std::move(e), target, reinserted, pending);
      node->entries[idx].box = mbr(child->entries);
      if (split) node->entries.push_back(std::move(*split));
    }
    if (node->entries.size() <= params_.max_entries) return std::nullopt;

    if (node != root_.get() && node_level < reinserted.size() && !reinserted[node_level]) {
      reinserted[node_level] = true;
      forced_reinsert(*node, node_level, pending);
      return std::nullopt;
    }
    return split_node(*node);
  }

  // Removes the reinsert_count entries whose centers lie farthest from the
  // node's center; they are reinserted closest-first.
  void forced_reinsert(Node& node, std::size_t level, std::vector<std::pair<Entry, std::size_t>>& pending) {
    const auto box = mbr(node.entries);
    std::vector<std::pair<double, std::size_t>> dist(node.entries.size());
    for (std::size_t i = 0; i < node.entries.size(); ++i) {
      double s = 0.0;
      for (std::size_t d = 0; d < kinds_.size(); ++d) {
        double delta = center(node.entries[i].box, d) - center(box, d);
        s += delta * delta;
      }
      dist[i] = {s, i};
    }
    std::sort(dist.begin(), dist.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<bool> take(node.entries.size(), false);
    for (std::size_t k = 0; k < params_.reinsert_count; ++k) take[dist[k].second] = true;

    std::vector<Entry> keep, removed_far_first;
    for (std::size_t k = 0; k < params_.reinsert_count; ++k) {
      removed_far_first.push_back(std::move(node.entries[dist[k].second]));
    }
    for (std::size_t i = 0; i < node.entries.size(); ++i) {
      if (!take[i]) keep.push_back(std::move(node.entries[i]));
    }
    node.entries = std::move(keep);
    for (auto it = removed_far_first.rbegin(); it != removed_far_first.rend(); ++it) {
      pending.emplace_back(std::move(*it), level);
    }
  }

  Entry split_node(Node& node) {
    const std::size_t total = node.entries.size();
    const std::size_t m = params_.min_entries;
    const std::size_t distributions = total - 2 * m + 1;
    auto& es = node.entries;

    auto sort_by = [&](std::size_t d, bool upper) {
      std::vector<std::size_t> idx(total);
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto& ba = es[a].box;
        const auto& bb = es[b].box;
        auto ka = upper ? std::pair(ba.hi[d], ba.lo[d]) : std::pair(ba.lo[d], ba.hi[d]);
        auto kb = upper ? std::pair(bb.hi[d], bb.lo[d]) : std::pair(bb.lo[d], bb.hi[d]);
        return ka != kb ? ka < kb : a < b;
      });
      return idx;
    };
    auto group_box = [&](const std::vector<std::size_t>& idx, std::size_t from, std::size_t to) {
      Hyperrectangle b(kinds_.size());
      for (std::size_t i = from; i < to; ++i) b.expand(es[idx[i]].box);
      return b;
    };

    // ChooseSplitAxis: minimum sum of margins over all distributions.
    std::size_t best_axis = 0;
    double best_margin = std::numeric_limits<double>::infinity();
    for (std::size_t d = 0; d < kinds_.size(); ++d) {
      double s = 0.0;
      for (bool upper : {false, true}) {
        auto idx = sort_by(d, upper);
        for (std::size_t k = 0; k < distributions; ++k) {
          const std::size_t cut = m + k;
          s += margin(group_box(idx, 0, cut)) + margin(group_box(idx, cut, total));
        }
      }
      if (s < best_margin) {
        best_margin = s;
        best_axis = d;
      }
    }

    // ChooseSplitIndex: minimum overlap, then minimum total area.
    std::vector<std::size_t> best_idx;
    std::size_t best_cut = m;
    double best_overlap = std::numeric_limits<double>::infinity();
    double best_area = std::numeric_limits<double>::infinity();
    for (bool upper : {false, true}) {
      auto idx = sort_by(best_axis, upper);
      for (std::size_t k = 0; k < distributions; ++k) {
        const std::size_t cut = m + k;
        auto b1 = group_box(idx, 0, cut);
        auto b2 = group_box(idx, cut, total);
        double ov = overlap(b1, b2);
        double ar = area(b1) + area(b2);
        if (ov < best_overlap || (ov == best_overlap && ar < best_area)) {
          best_overlap = ov;
          best_area = ar;
          best_idx = idx;
          best_cut = cut;
        }
      }
    }

    std::vector<Entry> first, second;
    for (std::size_t i = 0; i < total; ++i) {
      (i < best_cut ? first : second).push_back(std::move(es[best_idx[i]]));
    }
    es = std::move(first);
    auto sibling = std::make_unique<Node>();
    sibling->leaf = node.leaf;
    sibling->entries = std::move(second);
    Entry out;
    out.box = mbr(sibling->entries);
    out.child = std::move(sibling);
    return out;
  }

  // -- removal -----------------------------------------------------------------

  bool find_leaf(Node* node, const Hyperrectangle& box, const Value& value,
                 std::vector<std::pair<Node*, std::size_t>>& path) {
    for (std::size_t i = 0; i < node->entries.size(); ++i) {
      auto& e = node->entries[i];
      if (!e.box.contains(box)) continue;
      if (node->leaf) {
        if (e.box == box && e.value == value) {
          path.emplace_back(node, i);
          return true;
        }
        continue;
      }
      path.emplace_back(node, i);
      if (find_leaf(e.child.get(), box, value, path)) return true;
      path.pop_back();
    }
    return false;
  }

  void reinsert_leaves(Entry e) {
    if (!e.child) {
      std::vector<bool> reinserted(height_, false);
      insert_at_level(std::move(e), 0, reinserted);
      return;
    }
    for (auto& c : e.child->entries) reinsert_leaves(std::move(c));
  }

  // -- validation --------------------------------------------------------------

  std::string check_node(const Node* n, bool is_root, std::size_t level, const Hyperrectangle* expect,
                         std::size_t& leaf_entries) const {
    if (n->leaf != (level == 0)) return "leaf at wrong depth";
    if (!is_root && (n->entries.size() < params_.min_entries || n->entries.size() > params_.max_entries)) {
      return "node fill " + std::to_string(n->entries.size()) + " outside [m, M]";
    }
    if (is_root && n->entries.size() > params_.max_entries) return "root overfull";
    if (is_root && !n->leaf && n->entries.size() < 2) return "internal root with < 2 entries";
    if (expect && !(mbr(n->entries) == *expect)) return "parent box is not the children's MBR";
    for (const auto& e : n->entries) {
      if (n->leaf) {
        if (e.child) return "leaf entry with a child";
        ++leaf_entries;
        continue;
      }
      if (!e.child) return "internal entry without a child";
      auto err = check_node(e.child.get(), false, level - 1, &e.box, leaf_entries);
      if (!err.empty()) return err;
    }
    return {};
  }

  std::vector<FieldType> kinds_;
  RStarParams params_;
  std::unique_ptr<Node> root_;
  std::size_t height_ = 1;
  std::size_t size_ = 0;
};

}  // namespace mdds
