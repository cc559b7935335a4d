#include "mdds/kdtree.hpp"

#include <algorithm>
#include <array>
#include <utility>

namespace mdds {

// ---------------------------------------------------------------------------
// NodePool

NodePool::NodePool(std::size_t max_chunk_records, std::size_t max_ingestor_threads) {
  if (max_chunk_records < 1 || max_ingestor_threads < 1) {
    throw Error(ErrorCode::invalid_argument, "node pool dimensions must be >= 1");
  }
  if (max_chunk_records > std::numeric_limits<std::uint32_t>::max() ||
      max_chunk_records > std::numeric_limits<std::size_t>::max() / max_ingestor_threads) {
    throw Error(ErrorCode::invalid_argument, "node pool dimensions overflow");
  }
  capacity_ = max_chunk_records * max_ingestor_threads;
  try {
    storage_ = std::make_unique<KdNode[]>(capacity_);
    free_.reserve(capacity_);
  } catch (const std::bad_alloc&) {
    throw Error(ErrorCode::pool_exhausted,
                "cannot allocate a node pool of " + std::to_string(capacity_) + " nodes");
  }
  for (std::size_t i = capacity_; i-- > 0;) free_.push_back(&storage_[i]);
}

std::size_t NodePool::free_count() const {
  std::lock_guard lock(mutex_);
  return free_.size();
}

NodePool::Lease NodePool::acquire(std::size_t n) {
  std::vector<KdNode*> nodes;
  nodes.reserve(n);
  {
    std::lock_guard lock(mutex_);
    if (n > free_.size()) {
      throw Error(ErrorCode::pool_exhausted, "node pool exhausted: need " + std::to_string(n) +
                                                 ", " + std::to_string(free_.size()) + " free");
    }
    nodes.assign(free_.end() - static_cast<std::ptrdiff_t>(n), free_.end());
    free_.resize(free_.size() - n);
  }
  return Lease(this, std::move(nodes));
}

void NodePool::release(std::vector<KdNode*>& nodes) {
  std::lock_guard lock(mutex_);
  free_.insert(free_.end(), nodes.begin(), nodes.end());
  nodes.clear();
}

NodePool::Lease::Lease(Lease&& other) noexcept
    : pool_(std::exchange(other.pool_, nullptr)),
      nodes_(std::move(other.nodes_)),
      used_(std::exchange(other.used_, 0)) {
  other.nodes_.clear();
}

NodePool::Lease& NodePool::Lease::operator=(Lease&& other) noexcept {
  if (this != &other) {
    if (pool_ && !nodes_.empty()) pool_->release(nodes_);
    pool_ = std::exchange(other.pool_, nullptr);
    nodes_ = std::move(other.nodes_);
    other.nodes_.clear();
    used_ = std::exchange(other.used_, 0);
  }
  return *this;
}

NodePool::Lease::~Lease() {
  if (pool_ && !nodes_.empty()) pool_->release(nodes_);
}

KdNode* NodePool::Lease::next() {
  if (used_ >= nodes_.size()) throw Error(ErrorCode::pool_exhausted, "node lease exhausted");
  KdNode* n = nodes_[used_++];
  *n = KdNode{};
  return n;
}

// ---------------------------------------------------------------------------
// Pivot selection and partitioning

std::size_t select_pivot(std::span<const RecordRef> records, const DimAccessor& dim, unsigned m,
                         Rng& rng) {
  if (records.empty()) throw Error(ErrorCode::invalid_argument, "select_pivot on empty slice");
  if (m < 1 || m % 2 == 0) throw Error(ErrorCode::invalid_argument, "pivot sample size must be odd");
  const std::size_t n = records.size();
  if (n == 1) return 0;

  constexpr std::size_t kInline = 15;
  std::array<std::pair<std::uint64_t, std::size_t>, kInline> inline_buf;
  std::vector<std::pair<std::uint64_t, std::size_t>> heap_buf;
  std::span<std::pair<std::uint64_t, std::size_t>> sample;
  const std::size_t k = std::min<std::size_t>(n, m);
  if (k <= kInline) {
    sample = std::span(inline_buf.data(), k);
  } else {
    heap_buf.resize(k);
    sample = heap_buf;
  }

  if (n <= m) {
    for (std::size_t i = 0; i < n; ++i) sample[i] = {dim.key(records[i]), i};
  } else {
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t idx;
      bool dup;
      do {
        idx = uniform_index(rng, n);
        dup = false;
        for (std::size_t j = 0; j < i; ++j) dup |= sample[j].second == idx;
      } while (dup);
      sample[i] = {dim.key(records[idx]), idx};
    }
  }
  auto mid = sample.begin() + static_cast<std::ptrdiff_t>((k - 1) / 2);
  std::nth_element(sample.begin(), mid, sample.end());
  return mid->second;
}

std::size_t partition_level(std::span<RecordRef> records, const DimAccessor& dim,
                            std::size_t pivot_index) {
  const std::size_t n = records.size();
  if (pivot_index >= n) throw Error(ErrorCode::out_of_range, "pivot index outside the slice");
  std::swap(records[pivot_index], records[n - 1]);
  const std::uint64_t pivot = dim.key(records[n - 1]);
  std::size_t store = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (dim.key(records[i]) <= pivot) std::swap(records[store++], records[i]);
  }
  std::swap(records[store], records[n - 1]);
  return store;
}

// ---------------------------------------------------------------------------
// Bulkload

KdTree bulkload(std::span<RecordRef> records, std::span<const DimAccessor> dims,
                std::size_t root_dim, BulkloadMode mode, NodePool& pool, Rng& rng,
                unsigned pivot_samples) {
  if (dims.empty()) throw Error(ErrorCode::invalid_argument, "bulkload needs at least one dimension");
  if (root_dim >= dims.size()) throw Error(ErrorCode::out_of_range, "root dimension out of range");
  if (records.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::invalid_argument, "too many records for one kd-tree");
  }
  if (records.empty()) return KdTree(NodePool::Lease(), nullptr, root_dim, dims.size());

  auto lease = pool.acquire(records.size());
  KdNode* root = nullptr;

  struct Task {
    std::size_t lo, hi, level;
    KdNode** slot;
  };
  std::vector<Task> stack;
  stack.push_back({0, records.size(), 0, &root});
  while (!stack.empty()) {
    Task t = stack.back();
    stack.pop_back();
    const std::size_t n = t.hi - t.lo;
    if (n == 0) continue;
    auto slice = records.subspan(t.lo, n);
    const auto& dim = dims[level_dim(root_dim, t.level, dims.size())];
    std::size_t pivot;
    if (mode == BulkloadMode::full_recursive || t.level == 0) {
      pivot = select_pivot(slice, dim, pivot_samples, rng);
    } else {
      pivot = n / 2;
    }
    const std::size_t split = partition_level(slice, dim, pivot);

    KdNode* node = lease.next();
    node->record = slice[split];
    node->subtree_count = static_cast<std::uint32_t>(n);
    *t.slot = node;
    stack.push_back({t.lo + split + 1, t.hi, t.level + 1, &node->right});
    stack.push_back({t.lo, t.lo + split, t.level + 1, &node->left});
  }
  return KdTree(std::move(lease), root, root_dim, dims.size());
}

// ---------------------------------------------------------------------------
// Detachment

KdNode* KdTree::detach_subtree(KdNode* node) {
  if (node == nullptr || root_ == nullptr) {
    throw Error(ErrorCode::not_found, "node is not in the tree");
  }
  if (node == root_) {
    root_ = nullptr;
    return node;
  }
  // Depth-first search for the path root -> node.
  std::vector<KdNode*> path;
  struct Frame {
    KdNode* n;
    int state;  // 0: enter, 1: left done, 2: right done
  };
  std::vector<Frame> stack{{root_, 0}};
  while (!stack.empty()) {
    auto& f = stack.back();
    if (f.n == node) break;
    if (f.state == 0) {
      f.state = 1;
      if (f.n->left) stack.push_back({f.n->left, 0});
    } else if (f.state == 1) {
      f.state = 2;
      if (f.n->right) stack.push_back({f.n->right, 0});
    } else {
      stack.pop_back();
    }
  }
  if (stack.empty()) throw Error(ErrorCode::not_found, "node is not in the tree");
  KdNode* parent = stack[stack.size() - 2].n;
  (parent->left == node ? parent->left : parent->right) = nullptr;
  for (std::size_t i = 0; i + 1 < stack.size(); ++i) {
    stack[i].n->subtree_count -= node->subtree_count;
  }
  return node;
}

}  // namespace mdds
