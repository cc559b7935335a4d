#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <vector>

#include "mdds/record_model.hpp"

namespace mdds {

/// Handle to a record inside a chunk. Segmentation only ever moves handles;
/// record bytes are copied once, when a segment is assembled.
using RecordRef = const std::byte*;

using Rng = std::mt19937_64;

/// Uniform integer in [0, n) (Lemire's multiply-shift; n > 0).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

struct KdNode {
  RecordRef record = nullptr;
  KdNode* left = nullptr;
  KdNode* right = nullptr;
  std::uint32_t subtree_count = 0;  // nodes in this subtree, including this one
};

inline std::uint32_t subtree_count(const KdNode* n) { return n ? n->subtree_count : 0; }

/// Branching dimension of tree level `level` given the dimension at the root.
inline std::size_t level_dim(std::size_t root_dim, std::size_t level, std::size_t dims) {
  return (root_dim + level) % dims;
}

/// Pre-allocated kd-tree nodes shared by all ingestion tasks.
///
/// Nodes are handed out in batches through a Lease, which returns them on
/// destruction. The free list is guarded by a mutex that is only ever held
/// for a single batch push or pop, so releases never wait behind an
/// unbounded acquire.
class NodePool {
 public:
  class Lease {
   public:
    Lease() = default;
    Lease(Lease&& other) noexcept;
    Lease& operator=(Lease&& other) noexcept;
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;
    ~Lease();

    /// Next unused node of the lease, reset to an empty leaf.
    KdNode* next();
    std::size_t size() const { return nodes_.size(); }
    std::size_t used() const { return used_; }

   private:
    friend class NodePool;
    Lease(NodePool* pool, std::vector<KdNode*> nodes) : pool_(pool), nodes_(std::move(nodes)) {}

    NodePool* pool_ = nullptr;
    std::vector<KdNode*> nodes_;
    std::size_t used_ = 0;
  };

  /// Capacity = max_chunk_records * max_ingestor_threads; both must be >= 1.
  NodePool(std::size_t max_chunk_records, std::size_t max_ingestor_threads);
  NodePool(const NodePool&) = delete;
  NodePool& operator=(const NodePool&) = delete;

  std::size_t capacity() const { return capacity_; }
  std::size_t free_count() const;

  /// Throws Error(pool_exhausted) when fewer than n nodes are free.
  Lease acquire(std::size_t n);

 private:
  void release(std::vector<KdNode*>& nodes);

  std::size_t capacity_;
  std::unique_ptr<KdNode[]> storage_;
  mutable std::mutex mutex_;
  std::vector<KdNode*> free_;
};

enum class BulkloadMode {
  full_recursive,   // median-of-M pivot at every level
  root_level_only,  // median-of-M at the root, middle element below
};

/// In-memory kd-tree whose nodes belong to a pool lease.
class KdTree {
 public:
  KdTree() = default;
  KdTree(NodePool::Lease lease, KdNode* root, std::size_t root_dim, std::size_t dims)
      : lease_(std::move(lease)), root_(root), root_dim_(root_dim), dims_(dims) {}

  KdNode* root() const { return root_; }
  std::size_t root_dim() const { return root_dim_; }
  std::size_t dims() const { return dims_; }
  std::size_t size() const { return subtree_count(root_); }
  bool empty() const { return root_ == nullptr; }

  /// Unlinks `node` from its parent and subtracts its count from every
  /// ancestor. The detached nodes stay valid for the lifetime of the tree.
  /// Throws Error(not_found) if `node` is not reachable from the root.
  KdNode* detach_subtree(KdNode* node);

  /// Returns all nodes to the pool.
  void reset() { *this = KdTree(); }

 private:
  NodePool::Lease lease_;
  KdNode* root_ = nullptr;
  std::size_t root_dim_ = 0;
  std::size_t dims_ = 0;
};

/// Index of the median, on `dim`, of M records sampled without replacement
/// (or of every record when there are at most M). M must be odd and >= 1.
std::size_t select_pivot(std::span<const RecordRef> records, const DimAccessor& dim, unsigned m,
                         Rng& rng);

/// Reorders handles so that [0, split) are <= the pivot's value, `split`
/// holds the pivot record and (split, end) are greater. Returns split.
std::size_t partition_level(std::span<RecordRef> records, const DimAccessor& dim,
                            std::size_t pivot_index);

/// Builds a kd-tree over `records` (reordering the handle slice in place),
/// splitting on dims round-robin from `root_dim`. Ties go left.
KdTree bulkload(std::span<RecordRef> records, std::span<const DimAccessor> dims,
                std::size_t root_dim, BulkloadMode mode, NodePool& pool, Rng& rng,
                unsigned pivot_samples = 3);

}  // namespace mdds
