#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <vector>

#include "mdds/hyperrectangle.hpp"
#include "mdds/rstar_tree.hpp"
#include "mdds/segment_format.hpp"
#include "mdds/uuid.hpp"

namespace mdds {

enum class Residency : std::uint8_t { in_memory, being_unloaded, not_in_memory };

std::string_view to_string(Residency r);

/// In-memory representative of a data segment: its bounding box, whether it
/// is resident and persisted, and how many queries currently use it.
///
/// Residency and the usage count share one atomic word, so a query that finds
/// the segment resident pins it with a single compare-and-swap and never
/// takes a lock. Transitions:
///
///   in_memory -> being_unloaded   begin_unload() / try_evict()
///   being_unloaded -> not_in_memory   once usage reaches zero; the thread
///                                     that observes zero frees the memory
///   not_in_memory -> in_memory    a (re)load inside acquire()
///
/// Memory is freed only in being_unloaded with usage zero, and acquire()
/// never hands out a segment without first completing any pending unload
/// and reload, so a returned pointer stays valid until the matching release.
class SegmentReference {
 public:
  using Loader = std::function<std::unique_ptr<const DataSegment>()>;

  /// A freshly assembled segment: resident, not yet persisted.
  SegmentReference(std::unique_ptr<const DataSegment> segment, std::uint64_t total_length);
  /// A segment known only from its file: persisted, not resident.
  SegmentReference(const Uuid& id, Hyperrectangle rect, std::uint64_t total_length,
                   std::uint32_t record_count);

  ~SegmentReference() { delete segment_.load(); }
  SegmentReference(const SegmentReference&) = delete;
  SegmentReference& operator=(const SegmentReference&) = delete;

  const Uuid& uuid() const { return uuid_; }
  const Hyperrectangle& rect() const { return rect_; }
  std::uint64_t total_length() const { return total_length_; }
  std::uint32_t record_count() const { return record_count_; }

  Residency residency() const;
  std::size_t usage_count() const;
  bool persisted() const { return persisted_.load(std::memory_order_acquire); }
  void mark_persisted() { persisted_.store(true, std::memory_order_release); }

  struct Acquired {
    const DataSegment* segment;
    bool loaded;  // false: it was already resident
  };

  /// Pins the segment, loading it first if it is not resident. Waits while
  /// an unload or another thread's load is in progress. Concurrent misses on
  /// the same reference share one load.
  Acquired acquire(const Loader& load);

  /// Unpins. If this was the last user of a segment marked being_unloaded,
  /// frees it and returns true.
  bool release();

  /// Writer path: in_memory -> being_unloaded. The memory is freed right away
  /// when unused, otherwise by the last release(). Requires persisted().
  /// Returns false when the segment is not in_memory.
  bool begin_unload();

  /// Cache path: unload only if resident, persisted and unused.
  bool try_evict();

  /// The resident segment without pinning it, for callers that know it cannot
  /// be unloaded (unpersisted segments never are).
  const DataSegment* resident_segment() const { return segment_.load(std::memory_order_acquire); }

  // CLOCK reference counter, saturating at 3.
  void touch();
  std::uint8_t clock_counter() const { return clock_.load(std::memory_order_relaxed); }
  /// Decrements a nonzero counter; returns false when it was already zero.
  bool clock_decrement();

  // Maintained by SegmentCache under its own lock.
  std::atomic<bool> cached{false};

 private:
  // State word: usage count << 8 | phase.
  enum Phase : std::uint64_t { kResident = 0, kUnloading = 1, kAbsent = 2, kLoading = 3 };
  static constexpr std::uint64_t kPhaseMask = 0xff;
  static constexpr std::uint64_t kOne = 0x100;
  static Phase phase(std::uint64_t w) { return static_cast<Phase>(w & kPhaseMask); }
  static std::uint64_t usage(std::uint64_t w) { return w >> 8; }

  void free_and_mark_absent();
  void wait_for_change(std::uint64_t observed);
  void notify();

  Uuid uuid_;
  Hyperrectangle rect_;
  std::uint64_t total_length_;
  std::uint32_t record_count_;

  std::atomic<std::uint64_t> state_;
  std::atomic<bool> persisted_;
  std::atomic<const DataSegment*> segment_{nullptr};
  std::atomic<std::uint8_t> clock_{0};

  std::mutex mutex_;  // only for sleeping on state changes
  std::condition_variable changed_;
};

using SegmentRefPtr = std::shared_ptr<SegmentReference>;

/// The first-level index: an R*-tree from segment bounding boxes to segment
/// references, behind a single mutex shared by ingestion and queries.
class GlobalIndex {
 public:
  explicit GlobalIndex(std::vector<FieldType> kinds, RStarParams params = {});

  void insert(SegmentRefPtr ref);
  /// References whose boxes intersect `query` (closed intervals).
  std::vector<SegmentRefPtr> search(const Hyperrectangle& query) const;
  std::vector<SegmentRefPtr> all() const;
  bool remove(const SegmentRefPtr& ref);
  std::size_t size() const;
  std::size_t height() const;
  std::string check_invariants() const;

 private:
  mutable std::mutex mutex_;
  RStarTree<SegmentRefPtr> tree_;
};

}  // namespace mdds
