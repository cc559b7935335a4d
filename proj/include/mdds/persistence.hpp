#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mdds/global_index.hpp"
#include "mdds/segment_format.hpp"

namespace mdds {

/// One file per segment, `<uuid>.mdseg`, in a flat directory. Writes go to a
/// `.tmp` name first and are renamed into place, so a crash never leaves a
/// partial `.mdseg` behind.
class SegmentStore {
 public:
  /// Called at "write" (before any byte is written) and "rename" (after the
  /// temp file is complete). Throwing from it simulates a failure there.
  using FaultHook = std::function<void(std::string_view stage, const Uuid& id)>;

  explicit SegmentStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path path_for(const Uuid& id) const;

  void write(const Uuid& id, std::span<const std::byte> bytes);
  void write(const DataSegment& seg, const RecordDescriptor& desc);
  std::vector<std::byte> read_bytes(const Uuid& id) const;
  DataSegment read(const Uuid& id, const DescriptorRegistry& registry) const;
  SegmentSummary read_summary(const Uuid& id, const RecordDescriptor& desc) const;
  void remove(const Uuid& id);
  bool exists(const Uuid& id) const;

  /// Uuids of all complete segment files, in directory order.
  std::vector<Uuid> list() const;
  /// Deletes leftover temp files of interrupted writes; returns how many.
  std::size_t remove_temp_files();

  void set_fault_hook(FaultHook hook);
  std::uint64_t reads() const { return reads_.load(std::memory_order_relaxed); }

 private:
  std::filesystem::path dir_;
  FaultHook fault_;
  std::mutex fault_mutex_;
  mutable std::atomic<std::uint64_t> reads_{0};
};

/// Byte-bounded cache of resident, persisted segments with generalized CLOCK
/// replacement. The per-entry counter lives in the SegmentReference, so a hit
/// (already resident) only bumps an atomic and never takes the cache lock.
/// Misses, admissions and evictions are serialized by the cache mutex.
class SegmentCache {
 public:
  explicit SegmentCache(std::uint64_t capacity_bytes);

  std::uint64_t capacity() const { return capacity_; }
  std::uint64_t bytes() const;
  std::size_t size() const;
  bool contains(const SegmentReference& ref) const;

  /// Pins `ref` (loading on a miss) and records the access. Persisted
  /// segments are admitted; eviction runs until the cache fits or every
  /// remaining entry is pinned.
  const DataSegment* get(const SegmentRefPtr& ref, const SegmentReference::Loader& load);
  /// Unpins. An unpinned segment that did not fit is evicted here, and a
  /// segment whose unload was deferred by a writer is freed here.
  void put(const SegmentRefPtr& ref);

  /// Writer path after persisting: unload unless the cache holds the segment.
  /// Atomic with respect to admission.
  void unload_if_uncached(const SegmentRefPtr& ref);

  /// Removes a reference from the cache (index teardown).
  void forget(const SegmentRefPtr& ref);

  std::uint64_t hits() const { return hits_.load(std::memory_order_relaxed); }
  std::uint64_t misses() const { return misses_.load(std::memory_order_relaxed); }
  std::uint64_t evictions() const { return evictions_.load(std::memory_order_relaxed); }
  void reset_stats();

 private:
  void admit_locked(const SegmentRefPtr& ref);
  void evict_locked();
  void erase_slot_locked(std::size_t slot);

  std::uint64_t capacity_;
  mutable std::mutex mutex_;
  std::vector<SegmentRefPtr> ring_;
  std::size_t hand_ = 0;
  std::atomic<std::uint64_t> bytes_{0};
  std::atomic<std::uint64_t> hits_{0}, misses_{0}, evictions_{0};
};

}  // namespace mdds
