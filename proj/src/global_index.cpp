#include "mdds/global_index.hpp"

namespace mdds {

std::string_view to_string(Residency r) {
  switch (r) {
    case Residency::in_memory: return "in_memory";
    case Residency::being_unloaded: return "being_unloaded";
    case Residency::not_in_memory: return "not_in_memory";
  }
  return "?";
}

SegmentReference::SegmentReference(std::unique_ptr<const DataSegment> segment,
                                   std::uint64_t total_length)
    : uuid_(segment->segment_uuid),
      rect_(segment->bounds),
      total_length_(total_length),
      record_count_(static_cast<std::uint32_t>(segment->record_count())),
      state_(kResident),
      persisted_(false),
      segment_(segment.release()) {}

SegmentReference::SegmentReference(const Uuid& id, Hyperrectangle rect, std::uint64_t total_length,
                                   std::uint32_t record_count)
    : uuid_(id),
      rect_(std::move(rect)),
      total_length_(total_length),
      record_count_(record_count),
      state_(kAbsent),
      persisted_(true) {}

Residency SegmentReference::residency() const {
  switch (phase(state_.load(std::memory_order_acquire))) {
    case kResident: return Residency::in_memory;
    case kUnloading: return Residency::being_unloaded;
    default: return Residency::not_in_memory;
  }
}

std::size_t SegmentReference::usage_count() const {
  return static_cast<std::size_t>(usage(state_.load(std::memory_order_acquire)));
}

SegmentReference::Acquired SegmentReference::acquire(const Loader& load) {
  std::uint64_t w = state_.load(std::memory_order_acquire);
  for (;;) {
    switch (phase(w)) {
      case kResident:
        if (state_.compare_exchange_weak(w, w + kOne, std::memory_order_acq_rel)) {
          return {segment_.load(std::memory_order_acquire), false};
        }
        break;
      case kUnloading:
      case kLoading:
        wait_for_change(w);
        w = state_.load(std::memory_order_acquire);
        break;
      case kAbsent: {
        if (!state_.compare_exchange_weak(w, kLoading, std::memory_order_acq_rel)) break;
        std::unique_ptr<const DataSegment> seg;
        try {
          seg = load();
        } catch (...) {
          state_.store(kAbsent, std::memory_order_release);
          notify();
          throw;
        }
        const DataSegment* p = seg.release();
        segment_.store(p, std::memory_order_release);
        state_.store(kResident | kOne, std::memory_order_release);
        notify();
        return {p, true};
      }
    }
  }
}

bool SegmentReference::release() {
  const std::uint64_t w = state_.fetch_sub(kOne, std::memory_order_acq_rel);
  if (usage(w) == 0) throw Error(ErrorCode::invalid_argument, "release without acquire");
  if (phase(w) == kUnloading && usage(w) == 1) {
    free_and_mark_absent();
    return true;
  }
  return false;
}

bool SegmentReference::begin_unload() {
  std::uint64_t w = state_.load(std::memory_order_acquire);
  for (;;) {
    if (phase(w) != kResident) return false;
    const std::uint64_t next = (w & ~kPhaseMask) | kUnloading;
    if (state_.compare_exchange_weak(w, next, std::memory_order_acq_rel)) {
      if (usage(w) == 0) free_and_mark_absent();
      return true;
    }
  }
}

bool SegmentReference::try_evict() {
  if (!persisted()) return false;
  std::uint64_t expected = kResident;
  if (!state_.compare_exchange_strong(expected, kUnloading, std::memory_order_acq_rel)) return false;
  free_and_mark_absent();
  return true;
}

void SegmentReference::free_and_mark_absent() {
  delete segment_.exchange(nullptr, std::memory_order_acq_rel);
  state_.store(kAbsent, std::memory_order_release);
  notify();
}

void SegmentReference::wait_for_change(std::uint64_t observed) {
  std::unique_lock lk(mutex_);
  changed_.wait(lk, [&] { return phase(state_.load(std::memory_order_acquire)) != phase(observed); });
}

void SegmentReference::notify() {
  { std::lock_guard lk(mutex_); }
  changed_.notify_all();
}

void SegmentReference::touch() {
  std::uint8_t c = clock_.load(std::memory_order_relaxed);
  while (c < 3 && !clock_.compare_exchange_weak(c, static_cast<std::uint8_t>(c + 1),
                                                std::memory_order_relaxed)) {
  }
}

bool SegmentReference::clock_decrement() {
  std::uint8_t c = clock_.load(std::memory_order_relaxed);
  while (c > 0) {
    if (clock_.compare_exchange_weak(c, static_cast<std::uint8_t>(c - 1), std::memory_order_relaxed)) {
      return true;
    }
  }
  return false;
}

GlobalIndex::GlobalIndex(std::vector<FieldType> kinds, RStarParams params)
    : tree_(std::move(kinds), params) {}

void GlobalIndex::insert(SegmentRefPtr ref) {
  std::lock_guard lk(mutex_);
  const Hyperrectangle& rect = ref->rect();
  tree_.insert(rect, ref);
}

std::vector<SegmentRefPtr> GlobalIndex::search(const Hyperrectangle& query) const {
  std::lock_guard lk(mutex_);
  return tree_.search(query);
}

std::vector<SegmentRefPtr> GlobalIndex::all() const {
  std::lock_guard lk(mutex_);
  std::vector<SegmentRefPtr> out;
  out.reserve(tree_.size());
  tree_.for_each([&](const Hyperrectangle&, const SegmentRefPtr& r) { out.push_back(r); });
  return out;
}

bool GlobalIndex::remove(const SegmentRefPtr& ref) {
  std::lock_guard lk(mutex_);
  return tree_.remove(ref->rect(), ref);
}

std::size_t GlobalIndex::size() const {
  std::lock_guard lk(mutex_);
  return tree_.size();
}

std::size_t GlobalIndex::height() const {
  std::lock_guard lk(mutex_);
  return tree_.height();
}

std::string GlobalIndex::check_invariants() const {
  std::lock_guard lk(mutex_);
  return tree_.check_invariants();
}

}  // namespace mdds
