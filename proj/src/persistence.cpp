#include "mdds/persistence.hpp"

#include <algorithm>
#include <fstream>

namespace fs = std::filesystem;

namespace mdds {

namespace {

constexpr std::string_view kExtension = ".mdseg";
constexpr std::string_view kTempSuffix = ".tmp";

}  // namespace

SegmentStore::SegmentStore(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create " + dir_.string() + ": " + ec.message());
}

fs::path SegmentStore::path_for(const Uuid& id) const {
  return dir_ / (to_string(id) + std::string(kExtension));
}

void SegmentStore::set_fault_hook(FaultHook hook) {
  std::lock_guard lk(fault_mutex_);
  fault_ = std::move(hook);
}

void SegmentStore::write(const Uuid& id, std::span<const std::byte> bytes) {
  FaultHook hook;
  {
    std::lock_guard lk(fault_mutex_);
    hook = fault_;
  }
  const fs::path final_path = path_for(id);
  fs::path tmp = final_path;
  tmp += kTempSuffix;
  try {
    if (hook) hook("write", id);
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorCode::io_error, "cannot open " + tmp.string());
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      out.flush();
      if (!out) throw Error(ErrorCode::io_error, "short write to " + tmp.string());
    }
    if (hook) hook("rename", id);
    std::error_code ec;
    fs::rename(tmp, final_path, ec);
    if (ec) throw Error(ErrorCode::io_error, "rename failed for " + tmp.string() + ": " + ec.message());
  } catch (...) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw;
  }
}

void SegmentStore::write(const DataSegment& seg, const RecordDescriptor& desc) {
  write(seg.segment_uuid, serialize(seg, desc));
}

std::vector<std::byte> SegmentStore::read_bytes(const Uuid& id) const {
  const fs::path p = path_for(id);
  std::ifstream in(p, std::ios::binary | std::ios::ate);
  if (!in) throw Error(ErrorCode::not_found, "segment file missing: " + p.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<std::byte> bytes(size);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw Error(ErrorCode::io_error, "read failed: " + p.string());
  reads_.fetch_add(1, std::memory_order_relaxed);
  return bytes;
}

DataSegment SegmentStore::read(const Uuid& id, const DescriptorRegistry& registry) const {
  auto seg = deserialize(read_bytes(id), registry);
  if (seg.segment_uuid != id) {
    throw Error(ErrorCode::corrupt_segment, "segment uuid does not match file name " + to_string(id));
  }
  return seg;
}

SegmentSummary SegmentStore::read_summary(const Uuid& id, const RecordDescriptor& desc) const {
  const fs::path p = path_for(id);
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "segment file missing: " + p.string());
  std::vector<std::byte> prefix(summary_prefix_size(desc.dim_count()));
  in.read(reinterpret_cast<char*>(prefix.data()), static_cast<std::streamsize>(prefix.size()));
  prefix.resize(static_cast<std::size_t>(in.gcount()));
  auto summary = mdds::read_summary(prefix, desc);
  std::error_code ec;
  const auto size = fs::file_size(p, ec);
  if (ec || size != summary.total_length) {
    throw Error(ErrorCode::corrupt_segment, "file size does not match total_length: " + p.string());
  }
  return summary;
}

void SegmentStore::remove(const Uuid& id) {
  std::error_code ec;
  if (!fs::remove(path_for(id), ec)) {
    if (ec) throw Error(ErrorCode::io_error, "cannot delete " + path_for(id).string() + ": " + ec.message());
    throw Error(ErrorCode::not_found, "segment file missing: " + path_for(id).string());
  }
}

bool SegmentStore::exists(const Uuid& id) const { return fs::exists(path_for(id)); }

std::vector<Uuid> SegmentStore::list() const {
  std::vector<Uuid> out;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (name.size() <= kExtension.size() || !name.ends_with(kExtension)) continue;
    if (auto id = parse_uuid(std::string_view(name).substr(0, name.size() - kExtension.size()))) {
      out.push_back(*id);
    }
  }
  return out;
}

std::size_t SegmentStore::remove_temp_files() {
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    const auto name = entry.path().filename().string();
    if (name.ends_with(std::string(kExtension) + std::string(kTempSuffix))) {
      std::error_code ec;
      if (fs::remove(entry.path(), ec)) ++n;
    }
  }
  return n;
}

SegmentCache::SegmentCache(std::uint64_t capacity_bytes) : capacity_(capacity_bytes) {}

std::uint64_t SegmentCache::bytes() const { return bytes_.load(std::memory_order_acquire); }

std::size_t SegmentCache::size() const {
  std::lock_guard lk(mutex_);
  return ring_.size();
}

bool SegmentCache::contains(const SegmentReference& ref) const {
  return ref.cached.load(std::memory_order_acquire);
}

void SegmentCache::reset_stats() {
  hits_ = 0;
  misses_ = 0;
  evictions_ = 0;
}

const DataSegment* SegmentCache::get(const SegmentRefPtr& ref, const SegmentReference::Loader& load) {
  auto acquired = ref->acquire(load);
  (acquired.loaded ? misses_ : hits_).fetch_add(1, std::memory_order_relaxed);
  ref->touch();
  if (!ref->cached.load(std::memory_order_acquire) && ref->persisted()) {
    std::lock_guard lk(mutex_);
    admit_locked(ref);
  }
  return acquired.segment;
}

void SegmentCache::put(const SegmentRefPtr& ref) {
  ref->release();
  if (bytes_.load(std::memory_order_acquire) > capacity_) {
    std::lock_guard lk(mutex_);
    evict_locked();
  }
}

void SegmentCache::unload_if_uncached(const SegmentRefPtr& ref) {
  std::lock_guard lk(mutex_);
  if (!ref->cached.load(std::memory_order_acquire)) ref->begin_unload();
}

void SegmentCache::forget(const SegmentRefPtr& ref) {
  std::lock_guard lk(mutex_);
  auto it = std::find(ring_.begin(), ring_.end(), ref);
  if (it != ring_.end()) erase_slot_locked(static_cast<std::size_t>(it - ring_.begin()));
}

void SegmentCache::admit_locked(const SegmentRefPtr& ref) {
  if (ref->cached.load(std::memory_order_acquire) || ref->residency() != Residency::in_memory) return;
  ring_.push_back(ref);
  ref->cached.store(true, std::memory_order_release);
  bytes_.fetch_add(ref->total_length(), std::memory_order_acq_rel);
  evict_locked();
}

void SegmentCache::erase_slot_locked(std::size_t slot) {
  ring_[slot]->cached.store(false, std::memory_order_release);
  bytes_.fetch_sub(ring_[slot]->total_length(), std::memory_order_acq_rel);
  ring_.erase(ring_.begin() + static_cast<std::ptrdiff_t>(slot));
  if (hand_ > slot) --hand_;
  if (hand_ >= ring_.size()) hand_ = 0;
}

// Sweep the hand: a nonzero counter is decremented and skipped; a zero
// counter on an unpinned entry is evicted. Counters saturate at 3, so four
// revolutions without an eviction mean every remaining entry is pinned.
void SegmentCache::evict_locked() {
  std::size_t idle_steps = 0;
  while (bytes_.load(std::memory_order_relaxed) > capacity_ && !ring_.empty() &&
         idle_steps <= 4 * ring_.size()) {
    if (hand_ >= ring_.size()) hand_ = 0;
    SegmentReference& r = *ring_[hand_];
    if (!r.clock_decrement() && r.try_evict()) {
      erase_slot_locked(hand_);
      evictions_.fetch_add(1, std::memory_order_relaxed);
      idle_steps = 0;
      continue;
    }
    ++hand_;
    ++idle_steps;
  }
}

}  // namespace mdds
