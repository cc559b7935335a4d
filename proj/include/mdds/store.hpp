#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include "mdds/global_index.hpp"
#include "mdds/persistence.hpp"
#include "mdds/query.hpp"
#include "mdds/segmentation.hpp"

namespace mdds {

struct IngestConfig {
  std::size_t max_chunk_records = 10'000;
  SegmentationScheme scheme = SegmentationScheme::random;
  SegmentationConfig segmentation;
  std::size_t ingestor_threads = 4;
  std::size_t writer_threads = 1;
  std::chrono::milliseconds writer_period{100};
  std::size_t writer_batch_max = 64;
  std::size_t high_water_mark = 10'000;  // queued segments before ingest blocks

  void validate() const;
};

struct StoreConfig {
  std::filesystem::path data_dir;
  IngestConfig ingest;
  std::uint64_t cache_capacity = std::uint64_t{1} << 30;
  std::uint64_t seed = 0x6d646473;
  bool background_writers = true;
};

/// FIFO of segments waiting to be written; many producers, many consumers.
/// push() blocks while the queue holds high_water_mark or more entries.
class WriteQueue {
 public:
  explicit WriteQueue(std::size_t high_water_mark);

  void push(SegmentRefPtr ref);
  /// Up to `max` references, oldest first; never blocks.
  std::vector<SegmentRefPtr> pop_batch(std::size_t max);
  /// Puts references back at the head, keeping their order.
  void requeue_front(std::vector<SegmentRefPtr> refs);
  /// Marks `n` popped references as handled (written or given up on).
  void done(std::size_t n);
  std::size_t size() const;
  /// Nothing queued and nothing popped but not yet done.
  bool idle() const;
  std::size_t high_water_mark() const { return high_water_; }
  /// Wakes producers blocked in push() and makes future pushes non-blocking.
  void close();

 private:
  std::size_t high_water_;
  mutable std::mutex mutex_;
  std::condition_variable not_full_;
  std::deque<SegmentRefPtr> items_;
  std::size_t in_flight_ = 0;
  bool closed_ = false;
};

struct WriteFailure {
  Uuid segment;
  std::string message;
  std::size_t consecutive_failures;
};

struct FeederReport {
  std::size_t records = 0;
  std::size_t chunks = 0;
  std::size_t segments = 0;
  double seconds = 0.0;
  double records_per_second = 0.0;
  std::optional<std::string> error;
};

struct FeedReport {
  std::size_t records = 0;
  std::size_t chunks = 0;
  std::size_t segments = 0;
  double seconds = 0.0;
  double records_per_second = 0.0;
  std::vector<FeederReport> feeders;

  bool ok() const;
};

/// The storage engine: one record type, one data directory.
///
/// Ingestion segments each chunk, assembles the segments, registers them in
/// the global index (queryable from then on) and queues them for the writer
/// tasks, which persist them and drop the in-memory copy unless the cache
/// holds it. Opening an existing directory re-indexes its segment files.
class DataStore : public SegmentSource {
 public:
  DataStore(std::shared_ptr<const RecordDescriptor> desc, StoreConfig config);
  ~DataStore() override;
  DataStore(const DataStore&) = delete;
  DataStore& operator=(const DataStore&) = delete;

  const RecordDescriptor& descriptor() const override { return *desc_; }
  const StoreConfig& config() const { return config_; }

  /// `records` must hold whole records of this store's type.
  std::vector<Uuid> ingest_chunk(std::span<const std::byte> records);
  /// Also checks the chunk's record type.
  std::vector<Uuid> ingest_chunk(const Chunk& chunk);

  /// One writer wakeup: persists up to writer_batch_max queued segments.
  /// A failed write leaves that segment (and the rest of the batch) queued
  /// and is reported to the monitor.
  std::size_t writer_tick();
  /// Writes everything queued; rethrows the first write failure.
  void flush();

  /// Splits `records` into even slices, one per feeder thread, each feeding
  /// max_chunk_records-sized chunks.
  FeedReport feed_binary(std::span<const std::byte> records, std::size_t feeders);
  /// As feed_binary, but from CSV text (one record per line); parsing runs on
  /// the feeder threads.
  FeedReport feed_csv(std::string_view text, std::size_t feeders, bool skip_header = false);

  QueryResult query(std::string_view text, IteratorKind kind = IteratorKind::kdtree);
  QueryResult execute(const RangeQuery& q, IteratorKind kind = IteratorKind::kdtree);

  // SegmentSource
  std::vector<SegmentRefPtr> search(const Hyperrectangle& rect) const override;
  const DataSegment* pin(const SegmentRefPtr& ref) override;
  void unpin(const SegmentRefPtr& ref) override;

  GlobalIndex& index() { return index_; }
  const GlobalIndex& index() const { return index_; }
  SegmentCache& cache() { return cache_; }
  SegmentStore& files() { return files_; }
  WriteQueue& write_queue() { return queue_; }
  NodePool& node_pool() { return pool_; }
  const DescriptorRegistry& registry() const { return registry_; }

  void set_monitor(std::function<void(const WriteFailure&)> monitor);
  std::uint64_t segments_written() const { return written_.load(); }
  std::uint64_t records_ingested() const { return ingested_.load(); }

  /// Stops the background writers (queued segments stay queued).
  void stop_writers();

 private:
  void recover();
  std::size_t tick(bool& failed);
  void writer_loop();
  std::unique_ptr<const DataSegment> load(const Uuid& id) const;
  void report(const WriteFailure& f);
  FeedReport run_feeders(std::size_t feeders, const std::function<FeederReport(std::size_t)>& body);

  std::shared_ptr<const RecordDescriptor> desc_;
  StoreConfig config_;
  DescriptorRegistry registry_;
  GlobalIndex index_;
  SegmentStore files_;
  SegmentCache cache_;
  WriteQueue queue_;
  NodePool pool_;
  std::counting_semaphore<> ingest_slots_;

  std::atomic<std::uint64_t> chunk_seq_{0};
  std::atomic<std::uint64_t> written_{0};
  std::atomic<std::uint64_t> ingested_{0};
  std::atomic<std::size_t> consecutive_failures_{0};
  std::mutex error_mutex_;
  std::string last_error_;

  std::mutex monitor_mutex_;
  std::function<void(const WriteFailure&)> monitor_;

  std::mutex stop_mutex_;
  std::condition_variable stop_cv_;
  bool stopping_ = false;
  std::vector<std::thread> writers_;
};

}  // namespace mdds
