#include "mdds/store.hpp"

#include <algorithm>

namespace mdds {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::vector<FieldType> dim_kinds(const RecordDescriptor& desc) {
  std::vector<FieldType> kinds;
  for (const auto& d : desc.dims()) kinds.push_back(d.kind);
  return kinds;
}

}  // namespace

void IngestConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::invalid_argument, what);
  };
  require(max_chunk_records >= 1, "max-chunk-records must be >= 1");
  require(ingestor_threads >= 1, "ingestor-threads must be >= 1");
  require(writer_threads >= 1, "writer-threads must be >= 1");
  require(writer_period.count() > 0, "writer-period-ms must be > 0");
  require(writer_batch_max >= 1, "writer-batch-max must be >= 1");
  require(high_water_mark >= 1, "high-water-mark must be >= 1");
  require(segmentation.max_segment_size >= 1, "target-segment-size must be >= 1");
  require(segmentation.overpacking >= 1.0, "overpacking must be >= 1");
  require(segmentation.pivot_samples % 2 == 1, "pivot sample count must be odd");
}

// ---------------------------------------------------------------------------

WriteQueue::WriteQueue(std::size_t high_water_mark) : high_water_(high_water_mark) {}

void WriteQueue::push(SegmentRefPtr ref) {
  std::unique_lock lk(mutex_);
  not_full_.wait(lk, [&] { return closed_ || items_.size() < high_water_; });
  items_.push_back(std::move(ref));
}

std::vector<SegmentRefPtr> WriteQueue::pop_batch(std::size_t max) {
  std::vector<SegmentRefPtr> out;
  {
    std::lock_guard lk(mutex_);
    const std::size_t n = std::min(max, items_.size());
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(std::move(items_.front()));
      items_.pop_front();
    }
    in_flight_ += n;
  }
  if (!out.empty()) not_full_.notify_all();
  return out;
}

void WriteQueue::requeue_front(std::vector<SegmentRefPtr> refs) {
  std::lock_guard lk(mutex_);
  in_flight_ -= std::min(in_flight_, refs.size());
  items_.insert(items_.begin(), std::make_move_iterator(refs.begin()), std::make_move_iterator(refs.end()));
}

void WriteQueue::done(std::size_t n) {
  std::lock_guard lk(mutex_);
  in_flight_ -= std::min(in_flight_, n);
}

std::size_t WriteQueue::size() const {
  std::lock_guard lk(mutex_);
  return items_.size();
}

bool WriteQueue::idle() const {
  std::lock_guard lk(mutex_);
  return items_.empty() && in_flight_ == 0;
}

void WriteQueue::close() {
  {
    std::lock_guard lk(mutex_);
    closed_ = true;
  }
  not_full_.notify_all();
}

bool FeedReport::ok() const {
  return std::all_of(feeders.begin(), feeders.end(), [](const FeederReport& f) { return !f.error; });
}

// ---------------------------------------------------------------------------

DataStore::DataStore(std::shared_ptr<const RecordDescriptor> desc, StoreConfig config)
    : desc_(std::move(desc)),
      config_((config.ingest.validate(), std::move(config))),
      registry_(desc_),
      index_(dim_kinds(*desc_)),
      files_(config_.data_dir),
      cache_(config_.cache_capacity),
      queue_(config_.ingest.high_water_mark),
      pool_(config_.ingest.max_chunk_records, config_.ingest.ingestor_threads),
      ingest_slots_(static_cast<std::ptrdiff_t>(config_.ingest.ingestor_threads)) {
  recover();
  if (config_.background_writers) {
    for (std::size_t i = 0; i < config_.ingest.writer_threads; ++i) {
      writers_.emplace_back([this] { writer_loop(); });
    }
  }
}

DataStore::~DataStore() {
  stop_writers();
  try {
    flush();
  } catch (...) {
  }
  queue_.close();
}

void DataStore::recover() {
  files_.remove_temp_files();
  for (const Uuid& id : files_.list()) {
    SegmentSummary s = files_.read_summary(id, *desc_);
    if (s.segment_uuid != id) {
      throw Error(ErrorCode::corrupt_segment, "segment uuid does not match file name " + to_string(id));
    }
    index_.insert(std::make_shared<SegmentReference>(id, std::move(s.bounds), s.total_length, s.record_count));
  }
}

std::vector<Uuid> DataStore::ingest_chunk(std::span<const std::byte> records) {
  return ingest_chunk(Chunk::of(records, *desc_));
}

std::vector<Uuid> DataStore::ingest_chunk(const Chunk& chunk) {
  if (chunk.desc && chunk.desc->type_uuid() != desc_->type_uuid()) {
    throw Error(ErrorCode::schema_error, "chunk record type " + to_string(chunk.desc->type_uuid()) +
                                             " does not match the store's " + to_string(desc_->type_uuid()));
  }
  if (chunk.count > config_.ingest.max_chunk_records) {
    throw Error(ErrorCode::invalid_argument, "chunk of " + std::to_string(chunk.count) +
                                                 " records exceeds max-chunk-records " +
                                                 std::to_string(config_.ingest.max_chunk_records));
  }
  if (chunk.count == 0) return {};
  check_no_nan_dims(chunk.records.first(chunk.count * desc_->record_size()), *desc_);

  const Chunk c{chunk.records, chunk.count, desc_.get()};
  const auto& seg_cfg = config_.ingest.segmentation;
  std::vector<std::unique_ptr<const DataSegment>> segments;
  {
    ingest_slots_.acquire();
    struct SlotGuard {
      std::counting_semaphore<>& s;
      ~SlotGuard() { s.release(); }
    } guard{ingest_slots_};

    Rng rng(splitmix64(config_.seed ^ splitmix64(chunk_seq_.fetch_add(1))));
    if (config_.ingest.scheme == SegmentationScheme::random) {
      SegmentPlan plan = segment_random(c, seg_cfg, rng);
      for (auto& g : plan.groups) {
        if (g.records.empty()) continue;
        segments.push_back(std::make_unique<const DataSegment>(
            assemble_with_fresh_tree(g.records, *desc_, pool_, rng, seg_cfg.pivot_samples, &g.bounds)));
      }
    } else {
      SegmentPlan plan = segment_kdtree(c, seg_cfg, pool_, rng);
      for (auto& g : plan.groups) {
        segments.push_back(std::make_unique<const DataSegment>(
            assemble(g.records, *desc_, g.initial_dim, g.tree, &g.bounds)));
      }
    }
  }

  std::vector<SegmentRefPtr> refs;
  std::vector<Uuid> ids;
  refs.reserve(segments.size());
  ids.reserve(segments.size());
  for (auto& seg : segments) {
    const std::uint64_t len = seg->total_length();
    ids.push_back(seg->segment_uuid);
    refs.push_back(std::make_shared<SegmentReference>(std::move(seg), len));
  }
  for (const auto& r : refs) index_.insert(r);
  ingested_.fetch_add(chunk.count);
  for (auto& r : refs) queue_.push(std::move(r));
  return ids;
}

std::size_t DataStore::writer_tick() {
  bool failed = false;
  return tick(failed);
}

std::size_t DataStore::tick(bool& failed) {
  auto batch = queue_.pop_batch(config_.ingest.writer_batch_max);
  std::size_t written = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const SegmentRefPtr& ref = batch[i];
    try {
      files_.write(*ref->resident_segment(), *desc_);
    } catch (const std::exception& e) {
      failed = true;
      const WriteFailure f{ref->uuid(), e.what(), ++consecutive_failures_};
      {
        std::lock_guard lk(error_mutex_);
        last_error_ = e.what();
      }
      queue_.done(i);
      queue_.requeue_front(std::vector<SegmentRefPtr>(batch.begin() + static_cast<std::ptrdiff_t>(i), batch.end()));
      report(f);
      written_.fetch_add(written);
      return written;
    }
    ref->mark_persisted();
    cache_.unload_if_uncached(ref);
    ++written;
    consecutive_failures_ = 0;
  }
  queue_.done(batch.size());
  written_.fetch_add(written);
  return written;
}

void DataStore::flush() {
  while (!queue_.idle()) {
    bool failed = false;
    const std::size_t popped_before = queue_.size();
    tick(failed);
    if (failed) {
      std::lock_guard lk(error_mutex_);
      throw Error(ErrorCode::io_error, "segment write failed: " + last_error_);
    }
    if (popped_before == 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
}

void DataStore::writer_loop() {
  const auto period = config_.ingest.writer_period;
  auto delay = period;
  std::unique_lock lk(stop_mutex_);
  while (!stopping_) {
    if (stop_cv_.wait_until(lk, std::chrono::system_clock::now() + delay, [&] { return stopping_; })) break;
    lk.unlock();
    bool failed = false;
    try {
      tick(failed);
    } catch (...) {
      failed = true;
    }
    lk.lock();
    delay = failed ? std::min(delay * 2, period * 10) : period;
  }
}

void DataStore::stop_writers() {
  {
    std::lock_guard lk(stop_mutex_);
    stopping_ = true;
  }
  stop_cv_.notify_all();
  for (auto& t : writers_) t.join();
  writers_.clear();
}

void DataStore::set_monitor(std::function<void(const WriteFailure&)> monitor) {
  std::lock_guard lk(monitor_mutex_);
  monitor_ = std::move(monitor);
}

void DataStore::report(const WriteFailure& f) {
  std::function<void(const WriteFailure&)> m;
  {
    std::lock_guard lk(monitor_mutex_);
    m = monitor_;
  }
  if (m) m(f);
}

std::unique_ptr<const DataSegment> DataStore::load(const Uuid& id) const {
  return std::make_unique<const DataSegment>(files_.read(id, registry_));
}

std::vector<SegmentRefPtr> DataStore::search(const Hyperrectangle& rect) const { return index_.search(rect); }

const DataSegment* DataStore::pin(const SegmentRefPtr& ref) {
  return cache_.get(ref, [this, id = ref->uuid()] { return load(id); });
}

void DataStore::unpin(const SegmentRefPtr& ref) { cache_.put(ref); }

QueryResult DataStore::query(std::string_view text, IteratorKind kind) {
  return mdds::execute(*this, parse_query(text, *desc_), kind);
}

QueryResult DataStore::execute(const RangeQuery& q, IteratorKind kind) { return mdds::execute(*this, q, kind); }

// ---------------------------------------------------------------------------
// Feeding

FeedReport DataStore::run_feeders(std::size_t feeders, const std::function<FeederReport(std::size_t)>& body) {
  if (feeders == 0) throw Error(ErrorCode::invalid_argument, "need at least one feeder");
  FeedReport report;
  report.feeders.resize(feeders);
  const auto start = Clock::now();
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < feeders; ++i) {
    threads.emplace_back([&, i] { report.feeders[i] = body(i); });
  }
  for (auto& t : threads) t.join();
  report.seconds = seconds_since(start);
  for (const auto& f : report.feeders) {
    report.records += f.records;
    report.chunks += f.chunks;
    report.segments += f.segments;
  }
  report.records_per_second = report.seconds > 0 ? static_cast<double>(report.records) / report.seconds : 0.0;
  return report;
}

FeedReport DataStore::feed_binary(std::span<const std::byte> records, std::size_t feeders) {
  const std::size_t rs = desc_->record_size();
  if (records.size() % rs != 0) {
    throw Error(ErrorCode::invalid_argument, "input length is not a multiple of the record size");
  }
  const std::size_t n = records.size() / rs;
  const std::size_t chunk = config_.ingest.max_chunk_records;
  return run_feeders(feeders, [&](std::size_t i) {
    FeederReport r;
    const std::size_t begin = n * i / feeders;
    const std::size_t end = n * (i + 1) / feeders;
    const auto start = Clock::now();
    try {
      for (std::size_t at = begin; at < end; at += chunk) {
        const std::size_t count = std::min(chunk, end - at);
        r.segments += ingest_chunk(records.subspan(at * rs, count * rs)).size();
        r.records += count;
        ++r.chunks;
      }
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    r.seconds = seconds_since(start);
    r.records_per_second = r.seconds > 0 ? static_cast<double>(r.records) / r.seconds : 0.0;
    return r;
  });
}

FeedReport DataStore::feed_csv(std::string_view text, std::size_t feeders, bool skip_header) {
  if (skip_header) {
    const auto nl = text.find('\n');
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
  }
  if (feeders == 0) throw Error(ErrorCode::invalid_argument, "need at least one feeder");
  // Slice boundaries land just after a newline.
  std::vector<std::size_t> cuts{0};
  for (std::size_t i = 1; i < feeders; ++i) {
    std::size_t at = std::max(cuts.back(), text.size() * i / feeders);
    if (at > 0 && at < text.size() && text[at - 1] != '\n') {
      const auto nl = text.find('\n', at);
      at = nl == std::string_view::npos ? text.size() : nl + 1;
    }
    cuts.push_back(std::min(at, text.size()));
  }
  cuts.push_back(text.size());

  const std::size_t rs = desc_->record_size();
  const std::size_t chunk = config_.ingest.max_chunk_records;
  return run_feeders(feeders, [&](std::size_t i) {
    FeederReport r;
    const auto start = Clock::now();
    std::vector<std::byte> buffer(chunk * rs);
    std::vector<std::string_view> cells;
    std::size_t filled = 0;
    std::size_t line_no = 0;
    auto submit = [&] {
      r.segments += ingest_chunk(std::span<const std::byte>(buffer.data(), filled * rs)).size();
      r.records += filled;
      ++r.chunks;
      filled = 0;
    };
    try {
      std::string_view slice = text.substr(cuts[i], cuts[i + 1] - cuts[i]);
      while (!slice.empty()) {
        const auto nl = slice.find('\n');
        std::string_view line = slice.substr(0, nl);
        slice = nl == std::string_view::npos ? std::string_view{} : slice.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        split_csv_line(line, cells);
        try {
          encode_csv_row(cells, *desc_, std::span<std::byte>(buffer.data() + filled * rs, rs));
        } catch (const Error& e) {
          throw Error(e.code(), "feeder " + std::to_string(i) + ", line " + std::to_string(line_no) + ": " + e.what());
        }
        if (++filled == chunk) submit();
      }
      if (filled > 0) submit();
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    r.seconds = seconds_since(start);
    r.records_per_second = r.seconds > 0 ? static_cast<double>(r.records) / r.seconds : 0.0;
    return r;
  });
}

}  // namespace mdds
