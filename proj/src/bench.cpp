#include "mdds/bench.hpp"

#include <algorithm>

#include "mdds/stats.hpp"

namespace mdds {

IngestBenchResult bench_ingest(std::shared_ptr<const RecordDescriptor> desc, std::span<const std::byte> records,
                               const IngestConfig& cfg, std::size_t feeders, bool via_csv,
                               const std::filesystem::path& scratch_dir) {
  std::filesystem::remove_all(scratch_dir);
  std::string csv;
  if (via_csv) csv = records_to_csv(records, *desc);
  IngestBenchResult out;
  {
    StoreConfig sc;
    sc.data_dir = scratch_dir;
    sc.ingest = cfg;
    DataStore store(desc, sc);
    const FeedReport r = via_csv ? store.feed_csv(csv, feeders) : store.feed_binary(records, feeders);
    if (!r.ok()) {
      for (const auto& f : r.feeders) {
        if (f.error) throw Error(ErrorCode::invalid_argument, "feed failed: " + *f.error);
      }
    }
    out.records_per_second = r.records_per_second;
    out.seconds = r.seconds;
    out.segments = r.segments;
  }
  std::filesystem::remove_all(scratch_dir);
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace mdds
