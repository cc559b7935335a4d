#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "mdds/store.hpp"

namespace mdds {

struct IngestBenchResult {
  double records_per_second = 0.0;
  double seconds = 0.0;
  std::size_t segments = 0;
};

/// Feeds `records` into a fresh store under `scratch_dir` and reports the
/// feed throughput. With `via_csv` the records are first rendered as CSV
/// (untimed) and the timed run parses them back. The store is flushed and
/// removed afterwards, outside the timed region.
IngestBenchResult bench_ingest(std::shared_ptr<const RecordDescriptor> desc, std::span<const std::byte> records,
                               const IngestConfig& cfg, std::size_t feeders, bool via_csv,
                               const std::filesystem::path& scratch_dir);

double median(std::vector<double> values);

}  // namespace mdds
