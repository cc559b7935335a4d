#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdds/hyperrectangle.hpp"
#include "mdds/record_model.hpp"

namespace mdds {

class DataStore;

/// Pairwise overlap among segment boxes: counts[i] is the number of other
/// boxes intersecting box i on every dimension (closed intervals).
struct OverlapReport {
  std::vector<std::size_t> counts;
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t segment_count = 0;

  std::string scheme;
  std::size_t chunk_records = 0;
  std::uint64_t segment_size = 0;
};

OverlapReport overlap_stats(std::span<const Hyperrectangle> rects, std::span<const FieldType> kinds);
OverlapReport overlap_stats(const DataStore& store);

/// Mean and population standard deviation of the counts.
void summarize(OverlapReport& report);

enum class GenMode { uniform, clustered };

GenMode parse_gen_mode(std::string_view text);

/// Synthetic records. Numeric fields are drawn from fixed per-kind domains
/// (see field_domain); in clustered mode the indexing dimensions instead
/// follow a mixture of `clusters` Gaussians with uniformly placed centers and
/// standard deviation `cluster_sigma` times the domain width, clamped to the
/// domain. char fields get 1..array_len random lowercase letters.
struct GenConfig {
  std::size_t records = 0;
  GenMode mode = GenMode::uniform;
  std::uint64_t seed = 1;
  std::size_t clusters = 10;
  double cluster_sigma = 0.03;
};

struct FieldDomain {
  double lo;
  double hi;
};

/// int64 [0, 1e6], epoch [2013-01-01, 2014-01-01), uint32 [0, 1e5],
/// float [-1000, 1000].
FieldDomain field_domain(FieldType kind);

std::vector<std::byte> generate_records(const RecordDescriptor& desc, const GenConfig& cfg);

/// One CSV line per record, fields in declaration order, floats in shortest
/// round-trip form, char fields up to their first zero byte.
std::string records_to_csv(std::span<const std::byte> records, const RecordDescriptor& desc);

}  // namespace mdds
