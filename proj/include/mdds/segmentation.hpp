#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mdds/hyperrectangle.hpp"
#include "mdds/kdtree.hpp"
#include "mdds/record_model.hpp"
#include "mdds/segment_format.hpp"

namespace mdds {

/// A micro-batch of records: `count` records of desc.record_size() bytes.
struct Chunk {
  std::span<const std::byte> records;
  std::size_t count = 0;
  const RecordDescriptor* desc = nullptr;

  static Chunk of(std::span<const std::byte> bytes, const RecordDescriptor& desc);
  RecordRef record(std::size_t i) const { return records.data() + i * desc->record_size(); }
};

enum class SegmentationScheme { random, kdtree };

std::string_view to_string(SegmentationScheme scheme);
SegmentationScheme parse_scheme(std::string_view text);

struct SegmentationConfig {
  std::uint64_t max_segment_size = 1 << 20;  // target segment size S, bytes
  double overpacking = 4.0;                 // omega, >= 1
  unsigned pivot_samples = 3;               // M for median-of-M pivots
};

/// One group of records destined for one segment. For the kd-tree scheme
/// `records` is in the packed tree's pre-order and `tree` holds the packed
/// subtree; for the random scheme `tree` is empty and the segment's tree is
/// built at assembly.
struct SegmentGroup {
  std::vector<RecordRef> records;
  std::vector<PackedKdNode> tree;
  std::uint32_t initial_dim = 0;
  Hyperrectangle bounds;
};

struct SegmentPlan {
  SegmentationScheme scheme = SegmentationScheme::random;
  std::vector<SegmentGroup> groups;

  // Instrumentation for the kd-tree scheme: nodes entered by the partition
  // traversal (each at most once), and nodes emitted into groups.
  std::size_t traversal_visits = 0;
  std::size_t emitted_nodes = 0;
};

/// ceil(c * r / S).
std::size_t random_group_count(std::size_t count, std::size_t record_size,
                               std::uint64_t max_segment_size);

/// rps_max = ceil(S / r) * omega (at least 1).
std::size_t compute_rps_max(const SegmentationConfig& cfg, std::size_t record_size);

SegmentPlan segment_random(const Chunk& chunk, const SegmentationConfig& cfg, Rng& rng);

/// Bulkloads the chunk (root-level-only pivots, root dimension 0) and cuts the
/// tree into subtrees of at most rps_max nodes: pre-order, heavier child
/// first, ties to the left. The pool lease is returned before this returns.
SegmentPlan segment_kdtree(const Chunk& chunk, const SegmentationConfig& cfg, NodePool& pool,
                           Rng& rng);

}  // namespace mdds
