#pragma once

// Data segment: the unit of storage.
//
// Serialized layout (all integers little-endian):
//
//   header            16  segment uuid
//                      8  total_length (whole segment, bytes)
//                     16  record type uuid
//   dims section       8  section_length (= 12 + 20 * dim_count)
//                      4  dim_count
//                     20  per dim: 4 field ordinal, 8 min, 8 max
//                         (raw field bytes zero-extended to 8)
//   kd-tree section    8  section_length (= 16 + 16 * node_count)
//                      4  initial_dimension
//                      4  node_count
//                     16  per node: 8 record_pos (byte offset into the
//                         records array), 4 left, 4 right (signed, -1 = nil)
//   records section    8  section_length (= 8 + node_count * record_size)
//                      *  raw records
//
// Every section_length counts its own length field. Node 0 is the root.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mdds/hyperrectangle.hpp"
#include "mdds/kdtree.hpp"
#include "mdds/record_model.hpp"
#include "mdds/uuid.hpp"

namespace mdds {

inline constexpr std::size_t kSegmentHeaderSize = 40;
inline constexpr std::int32_t kNilChild = -1;

struct PackedKdNode {
  std::uint64_t record_pos = 0;
  std::int32_t left = kNilChild;
  std::int32_t right = kNilChild;

  friend bool operator==(const PackedKdNode&, const PackedKdNode&) = default;
};

/// A kd-(sub)tree flattened in pre-order, with the record handles in the
/// same order; node i's record will sit at byte offset i * record_size.
struct PackedTree {
  std::vector<PackedKdNode> nodes;
  std::vector<RecordRef> records;
};

PackedTree pack_tree(const KdNode* root, std::size_t record_size);

struct DataSegment {
  Uuid segment_uuid{};
  Uuid record_type_uuid{};
  std::vector<std::uint32_t> dim_ordinals;
  Hyperrectangle bounds;
  std::uint32_t initial_dimension = 0;
  std::vector<PackedKdNode> nodes;
  std::vector<std::byte> records;
  std::size_t record_size = 0;

  std::size_t record_count() const { return nodes.size(); }
  const std::byte* record(std::size_t i) const { return records.data() + i * record_size; }
  const std::byte* record_at(std::uint64_t pos) const { return records.data() + pos; }

  std::size_t dims_section_length() const { return 12 + 20 * dim_ordinals.size(); }
  std::size_t kdtree_section_length() const { return 16 + 16 * nodes.size(); }
  std::size_t records_section_length() const { return 8 + records.size(); }
  std::size_t total_length() const {
    return kSegmentHeaderSize + dims_section_length() + kdtree_section_length() +
           records_section_length();
  }

  friend bool operator==(const DataSegment&, const DataSegment&) = default;
};

/// Copies `records` (already in the packed tree's order) into a new segment.
/// `tree` must have one node per record. When `bounds` is null the bounding
/// box is computed by a scan.
DataSegment assemble(std::span<const RecordRef> records, const RecordDescriptor& desc,
                     std::size_t initial_dim, std::span<const PackedKdNode> tree,
                     const Hyperrectangle* bounds = nullptr);

/// Random-scheme path: builds a fresh fully recursive kd-tree over the group
/// (root dimension 0), packs it and assembles the segment.
DataSegment assemble_with_fresh_tree(std::span<RecordRef> group, const RecordDescriptor& desc,
                                     NodePool& pool, Rng& rng, unsigned pivot_samples = 3,
                                     const Hyperrectangle* bounds = nullptr);

/// Known record types, keyed by type uuid.
class DescriptorRegistry {
 public:
  DescriptorRegistry() = default;
  explicit DescriptorRegistry(std::shared_ptr<const RecordDescriptor> desc) { add(std::move(desc)); }

  void add(std::shared_ptr<const RecordDescriptor> desc) { descs_.push_back(std::move(desc)); }
  const RecordDescriptor* find(const Uuid& type) const {
    for (const auto& d : descs_) {
      if (d->type_uuid() == type) return d.get();
    }
    return nullptr;
  }

 private:
  std::vector<std::shared_ptr<const RecordDescriptor>> descs_;
};

std::vector<std::byte> serialize(const DataSegment& seg, const RecordDescriptor& desc);

/// Parses and fully validates a serialized segment: lengths, ordinals,
/// canonical bounds, tree shape, record positions, the kd ordering invariant
/// and bounding-box tightness. Any violation throws Error(corrupt_segment);
/// an unregistered record type throws Error(unknown_record_type).
DataSegment deserialize(std::span<const std::byte> bytes, const DescriptorRegistry& registry);

/// Header, dims section and node count only; used to rebuild the index
/// without loading records. Needs at least the first prefix_size() bytes.
struct SegmentSummary {
  Uuid segment_uuid{};
  Uuid record_type_uuid{};
  std::uint64_t total_length = 0;
  Hyperrectangle bounds;
  std::uint32_t record_count = 0;
};

std::size_t summary_prefix_size(std::size_t dim_count);
SegmentSummary read_summary(std::span<const std::byte> prefix, const RecordDescriptor& desc);

}  // namespace mdds
