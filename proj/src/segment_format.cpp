#include "mdds/segment_format.hpp"

#include <cmath>
#include <cstring>

namespace mdds {

namespace {

class Writer {
 public:
  explicit Writer(std::size_t reserve) { out_.reserve(reserve); }

  template <typename T>
  void put(T v) {
    auto at = out_.size();
    out_.resize(at + sizeof v);
    std::memcpy(out_.data() + at, &v, sizeof v);
  }
  void put_uuid(const Uuid& id) {
    auto at = out_.size();
    out_.resize(at + 16);
    std::memcpy(out_.data() + at, id.data, 16);
  }
  void put_bytes(std::span<const std::byte> bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }

  std::vector<std::byte> take() { return std::move(out_); }

 private:
  std::vector<std::byte> out_;
};

[[noreturn]] void corrupt(const std::string& what) {
  throw Error(ErrorCode::corrupt_segment, "corrupt segment: " + what);
}

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  Uuid get_uuid(const char* what) {
    need(16, what);
    Uuid id;
    std::memcpy(id.data, in_.data() + pos_, 16);
    pos_ += 16;
    return id;
  }
  std::span<const std::byte> get_bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) corrupt(std::string("truncated in ") + what);
  }

  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

std::uint64_t raw_bound(const DimValue& v) { return v.raw(); }

// Raw 8-byte bound -> key, rejecting anything a writer would not produce.
std::uint64_t bound_key(std::uint64_t raw, FieldType kind, const char* which) {
  if ((kind == FieldType::uint32 || kind == FieldType::float32) && (raw >> 32) != 0) {
    corrupt(std::string("non-zero padding in ") + which + " bound");
  }
  if (kind == FieldType::float32) {
    float f = std::bit_cast<float>(static_cast<std::uint32_t>(raw));
    if (std::isnan(f)) corrupt(std::string("NaN ") + which + " bound");
  }
  auto v = DimValue::from_raw(kind, raw);
  if (v.raw() != raw) corrupt(std::string("non-canonical ") + which + " bound");
  return v.key();
}

}  // namespace

// ---------------------------------------------------------------------------

PackedTree pack_tree(const KdNode* root, std::size_t record_size) {
  PackedTree out;
  if (!root) return out;
  out.nodes.reserve(root->subtree_count);
  out.records.reserve(root->subtree_count);
  struct Item {
    const KdNode* n;
    std::int32_t parent;
    bool is_left;
  };
  std::vector<Item> stack{{root, -1, false}};
  while (!stack.empty()) {
    Item it = stack.back();
    stack.pop_back();
    const auto idx = static_cast<std::int32_t>(out.nodes.size());
    if (it.parent >= 0) {
      auto& p = out.nodes[static_cast<std::size_t>(it.parent)];
      (it.is_left ? p.left : p.right) = idx;
    }
    out.nodes.push_back(PackedKdNode{static_cast<std::uint64_t>(idx) * record_size, kNilChild, kNilChild});
    out.records.push_back(it.n->record);
    if (it.n->right) stack.push_back({it.n->right, idx, false});
    if (it.n->left) stack.push_back({it.n->left, idx, true});
  }
  return out;
}

DataSegment assemble(std::span<const RecordRef> records, const RecordDescriptor& desc,
                     std::size_t initial_dim, std::span<const PackedKdNode> tree,
                     const Hyperrectangle* bounds) {
  if (records.empty()) throw Error(ErrorCode::invalid_argument, "cannot assemble an empty group");
  if (tree.size() != records.size()) {
    throw Error(ErrorCode::invalid_argument, "packed tree size differs from group size");
  }
  if (initial_dim >= desc.dim_count()) {
    throw Error(ErrorCode::out_of_range, "initial dimension out of range");
  }
  const std::size_t r = desc.record_size();
  DataSegment seg;
  seg.segment_uuid = random_uuid();
  seg.record_type_uuid = desc.type_uuid();
  seg.dim_ordinals.assign(desc.dim_fields().begin(), desc.dim_fields().end());
  seg.initial_dimension = static_cast<std::uint32_t>(initial_dim);
  seg.nodes.assign(tree.begin(), tree.end());
  seg.record_size = r;
  seg.records.resize(records.size() * r);
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::memcpy(seg.records.data() + i * r, records[i], r);
  }
  if (bounds) {
    seg.bounds = *bounds;
  } else {
    seg.bounds = bounding_box(records, desc.dims());
  }
  return seg;
}

DataSegment assemble_with_fresh_tree(std::span<RecordRef> group, const RecordDescriptor& desc,
                                     NodePool& pool, Rng& rng, unsigned pivot_samples,
                                     const Hyperrectangle* bounds) {
  auto tree = bulkload(group, desc.dims(), 0, BulkloadMode::full_recursive, pool, rng, pivot_samples);
  auto packed = pack_tree(tree.root(), desc.record_size());
  return assemble(packed.records, desc, 0, packed.nodes, bounds);
}

// ---------------------------------------------------------------------------

std::vector<std::byte> serialize(const DataSegment& seg, const RecordDescriptor& desc) {
  if (seg.record_type_uuid != desc.type_uuid()) {
    throw Error(ErrorCode::unknown_record_type, "segment record type differs from descriptor");
  }
  if (seg.dim_ordinals.size() != desc.dim_count() || seg.bounds.dims() != desc.dim_count()) {
    throw Error(ErrorCode::invalid_argument, "segment dimensions differ from descriptor");
  }
  if (seg.records.size() != seg.nodes.size() * desc.record_size()) {
    throw Error(ErrorCode::invalid_argument, "records section size differs from node count");
  }
  Writer w(seg.total_length());
  w.put_uuid(seg.segment_uuid);
  w.put<std::uint64_t>(seg.total_length());
  w.put_uuid(seg.record_type_uuid);

  w.put<std::uint64_t>(seg.dims_section_length());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(seg.dim_ordinals.size()));
  for (std::size_t d = 0; d < seg.dim_ordinals.size(); ++d) {
    const auto kind = desc.dim(d).kind;
    w.put<std::uint32_t>(seg.dim_ordinals[d]);
    w.put<std::uint64_t>(raw_bound(seg.bounds.min_value(d, kind)));
    w.put<std::uint64_t>(raw_bound(seg.bounds.max_value(d, kind)));
  }

  w.put<std::uint64_t>(seg.kdtree_section_length());
  w.put<std::uint32_t>(seg.initial_dimension);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(seg.nodes.size()));
  for (const auto& n : seg.nodes) {
    w.put<std::uint64_t>(n.record_pos);
    w.put<std::int32_t>(n.left);
    w.put<std::int32_t>(n.right);
  }

  w.put<std::uint64_t>(seg.records_section_length());
  w.put_bytes(seg.records);
  return w.take();
}

namespace {

struct Prefix {
  Uuid segment_uuid;
  std::uint64_t total_length;
  Uuid record_type_uuid;
  std::vector<std::uint32_t> ordinals;
  Hyperrectangle bounds;
};

Prefix read_prefix(Reader& in, const RecordDescriptor* desc_or_null,
                   const DescriptorRegistry* registry, const RecordDescriptor** desc_out) {
  Prefix p;
  p.segment_uuid = in.get_uuid("header");
  p.total_length = in.get<std::uint64_t>("header");
  p.record_type_uuid = in.get_uuid("header");
  const RecordDescriptor* desc = desc_or_null;
  if (registry) desc = registry->find(p.record_type_uuid);
  if (!desc || desc->type_uuid() != p.record_type_uuid) {
    throw Error(ErrorCode::unknown_record_type,
                "segment has unknown record type " + to_string(p.record_type_uuid));
  }
  *desc_out = desc;

  const auto dims_len = in.get<std::uint64_t>("dims section");
  const auto dim_count = in.get<std::uint32_t>("dims section");
  if (dim_count != desc->dim_count()) corrupt("dimension count differs from the record type");
  if (dims_len != 12 + 20 * std::uint64_t{dim_count}) corrupt("dims section_length inconsistent");
  p.bounds = Hyperrectangle(dim_count);
  for (std::uint32_t d = 0; d < dim_count; ++d) {
    const auto ordinal = in.get<std::uint32_t>("dims section");
    if (ordinal != desc->dim_field(d)) corrupt("dimension ordinal differs from the record type");
    const auto kind = desc->dim(d).kind;
    p.bounds.lo[d] = bound_key(in.get<std::uint64_t>("dims section"), kind, "min");
    p.bounds.hi[d] = bound_key(in.get<std::uint64_t>("dims section"), kind, "max");
    if (p.bounds.lo[d] > p.bounds.hi[d]) corrupt("min > max in dimension " + std::to_string(d));
    p.ordinals.push_back(ordinal);
  }
  return p;
}

// Shape checks: node 0 is the root, every other node has exactly one parent,
// everything is reachable, and record positions are a permutation of the
// record slots.
void validate_shape(const std::vector<PackedKdNode>& nodes, std::size_t record_size) {
  const std::size_t n = nodes.size();
  std::vector<std::uint8_t> has_parent(n, 0), pos_used(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = nodes[i];
    if (node.record_pos % record_size != 0 || node.record_pos / record_size >= n) {
      corrupt("record_pos " + std::to_string(node.record_pos) + " invalid");
    }
    auto slot = node.record_pos / record_size;
    if (pos_used[slot]++) corrupt("record referenced by two nodes");
    for (std::int32_t c : {node.left, node.right}) {
      if (c == kNilChild) continue;
      if (c < 0 || static_cast<std::size_t>(c) >= n) corrupt("child index out of range");
      if (c == 0) corrupt("root listed as a child");
      if (has_parent[static_cast<std::size_t>(c)]++) corrupt("node with two parents");
    }
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (!has_parent[i]) corrupt("node " + std::to_string(i) + " unreachable");
  }
  // n - 1 parent links, one per non-root node: with unique parents this is a
  // forest whose only root is node 0, hence a single tree (no cycles can
  // exist without a node lacking a path to 0, which would make some node
  // parentless).
  std::vector<std::int32_t> stack{0};
  std::size_t seen = 0;
  while (!stack.empty()) {
    auto i = static_cast<std::size_t>(stack.back());
    stack.pop_back();
    if (++seen > n) corrupt("cycle in kd-tree");
    if (nodes[i].left != kNilChild) stack.push_back(nodes[i].left);
    if (nodes[i].right != kNilChild) stack.push_back(nodes[i].right);
  }
  if (seen != n) corrupt("kd-tree is not connected");
}

// Checks the kd ordering invariant by pushing per-dimension constraints down
// the tree, and that the declared bounds are exactly the records' min/max.
void validate_order_and_bounds(const DataSegment& seg, const RecordDescriptor& desc) {
  const auto dims = desc.dims();
  const std::size_t dc = dims.size();
  auto allowed = Hyperrectangle::unbounded(dc);
  Hyperrectangle seen(dc);

  enum class Op : std::uint8_t { enter, set_lo, set_hi, restore_lo, restore_hi };
  struct Item {
    Op op;
    std::uint32_t index_or_dim;
    std::uint32_t depth;
    std::uint64_t value;
  };
  std::vector<Item> stack{{Op::enter, 0, 0, 0}};
  while (!stack.empty()) {
    Item it = stack.back();
    stack.pop_back();
    switch (it.op) {
      case Op::set_lo:
      case Op::restore_lo: allowed.lo[it.index_or_dim] = it.value; continue;
      case Op::set_hi:
      case Op::restore_hi: allowed.hi[it.index_or_dim] = it.value; continue;
      case Op::enter: break;
    }
    const auto& node = seg.nodes[it.index_or_dim];
    const std::byte* rec = seg.record_at(node.record_pos);
    if (!allowed.contains_record(rec, dims)) corrupt("kd ordering invariant violated");
    seen.expand_record(rec, dims);
    const auto d = static_cast<std::uint32_t>(level_dim(seg.initial_dimension, it.depth, dc));
    const std::uint64_t v = dims[d].key(rec);
    if (node.right != kNilChild) {
      if (v == std::numeric_limits<std::uint64_t>::max()) corrupt("kd ordering invariant violated");
      stack.push_back({Op::restore_lo, d, 0, allowed.lo[d]});
      stack.push_back({Op::enter, static_cast<std::uint32_t>(node.right), it.depth + 1, 0});
      stack.push_back({Op::set_lo, d, 0, std::max(allowed.lo[d], v + 1)});
    }
    if (node.left != kNilChild) {
      stack.push_back({Op::restore_hi, d, 0, allowed.hi[d]});
      stack.push_back({Op::enter, static_cast<std::uint32_t>(node.left), it.depth + 1, 0});
      stack.push_back({Op::set_hi, d, 0, std::min(allowed.hi[d], v)});
    }
  }
  if (!(seen == seg.bounds)) corrupt("bounding hyperrectangle is not tight");
}

}  // namespace

DataSegment deserialize(std::span<const std::byte> bytes, const DescriptorRegistry& registry) {
  if (bytes.size() < kSegmentHeaderSize) corrupt("truncated header");
  Reader in(bytes);
  const RecordDescriptor* desc = nullptr;
  auto prefix = read_prefix(in, nullptr, &registry, &desc);
  if (prefix.total_length != bytes.size()) {
    corrupt(prefix.total_length > bytes.size() ? "truncated (total_length exceeds buffer)"
                                               : "total_length smaller than buffer");
  }
  DataSegment seg;
  seg.segment_uuid = prefix.segment_uuid;
  seg.record_type_uuid = prefix.record_type_uuid;
  seg.dim_ordinals = std::move(prefix.ordinals);
  seg.bounds = std::move(prefix.bounds);
  seg.record_size = desc->record_size();

  const auto kd_len = in.get<std::uint64_t>("kd-tree section");
  seg.initial_dimension = in.get<std::uint32_t>("kd-tree section");
  const auto node_count = in.get<std::uint32_t>("kd-tree section");
  if (kd_len != 16 + 16 * std::uint64_t{node_count}) corrupt("kd-tree section_length inconsistent");
  if (seg.initial_dimension >= desc->dim_count()) corrupt("initial_dimension out of range");
  if (node_count == 0) corrupt("segment without records");
  if (in.remaining() < 16 * std::uint64_t{node_count}) corrupt("truncated in kd-tree section");
  seg.nodes.resize(node_count);
  for (auto& n : seg.nodes) {
    n.record_pos = in.get<std::uint64_t>("kd-tree section");
    n.left = in.get<std::int32_t>("kd-tree section");
    n.right = in.get<std::int32_t>("kd-tree section");
  }

  const auto rec_len = in.get<std::uint64_t>("records section");
  const std::uint64_t expect = 8 + std::uint64_t{node_count} * seg.record_size;
  if (rec_len != expect) corrupt("records section_length inconsistent");
  if (in.remaining() != rec_len - 8) corrupt("section lengths do not add up to total_length");
  auto raw = in.get_bytes(rec_len - 8, "records section");
  seg.records.assign(raw.begin(), raw.end());

  validate_shape(seg.nodes, seg.record_size);
  validate_order_and_bounds(seg, *desc);
  return seg;
}

std::size_t summary_prefix_size(std::size_t dim_count) {
  return kSegmentHeaderSize + 12 + 20 * dim_count + 16;
}

SegmentSummary read_summary(std::span<const std::byte> prefix, const RecordDescriptor& desc) {
  Reader in(prefix);
  const RecordDescriptor* found = nullptr;
  auto p = read_prefix(in, &desc, nullptr, &found);
  SegmentSummary s;
  s.segment_uuid = p.segment_uuid;
  s.record_type_uuid = p.record_type_uuid;
  s.total_length = p.total_length;
  s.bounds = std::move(p.bounds);
  in.get<std::uint64_t>("kd-tree section");
  in.get<std::uint32_t>("kd-tree section");
  s.record_count = in.get<std::uint32_t>("kd-tree section");
  return s;
}

}  // namespace mdds
