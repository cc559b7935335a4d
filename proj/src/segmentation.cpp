#include "mdds/segmentation.hpp"

#include <cmath>

namespace mdds {

Chunk Chunk::of(std::span<const std::byte> bytes, const RecordDescriptor& desc) {
  if (bytes.size() % desc.record_size() != 0) {
    throw Error(ErrorCode::invalid_argument, "chunk length is not a multiple of the record size");
  }
  return Chunk{bytes, bytes.size() / desc.record_size(), &desc};
}

std::string_view to_string(SegmentationScheme scheme) {
  return scheme == SegmentationScheme::random ? "random" : "kdtree";
}

SegmentationScheme parse_scheme(std::string_view text) {
  if (text == "random") return SegmentationScheme::random;
  if (text == "kdtree" || text == "kd") return SegmentationScheme::kdtree;
  throw Error(ErrorCode::invalid_argument, "unknown segmentation scheme '" + std::string(text) + "'");
}

std::size_t random_group_count(std::size_t count, std::size_t record_size,
                               std::uint64_t max_segment_size) {
  if (max_segment_size == 0) throw Error(ErrorCode::invalid_argument, "segment size must be > 0");
  const auto bytes = static_cast<unsigned __int128>(count) * record_size;
  return static_cast<std::size_t>((bytes + max_segment_size - 1) / max_segment_size);
}

std::size_t compute_rps_max(const SegmentationConfig& cfg, std::size_t record_size) {
  if (record_size == 0) throw Error(ErrorCode::invalid_argument, "record size must be > 0");
  if (cfg.overpacking < 1.0) throw Error(ErrorCode::invalid_argument, "overpacking factor must be >= 1");
  const std::uint64_t base = (cfg.max_segment_size + record_size - 1) / record_size;
  const double rps = std::floor(static_cast<double>(base) * cfg.overpacking);
  return rps < 1.0 ? 1 : static_cast<std::size_t>(rps);
}

SegmentPlan segment_random(const Chunk& chunk, const SegmentationConfig& cfg, Rng& rng) {
  if (chunk.count == 0) throw Error(ErrorCode::invalid_argument, "empty chunk");
  const auto& desc = *chunk.desc;
  if (cfg.max_segment_size < desc.record_size()) {
    throw Error(ErrorCode::invalid_argument, "segment size is smaller than one record");
  }
  const std::size_t groups = random_group_count(chunk.count, desc.record_size(), cfg.max_segment_size);
  SegmentPlan plan;
  plan.scheme = SegmentationScheme::random;
  plan.groups.resize(groups);
  const std::size_t expected = chunk.count / groups + 1;
  for (auto& g : plan.groups) {
    g.bounds = Hyperrectangle(desc.dim_count());
    g.records.reserve(expected + expected / 8);
  }
  const auto dims = desc.dims();
  for (std::size_t i = 0; i < chunk.count; ++i) {
    auto& g = plan.groups[uniform_index(rng, groups)];
    RecordRef rec = chunk.record(i);
    g.records.push_back(rec);
    g.bounds.expand_record(rec, dims);
  }
  return plan;
}

SegmentPlan segment_kdtree(const Chunk& chunk, const SegmentationConfig& cfg, NodePool& pool,
                           Rng& rng) {
  if (chunk.count == 0) throw Error(ErrorCode::invalid_argument, "empty chunk");
  const auto& desc = *chunk.desc;
  const auto dims = desc.dims();
  const std::size_t rps_max = compute_rps_max(cfg, desc.record_size());

  std::vector<RecordRef> refs(chunk.count);
  for (std::size_t i = 0; i < chunk.count; ++i) refs[i] = chunk.record(i);
  KdTree tree = bulkload(refs, dims, 0, BulkloadMode::root_level_only, pool, rng, cfg.pivot_samples);

  SegmentPlan plan;
  plan.scheme = SegmentationScheme::kdtree;

  struct Frame {
    KdNode* node;
    std::size_t depth;
    KdNode** link;  // the parent's pointer to node (or the root slot)
  };
  KdNode* root = tree.root();
  std::vector<Frame> stack{{root, 0, &root}};
  plan.traversal_visits = 1;
  while (!stack.empty()) {
    Frame f = stack.back();
    KdNode* n = f.node;
    if (n->subtree_count <= rps_max) {
      auto packed = pack_tree(n, desc.record_size());
      SegmentGroup g;
      g.bounds = bounding_box(packed.records, dims);
      g.records = std::move(packed.records);
      g.tree = std::move(packed.nodes);
      g.initial_dim = static_cast<std::uint32_t>(level_dim(0, f.depth, dims.size()));
      plan.emitted_nodes += g.records.size();
      plan.groups.push_back(std::move(g));

      *f.link = nullptr;  // detach
      const std::uint32_t removed = n->subtree_count;
      stack.pop_back();
      // Every frame still on the stack is an ancestor.
      for (auto& a : stack) a.node->subtree_count -= removed;
      continue;
    }
    const std::uint32_t l = subtree_count(n->left);
    const std::uint32_t r = subtree_count(n->right);
    ++plan.traversal_visits;
    if (l >= r) {
      stack.push_back({n->left, f.depth + 1, &n->left});
    } else {
      stack.push_back({n->right, f.depth + 1, &n->right});
    }
  }
  return plan;
}

}  // namespace mdds
