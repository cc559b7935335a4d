#include "mdds/stats.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mdds/rstar_tree.hpp"
#include "mdds/store.hpp"

namespace mdds {

void summarize(OverlapReport& report) {
  report.segment_count = report.counts.size();
  if (report.counts.empty()) {
    report.mean = report.stddev = 0.0;
    return;
  }
  const double n = static_cast<double>(report.counts.size());
  double sum = 0.0;
  for (auto c : report.counts) sum += static_cast<double>(c);
  report.mean = sum / n;
  double sq = 0.0;
  for (auto c : report.counts) {
    const double d = static_cast<double>(c) - report.mean;
    sq += d * d;
  }
  report.stddev = std::sqrt(sq / n);
}

OverlapReport overlap_stats(std::span<const Hyperrectangle> rects, std::span<const FieldType> kinds) {
  RStarTree<std::size_t> tree(std::vector<FieldType>(kinds.begin(), kinds.end()));
  for (std::size_t i = 0; i < rects.size(); ++i) tree.insert(rects[i], i);
  OverlapReport report;
  report.counts.resize(rects.size());
  for (std::size_t i = 0; i < rects.size(); ++i) {
    std::size_t n = 0;
    tree.search(rects[i], [&](const Hyperrectangle&, std::size_t j) { n += (j != i); });
    report.counts[i] = n;
  }
  summarize(report);
  return report;
}

OverlapReport overlap_stats(const DataStore& store) {
  std::vector<Hyperrectangle> rects;
  for (const auto& ref : store.index().all()) rects.push_back(ref->rect());
  std::vector<FieldType> kinds;
  for (const auto& d : store.descriptor().dims()) kinds.push_back(d.kind);
  OverlapReport r = overlap_stats(rects, kinds);
  const auto& ing = store.config().ingest;
  r.scheme = std::string(to_string(ing.scheme));
  r.chunk_records = ing.max_chunk_records;
  r.segment_size = ing.segmentation.max_segment_size;
  return r;
}

GenMode parse_gen_mode(std::string_view text) {
  if (text == "uniform") return GenMode::uniform;
  if (text == "clustered") return GenMode::clustered;
  throw Error(ErrorCode::invalid_argument, "unknown generator mode '" + std::string(text) + "'");
}

FieldDomain field_domain(FieldType kind) {
  switch (kind) {
    case FieldType::int64: return {0.0, 1e6};
    case FieldType::epoch: return {1356998400.0, 1388534399.0};
    case FieldType::uint32: return {0.0, 1e5};
    case FieldType::float32: return {-1000.0, 1000.0};
    case FieldType::char_array: break;
  }
  return {0.0, 0.0};
}

namespace {

void store_numeric(std::byte* at, FieldType kind, double v) {
  switch (kind) {
    case FieldType::float32: {
      const float f = static_cast<float>(v);
      std::memcpy(at, &f, sizeof f);
      break;
    }
    case FieldType::uint32: {
      const auto u = static_cast<std::uint32_t>(std::llround(v));
      std::memcpy(at, &u, sizeof u);
      break;
    }
    default: {
      const auto i = static_cast<std::int64_t>(std::llround(v));
      std::memcpy(at, &i, sizeof i);
      break;
    }
  }
}

}  // namespace

std::vector<std::byte> generate_records(const RecordDescriptor& desc, const GenConfig& cfg) {
  Rng rng(cfg.seed);
  const std::size_t rs = desc.record_size();
  std::vector<std::byte> out(cfg.records * rs);

  std::vector<int> dim_of_field(desc.fields().size(), -1);
  for (std::size_t d = 0; d < desc.dim_count(); ++d) dim_of_field[desc.dim_field(d)] = static_cast<int>(d);

  const std::size_t clusters = std::max<std::size_t>(1, cfg.clusters);
  std::vector<std::vector<double>> centers;
  if (cfg.mode == GenMode::clustered) {
    centers.resize(clusters);
    for (auto& c : centers) {
      for (std::size_t d = 0; d < desc.dim_count(); ++d) {
        const auto dom = field_domain(desc.dim(d).kind);
        c.push_back(std::uniform_real_distribution<double>(dom.lo, dom.hi)(rng));
      }
    }
  }
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (std::size_t i = 0; i < cfg.records; ++i) {
    std::byte* rec = out.data() + i * rs;
    const std::size_t cluster = cfg.mode == GenMode::clustered ? uniform_index(rng, clusters) : 0;
    for (std::size_t f = 0; f < desc.fields().size(); ++f) {
      const FieldSpec& spec = desc.field(f);
      if (spec.type == FieldType::char_array) {
        const std::size_t len = 1 + uniform_index(rng, spec.array_len);
        for (std::size_t k = 0; k < len; ++k) {
          rec[spec.offset + k] = static_cast<std::byte>('a' + uniform_index(rng, 26));
        }
        continue;
      }
      const auto dom = field_domain(spec.type);
      double v;
      if (cfg.mode == GenMode::clustered && dim_of_field[f] >= 0) {
        const auto d = static_cast<std::size_t>(dim_of_field[f]);
        v = centers[cluster][d] + gauss(rng) * cfg.cluster_sigma * (dom.hi - dom.lo);
        v = std::clamp(v, dom.lo, dom.hi);
      } else {
        v = std::uniform_real_distribution<double>(dom.lo, dom.hi)(rng);
      }
      store_numeric(rec + spec.offset, spec.type, v);
    }
  }
  return out;
}

std::string records_to_csv(std::span<const std::byte> records, const RecordDescriptor& desc) {
  const std::size_t rs = desc.record_size();
  const std::size_t n = records.size() / rs;
  std::string out;
  out.reserve(n * rs);
  for (std::size_t i = 0; i < n; ++i) {
    auto rec = records.subspan(i * rs, rs);
    for (std::size_t f = 0; f < desc.fields().size(); ++f) {
      if (f) out += ',';
      out += format_value(decode_field(rec, desc, f));
    }
    out += '\n';
  }
  return out;
}

}  // namespace mdds
