// mdds: command-line front end for the multidimensional data store.
//
//   mdds gen      --desc D --records N [--mode uniform|clustered] --output F
//   mdds ingest   --desc D --input F [--scheme random|kdtree] [--threads T] [--chunk C]
//   mdds query    --query "count(*) where x in [0,1]" [--iterator kd|seq]
//   mdds stats overlap
//   mdds inspect  <uuid>
//   mdds bench    [--records N]
//
// The store directory keeps a copy of the descriptor (descriptor.xml), so
// commands after the first ingest do not need --desc. Opening a directory
// re-indexes its .mdseg files from their headers.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "mdds/bench.hpp"
#include "mdds/stats.hpp"
#include "mdds/store.hpp"

namespace fs = std::filesystem;
using namespace mdds;

namespace {

struct Globals {
  std::string data_dir = "mdds-data";
  std::string desc_path;
  std::uint64_t seed = 1;
  std::string format = "csv";
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path stored_descriptor(const Globals& g) { return fs::path(g.data_dir) / "descriptor.xml"; }

std::shared_ptr<const RecordDescriptor> load_descriptor(const Globals& g) {
  fs::path p = g.desc_path.empty() ? stored_descriptor(g) : fs::path(g.desc_path);
  if (!fs::exists(p)) throw Error(ErrorCode::not_found, "descriptor not found: " + p.string() + " (use --desc)");
  return std::make_shared<const RecordDescriptor>(parse_descriptor(read_file(p)));
}

void print_json_or_kv(const Globals& g, const nlohmann::json& j) {
  if (g.format == "json") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it->is_array() || it->is_object()) continue;
    std::cout << it.key() << "," << (it->is_string() ? it->get<std::string>() : it->dump()) << "\n";
  }
}

struct IngestFlags {
  std::string input;
  std::string input_format;
  std::string scheme = "random";
  std::size_t threads = 1;
  std::size_t chunk = 10'000;
  std::uint64_t segment_size = 1 << 20;
  double overpack = 4.0;
  unsigned pivot_samples = 3;
  std::size_t ingestor_threads = 4;
  std::size_t writer_threads = 1;
  long writer_period_ms = 100;
  std::size_t writer_batch_max = 64;
  std::size_t high_water_mark = 10'000;
  bool skip_header = false;
};

void add_engine_flags(CLI::App* cmd, IngestFlags& f) {
  cmd->add_option("--scheme", f.scheme, "Segmentation scheme: random or kdtree")->capture_default_str();
  cmd->add_option("--chunk,--max-chunk-records", f.chunk, "Records per chunk")->capture_default_str();
  cmd->add_option("--segment-size,--target-segment-size", f.segment_size, "Target segment size in bytes")
      ->capture_default_str();
  cmd->add_option("--overpack,--overpacking", f.overpack, "kd-tree overpacking factor (>= 1)")->capture_default_str();
  cmd->add_option("--pivot-samples", f.pivot_samples, "Median-of-M pivot sample count (odd)")->capture_default_str();
  cmd->add_option("--ingestor-threads", f.ingestor_threads, "Concurrent ingestion tasks")->capture_default_str();
  cmd->add_option("--writer-threads", f.writer_threads, "Background writer threads")->capture_default_str();
  cmd->add_option("--writer-period-ms", f.writer_period_ms, "Writer activation period")->capture_default_str();
  cmd->add_option("--writer-batch-max", f.writer_batch_max, "Segments per writer wakeup")->capture_default_str();
  cmd->add_option("--high-water-mark", f.high_water_mark, "Queued segments before ingest blocks")
      ->capture_default_str();
}

IngestConfig to_config(const IngestFlags& f) {
  IngestConfig c;
  c.scheme = parse_scheme(f.scheme);
  c.max_chunk_records = f.chunk;
  c.segmentation.max_segment_size = f.segment_size;
  c.segmentation.overpacking = f.overpack;
  c.segmentation.pivot_samples = f.pivot_samples;
  c.ingestor_threads = f.ingestor_threads;
  c.writer_threads = f.writer_threads;
  c.writer_period = std::chrono::milliseconds(f.writer_period_ms);
  c.writer_batch_max = f.writer_batch_max;
  c.high_water_mark = f.high_water_mark;
  return c;
}

StoreConfig store_config(const Globals& g, const IngestConfig& ic, std::uint64_t cache_capacity) {
  StoreConfig sc;
  sc.data_dir = g.data_dir;
  sc.ingest = ic;
  sc.cache_capacity = cache_capacity;
  sc.seed = g.seed;
  return sc;
}

int cmd_gen(const Globals& g, std::size_t records, const std::string& mode, std::size_t clusters, double sigma,
            const std::string& output, std::string as) {
  auto desc = load_descriptor(g);
  GenConfig cfg{records, parse_gen_mode(mode), g.seed, clusters, sigma};
  auto bytes = generate_records(*desc, cfg);
  if (as.empty()) as = fs::path(output).extension() == ".csv" ? "csv" : "bin";
  std::ofstream out(output, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + output);
  if (as == "csv") {
    out << records_to_csv(bytes, *desc);
  } else if (as == "bin") {
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  } else {
    throw Error(ErrorCode::invalid_argument, "--as must be bin or csv");
  }
  std::cerr << "wrote " << records << " records (" << desc->record_size() << " bytes each) to " << output << "\n";
  return 0;
}

int cmd_ingest(const Globals& g, const IngestFlags& f) {
  auto desc = load_descriptor(g);
  fs::create_directories(g.data_dir);
  if (!g.desc_path.empty() && fs::absolute(g.desc_path) != fs::absolute(stored_descriptor(g))) {
    const std::string text = read_file(g.desc_path);
    if (fs::exists(stored_descriptor(g)) && !(parse_descriptor(read_file(stored_descriptor(g))) == *desc)) {
      throw Error(ErrorCode::schema_error, "data directory holds a different record type");
    }
    std::ofstream(stored_descriptor(g), std::ios::trunc) << text;
  }
  const std::string data = read_file(f.input);
  std::string format = f.input_format;
  if (format.empty()) format = fs::path(f.input).extension() == ".csv" ? "csv" : "bin";

  DataStore store(desc, store_config(g, to_config(f), std::uint64_t{1} << 30));
  const auto start = std::chrono::steady_clock::now();
  FeedReport r;
  if (format == "csv") {
    r = store.feed_csv(data, f.threads, f.skip_header);
  } else if (format == "bin") {
    r = store.feed_binary(std::as_bytes(std::span(data.data(), data.size())), f.threads);
  } else {
    throw Error(ErrorCode::invalid_argument, "--input-format must be bin or csv");
  }
  store.flush();
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  nlohmann::json j;
  j["records"] = r.records;
  j["chunks"] = r.chunks;
  j["segments"] = r.segments;
  j["feed_seconds"] = r.seconds;
  j["records_per_second"] = r.records_per_second;
  j["elapsed_seconds_with_flush"] = total;
  j["feeders"] = r.feeders.size();
  auto per = nlohmann::json::array();
  for (std::size_t i = 0; i < r.feeders.size(); ++i) {
    const auto& fr = r.feeders[i];
    nlohmann::json x{{"feeder", i}, {"records", fr.records}, {"records_per_second", fr.records_per_second}};
    if (fr.error) x["error"] = *fr.error;
    per.push_back(x);
  }
  j["per_feeder"] = per;
  print_json_or_kv(g, j);
  if (g.format != "json") {
    for (std::size_t i = 0; i < r.feeders.size(); ++i) {
      std::cout << "feeder_" << i << "_records_per_second," << r.feeders[i].records_per_second << "\n";
    }
  }
  for (const auto& fr : r.feeders) {
    if (fr.error) {
      std::cerr << "error: " << *fr.error << "\n";
      return 1;
    }
  }
  return 0;
}

int cmd_query(const Globals& g, std::string text, const std::string& file, const std::string& iterator,
              std::uint64_t cache_capacity) {
  if (text.empty() && !file.empty()) text = read_file(file);
  if (text.empty()) throw Error(ErrorCode::invalid_argument, "--query or --query-file is required");
  auto desc = load_descriptor(g);
  StoreConfig sc = store_config(g, IngestConfig{}, cache_capacity);
  sc.background_writers = false;
  DataStore store(desc, sc);
  const RangeQuery q = parse_query(text, *desc);
  const QueryResult r = store.execute(q, parse_iterator_kind(iterator));
  std::cout << (g.format == "json" ? format_json(r) + "\n" : format_csv(r));
  return 0;
}

int cmd_overlap(const Globals& g) {
  auto desc = load_descriptor(g);
  StoreConfig sc = store_config(g, IngestConfig{}, 0);
  sc.background_writers = false;
  DataStore store(desc, sc);
  const OverlapReport r = overlap_stats(store);
  nlohmann::json j{{"method", "pairwise intersection over all indexing dimensions"},
                   {"segments", r.segment_count},
                   {"mean_overlap", r.mean},
                   {"stddev_overlap", r.stddev}};
  if (g.format == "json") j["counts"] = r.counts;
  print_json_or_kv(g, j);
  return 0;
}

int cmd_inspect(const Globals& g, const std::string& id_text, std::size_t show_records) {
  auto desc = load_descriptor(g);
  auto id = parse_uuid(id_text);
  if (!id) throw Error(ErrorCode::invalid_argument, "not a uuid: " + id_text);
  SegmentStore files(g.data_dir);
  const DataSegment seg = files.read(*id, DescriptorRegistry(desc));
  nlohmann::json j;
  j["segment_uuid"] = to_string(seg.segment_uuid);
  j["record_type_uuid"] = to_string(seg.record_type_uuid);
  j["total_length"] = seg.total_length();
  j["dims_section_length"] = seg.dims_section_length();
  j["kdtree_section_length"] = seg.kdtree_section_length();
  j["records_section_length"] = seg.records_section_length();
  j["initial_dimension"] = seg.initial_dimension;
  j["node_count"] = seg.record_count();
  auto dims = nlohmann::json::array();
  for (std::size_t d = 0; d < seg.dim_ordinals.size(); ++d) {
    const auto kind = desc->dim(d).kind;
    dims.push_back({{"field", desc->field(seg.dim_ordinals[d]).name},
                    {"ordinal", seg.dim_ordinals[d]},
                    {"min", seg.bounds.min_value(d, kind).to_string()},
                    {"max", seg.bounds.max_value(d, kind).to_string()}});
  }
  j["dims"] = dims;
  if (g.format == "json") {
    std::cout << j.dump(2) << "\n";
  } else {
    print_json_or_kv(g, j);
    for (const auto& d : dims) {
      std::cout << "dim," << d["field"].get<std::string>() << "," << d["ordinal"] << ","
                << d["min"].get<std::string>() << "," << d["max"].get<std::string>() << "\n";
    }
  }
  const std::size_t n = std::min(show_records, seg.record_count());
  if (n > 0) {
    std::cout << records_to_csv(std::span(seg.records.data(), n * seg.record_size), *desc);
  }
  return 0;
}

int cmd_bench(const Globals& g, std::size_t records, int runs) {
  auto desc = load_descriptor(g);
  const fs::path scratch = fs::path(g.data_dir) / "bench-scratch";
  const auto data = generate_records(*desc, {records, GenMode::uniform, g.seed, 10, 0.03});
  auto rate = [&](IngestConfig cfg, std::size_t feeders, bool csv) {
    std::vector<double> v;
    for (int i = 0; i < runs; ++i) v.push_back(bench_ingest(desc, data, cfg, feeders, csv, scratch).records_per_second);
    return median(v);
  };
  std::cout << "workload,records_per_second\n";
  IngestConfig base;
  base.segmentation.max_segment_size = 256 * 1024;
  for (std::size_t chunk : {std::size_t{10'000}, records}) {
    IngestConfig c = base;
    c.scheme = SegmentationScheme::kdtree;
    c.max_chunk_records = chunk;
    std::cout << "kdtree_binary_chunk_" << chunk << "_1_feeder," << rate(c, 1, false) << "\n";
  }
  for (std::size_t feeders : {1, 4}) {
    IngestConfig c = base;
    c.ingestor_threads = feeders;
    std::cout << "random_binary_chunk_10000_" << feeders << "_feeders," << rate(c, feeders, false) << "\n";
  }
  std::cout << "random_csv_chunk_10000_1_feeder," << rate(base, 1, true) << "\n";
  std::cout << "hardware_threads," << std::thread::hardware_concurrency() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multidimensional data store: ingest, query and inspect segment stores"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--data-dir", g.data_dir, "Store directory")->capture_default_str();
  app.add_option("--desc", g.desc_path, "Record descriptor XML");
  app.add_option("--seed", g.seed, "Seed for generators and segmentation")->capture_default_str();
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  app.set_config("--config", "", "INI/TOML file with option values");

  std::function<int()> run;

  auto* gen = app.add_subcommand("gen", "Generate synthetic records");
  std::size_t gen_records = 100'000, gen_clusters = 10;
  std::string gen_mode = "uniform", gen_output, gen_as;
  double gen_sigma = 0.03;
  gen->add_option("--records", gen_records, "Record count")->capture_default_str();
  gen->add_option("--mode", gen_mode, "uniform or clustered")->capture_default_str();
  gen->add_option("--clusters", gen_clusters, "Gaussian clusters (clustered mode)")->capture_default_str();
  gen->add_option("--sigma", gen_sigma, "Cluster stddev as a fraction of the domain")->capture_default_str();
  gen->add_option("--output", gen_output, "Output file")->required();
  gen->add_option("--as", gen_as, "bin or csv (default: from the file extension)");
  gen->callback([&] { run = [&] { return cmd_gen(g, gen_records, gen_mode, gen_clusters, gen_sigma, gen_output, gen_as); }; });

  auto* ingest = app.add_subcommand("ingest", "Ingest a binary or CSV record file");
  IngestFlags flags;
  ingest->add_option("--input", flags.input, "Input file")->required();
  ingest->add_option("--input-format", flags.input_format, "bin or csv (default: from the file extension)");
  ingest->add_option("--threads", flags.threads, "Feeder threads")->capture_default_str();
  ingest->add_flag("--skip-header", flags.skip_header, "Skip the first CSV line");
  add_engine_flags(ingest, flags);
  ingest->callback([&] { run = [&] { return cmd_ingest(g, flags); }; });

  auto* query = app.add_subcommand("query", "Run a range query");
  std::string query_text, query_file, iterator = "kd";
  std::uint64_t cache_capacity = std::uint64_t{1} << 30;
  query->add_option("--query,-q", query_text, "Query text");
  query->add_option("--query-file", query_file, "File holding the query text");
  query->add_option("--iterator", iterator, "kd or seq")->check(CLI::IsMember({"kd", "seq"}))->capture_default_str();
  query->add_option("--cache-capacity", cache_capacity, "Segment cache size in bytes")->capture_default_str();
  query->callback([&] { run = [&] { return cmd_query(g, query_text, query_file, iterator, cache_capacity); }; });

  auto* stats = app.add_subcommand("stats", "Store statistics");
  stats->require_subcommand(1);
  auto* overlap = stats->add_subcommand("overlap", "Pairwise segment overlap");
  overlap->callback([&] { run = [&] { return cmd_overlap(g); }; });

  auto* inspect = app.add_subcommand("inspect", "Dump a segment's header and sections");
  std::string inspect_id;
  std::size_t inspect_records = 0;
  inspect->add_option("uuid", inspect_id, "Segment uuid")->required();
  inspect->add_option("--records", inspect_records, "Also print the first N records");
  inspect->callback([&] { run = [&] { return cmd_inspect(g, inspect_id, inspect_records); }; });

  auto* bench = app.add_subcommand("bench", "Ingest throughput workloads (local numbers, informational)");
  std::size_t bench_records = 200'000;
  int bench_runs = 3;
  bench->add_option("--records", bench_records, "Records per run")->capture_default_str();
  bench->add_option("--runs", bench_runs, "Runs per workload (median reported)")->capture_default_str();
  bench->callback([&] { run = [&] { return cmd_bench(g, bench_records, bench_runs); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return run ? run() : 0;
  } catch (const ParseError& e) {
    std::cerr << "query error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
