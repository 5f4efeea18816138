#include "carhail/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "carhail/errors.hpp"
#include "carhail/export.hpp"
#include "carhail/matrix_io.hpp"

namespace carhail {

namespace {

using json = nlohmann::json;

/// Output directory that remembers what it wrote, for the manifest digests.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw ConfigError("cannot create output directory " + root_.string());
  }

  const std::filesystem::path& root() const { return root_; }

  void text(const std::string& name, const std::string& content) {
    const auto path = root_ / name;
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << content;
    written_.insert(name);
  }
  void json_doc(const std::string& name, const json& doc) { text(name, doc.dump(2) + "\n"); }
  template <typename T>
  void matrix(const std::string& name, const SpatioTemporalMatrix<T>& m) {
    std::ostringstream out;
    write_matrix_csv(out, m);
    text(name, out.str());
  }

  json digests() const {
    json out = json::object();
    for (const auto& name : written_) out[name] = file_digest(root_ / name);
    return out;
  }

 private:
  std::filesystem::path root_;
  std::set<std::string> written_;
};

json fit_json(const MeasureFit& fit) {
  json days = json::array();
  for (const auto d : fit.days) days.push_back(format_day(d));
  json out = {{"days", days}};
  auto put = [&](const char* key, const std::optional<FittingIndex>& f) {
    if (f) {
      out[key] = {{"f2", f->f2}, {"degenerate", f->degenerate}};
    } else {
      out[key] = nullptr;
    }
  };
  put("raw", fit.raw);
  put("normalized", fit.normalized);
  return out;
}

std::vector<ScenarioGroup> effective_groups(const RunConfig& cfg,
                                            const std::vector<IntervalIndex>& axis) {
  if (!cfg.groups.empty()) return cfg.groups;
  ScenarioGroup all{"all", {}};
  for (const auto& interval : axis) {
    if (all.days.empty() || all.days.back() != interval.day) all.days.push_back(interval.day);
  }
  return {all};
}

std::vector<DailyProfile> select_days(const std::vector<DailyProfile>& profiles,
                                      const ScenarioGroup& group) {
  std::vector<DailyProfile> out;
  for (const auto& p : profiles) {
    if (std::find(group.days.begin(), group.days.end(), p.day) != group.days.end()) {
      out.push_back(p);
    }
  }
  return out;
}

void write_timeseries(OutputDir& out, const ScenarioGroup& group,
                      const std::vector<DailyProfile>& dc, const std::vector<DailyProfile>& cf) {
  const auto dc_days = select_days(dc, group);
  const auto cf_days = select_days(cf, group);
  const std::string base = "timeseries/" + group.name;
  for (const bool normalized : {false, true}) {
    const std::string suffix = normalized ? "_normalized" : "";
    out.text(base + "_dc" + suffix + ".csv", timeseries_csv(dc_days, normalized));
    out.text(base + "_dc" + suffix + ".svg",
             timeseries_svg(dc_days, normalized,
                            (normalized ? "DC-N " : "DC ") + group.name));
    out.text(base + "_cf" + suffix + ".csv", timeseries_csv(cf_days, normalized));
    out.text(base + "_cf" + suffix + ".svg",
             timeseries_svg(cf_days, normalized,
                            (normalized ? "CF-N " : "CF ") + group.name));
  }
}

std::string heatmap_name(const std::string& matrix, const IntervalIndex& interval) {
  std::string label = interval_label(interval);
  label.erase(std::remove(label.begin(), label.end(), ':'), label.end());
  return "heatmap_" + matrix + "_" + label + ".geojson";
}

json ids_json(const std::vector<RoadId>& ids) { return json(ids); }

/// Cleaning, congestion scoring, aggregates, fitting index and exports.
void analyze_and_export(const RunConfig& cfg, const RoadNetwork& net, const FlowMatrix& flow,
                        const SpeedMatrix& speed_raw, OutputDir& out, json& manifest,
                        std::string& stage) {
  stage = "clean";
  const auto cleaned = clean_speed_matrix(speed_raw, {cfg.missing_fraction, cfg.anomaly_kmh});
  manifest["roads"] = {{"retained", cleaned.speed.rows()},
                       {"dropped", ids_json(cleaned.dropped)},
                       {"flagged", ids_json(cleaned.flagged)},
                       {"saturated", ids_json(cleaned.saturated)}};
  manifest["anomalies"] = {{"count", cleaned.anomaly_count}, {"rate", cleaned.anomaly_rate}};
  spdlog::info("cleaning: {} roads retained, {} dropped, {} anomalies ({:.4f}%)",
               cleaned.speed.rows(), cleaned.dropped.size(), cleaned.anomaly_count,
               100.0 * cleaned.anomaly_rate);

  out.matrix("speed.csv", cleaned.speed);
  out.json_doc("speed.meta.json",
               {{"interval_seconds", kSlotSeconds},
                {"tz_offset_s", cfg.tz_offset_s},
                {"missing_fraction", cfg.missing_fraction},
                {"anomaly_kmh", cfg.anomaly_kmh},
                {"pair_dt_max_s", cfg.pair_dt_max_s},
                {"dropped_road_ids", ids_json(cleaned.dropped)},
                {"flagged_road_ids", ids_json(cleaned.flagged)},
                {"anomaly_count", cleaned.anomaly_count},
                {"anomaly_rate", cleaned.anomaly_rate}});

  stage = "analyze";
  const auto congestion = compute_congestion(cleaned.speed, net, cleaned.flagged, cfg.anomaly_kmh);
  out.matrix("inrix.csv", congestion.per_road);
  {
    std::ostringstream ff;
    ff << "road_id,free_flow_kmh,source\n";
    for (std::size_t i = 0; i < congestion.per_road.rows(); ++i) {
      ff << congestion.per_road.road_ids[i] << ',' << format_number(congestion.free_flow[i].kmh)
         << ','
         << (congestion.free_flow[i].source == FreeFlowSource::supplied ? "supplied" : "estimated")
         << '\n';
    }
    out.text("free_flow.csv", ff.str());
  }

  std::vector<double> cf_total(flow.cols(), 0.0);
  for (std::size_t r = 0; r < flow.rows(); ++r) {
    for (std::size_t c = 0; c < flow.cols(); ++c) cf_total[c] += flow.at(r, c);
  }
  {
    std::ostringstream series;
    series << "interval,inrix,total_cf,excluded_roads\n";
    for (std::size_t c = 0; c < congestion.network.size(); ++c) {
      series << interval_label(congestion.per_road.intervals[c]) << ','
             << format_number(congestion.network[c]) << ',' << format_number(cf_total[c]) << ','
             << congestion.excluded_roads[c] << '\n';
    }
    out.text("network_series.csv", series.str());
  }

  const auto daily = daily_aggregates(flow, congestion);
  {
    std::ostringstream d;
    d << "day,total_cf,mean_dc,partial\n";
    for (const auto& agg : daily) {
      d << format_day(agg.day) << ',' << agg.total_cf << ',' << format_number(agg.mean_dc) << ','
        << (agg.partial ? "true" : "false") << '\n';
    }
    out.text("daily.csv", d.str());
  }

  auto dc = dc_profiles(congestion);
  auto cf = cf_profiles(flow);
  normalize_profiles(dc);
  normalize_profiles(cf);
  json fits = json::array();
  for (const auto& group : effective_groups(cfg, flow.intervals)) {
    const auto fit = fit_scenario(group, dc, cf);
    fits.push_back({{"scenario", group.name}, {"dc", fit_json(fit.dc)}, {"cf", fit_json(fit.cf)}});
    write_timeseries(out, group, dc, cf);
  }
  out.json_doc("fitting.json", {{"scenarios", fits}});

  if (cfg.all_heatmaps) {
    stage = "export";
    const auto flow_real = to_real_matrix(flow);
    for (const auto& interval : congestion.per_road.intervals) {
      out.json_doc("heatmaps/" + heatmap_name("inrix", interval),
                   export_heatmap(congestion.per_road, net, interval));
      out.json_doc("heatmaps/" + heatmap_name("flow", interval),
                   export_heatmap(flow_real, net, interval));
    }
  }
}

RoadNetwork load_configured_network(const RunConfig& cfg, json& manifest) {
  NetworkLoadStats stats;
  auto net = load_network(cfg.network, {cfg.anomaly_kmh}, &stats);
  manifest["network"] = {{"features", stats.features},
                         {"loaded", stats.loaded},
                         {"geometry_errors", stats.geometry_errors},
                         {"attribute_errors", stats.attribute_errors},
                         {"ignored_free_flow", stats.ignored_free_flow}};
  if (net.empty()) throw ConfigError("network " + cfg.network.string() + " has no usable roads");
  return net;
}

template <typename Body>
json run_stages(const RunConfig& cfg, const std::string& manifest_name, Body body) {
  cfg.validate();
  OutputDir out(cfg.output_dir);
  json manifest = {{"config", cfg.to_json()}, {"status", "running"}};
  std::string stage = "config";
  auto finish = [&](const json& m) {
    json doc = m;
    doc["outputs"] = out.digests();
    std::ofstream file(out.root() / manifest_name, std::ios::binary);
    file << doc.dump(2) << "\n";
    return doc;
  };
  try {
    body(out, manifest, stage);
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["failed_stage"] = stage;
    manifest["error"] = e.what();
    finish(manifest);
    const bool quality = dynamic_cast<const DataQualityError*>(&e) != nullptr;
    throw StageError(stage, e, quality);
  }
  manifest["status"] = "complete";
  return finish(manifest);
}

}  // namespace

StageError::StageError(std::string stage, const std::exception& cause, bool data_quality)
    : std::runtime_error(stage + ": " + cause.what()),
      stage_(std::move(stage)),
      data_quality_(data_quality) {}

void RunConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(static_cast<double>(chunk_size), "chunk_size");
  positive(max_dist_km, "max_dist_km");
  positive(pair_dt_max_s, "pair_dt_max_s");
  positive(anomaly_kmh, "anomaly_kmh");
  positive(missing_fraction, "missing_fraction");
  if (missing_fraction > 1.0) throw ConfigError("missing_fraction must be <= 1");
  if (!(max_error_rate >= 0.0 && max_error_rate <= 1.0)) {
    throw ConfigError("max_error_rate must lie in [0, 1]");
  }
  std::map<std::chrono::sys_days, std::string> owner;
  std::set<std::string> names;
  for (const auto& g : groups) {
    if (g.name.empty()) throw ConfigError("scenario groups need a name");
    if (!names.insert(g.name).second) throw ConfigError("duplicate scenario group " + g.name);
    for (const auto day : g.days) {
      const auto [it, inserted] = owner.emplace(day, g.name);
      if (!inserted && it->second != g.name) {
        throw ConfigError("day " + format_day(day) + " is in both " + it->second + " and " +
                          g.name);
      }
    }
  }
  if (offset && !offset->within_cap()) throw ConfigError("explicit offset exceeds the 0.01 degree cap");
}

json RunConfig::to_json() const {
  static constexpr const char* kFieldNames[] = {"driver_id", "order_id", "timestamp", "lon", "lat"};
  json columns = json::array();
  for (const auto f : layout.order) columns.push_back(kFieldNames[static_cast<int>(f)]);
  json group_doc = json::object();
  for (const auto& g : groups) {
    json days = json::array();
    for (const auto d : g.days) days.push_back(format_day(d));
    group_doc[g.name] = days;
  }
  // no output_dir: reruns into another directory must give the same manifest
  json doc = {{"traces", traces.string()},
              {"network", network.string()},
              {"columns", columns},
              {"delimiter", std::string(1, layout.delimiter)},
              {"tz_offset_s", tz_offset_s},
              {"chunk_size", chunk_size},
              {"max_error_rate", max_error_rate},
              {"max_dist_km", max_dist_km},
              {"pair_dt_max_s", pair_dt_max_s},
              {"anomaly_kmh", anomaly_kmh},
              {"missing_fraction", missing_fraction},
              {"offset_sample", offset_sample},
              {"offset_min_sample", offset_min_sample},
              {"groups", group_doc},
              {"all_heatmaps", all_heatmaps}};
  doc["offset"] = offset ? json{{"dlat", offset->dlat}, {"dlon", offset->dlon}} : json();
  return doc;
}

OffsetEstimate estimate_dataset_offset(const RunConfig& cfg, const RoadNetwork& net) {
  IngestConfig ingest{cfg.layout, std::max<std::size_t>(cfg.offset_sample, 1), cfg.max_error_rate,
                      true};
  ChunkReader reader(cfg.traces, ingest);
  std::vector<TraceRecord> sample;
  if (auto batch = reader.next()) sample = std::move(*batch);
  return estimate_offset(sample, net, {cfg.offset_min_sample});
}

json run_pipeline(const RunConfig& cfg) {
  return run_stages(cfg, "manifest.json", [&](OutputDir& out, json& manifest, std::string& stage) {
    using clock = std::chrono::steady_clock;
    const auto t_start = clock::now();
    stage = "network";
    const RoadNetwork net = load_configured_network(cfg, manifest);

    stage = "offset";
    OffsetVector offset;
    if (cfg.offset) {
      offset = *cfg.offset;
      manifest["offset"] = {{"dlat", offset.dlat}, {"dlon", offset.dlon}, {"source", "supplied"}};
    } else {
      const auto est = estimate_dataset_offset(cfg, net);
      offset = est.offset;
      manifest["offset"] = {{"dlat", offset.dlat},
                            {"dlon", offset.dlon},
                            {"source", "estimated"},
                            {"sample_size", est.sample_size},
                            {"iterations", est.iterations},
                            {"converged", est.converged},
                            {"median_residual_km", est.median_residual_km}};
    }
    spdlog::info("offset dlat {:.7f} dlon {:.7f}", offset.dlat, offset.dlon);

    stage = "ingest";
    IngestConfig ingest{cfg.layout, cfg.chunk_size, cfg.max_error_rate, true};
    ChunkReader reader(cfg.traces, ingest);
    std::vector<RoadId> road_ids;
    for (const auto& seg : net.segments()) road_ids.push_back(seg.id);
    TensorBuilder builder(road_ids, {cfg.pair_dt_max_s, std::nullopt, 0});
    std::uint64_t offset_skipped = 0;
    std::uint64_t matched = 0;
    std::uint64_t unmatched = 0;
    json counts;
    auto record_counts = [&] {
      const auto& s = reader.stats();
      counts = {{"rows", s.rows},
                {"parsed", s.parsed},
                {"parse_errors", s.parse_errors},
                {"validation_errors", s.validation_errors},
                {"header_rows", s.header_rows},
                {"batches", s.batches},
                {"offset_skipped", offset_skipped},
                {"matched", matched},
                {"unmatched", unmatched}};
      manifest["counts"] = counts;
    };
    try {
      while (auto batch = reader.next()) {
        auto shifted = apply_offset(std::move(*batch), offset);
        offset_skipped += shifted.skipped;
        auto result = match_batch(std::move(shifted.records), net, cfg.max_dist_km, cfg.tz_offset_s);
        matched += result.matched.size();
        unmatched += result.unmatched;
        builder.add(result.matched);
      }
    } catch (...) {
      record_counts();
      throw;
    }
    record_counts();
    const double rate = matched + unmatched == 0
                            ? 0.0
                            : static_cast<double>(matched) / static_cast<double>(matched + unmatched);
    manifest["match_rate"] = rate;
    spdlog::info("ingest: {} rows, {} parsed, {} matched ({:.2f}%), {:.1f}s", reader.stats().rows,
                 reader.stats().parsed, matched, 100.0 * rate,
                 std::chrono::duration<double>(clock::now() - t_start).count());

    stage = "tensors";
    const Tensors tensors = builder.finish();
    manifest["tensors"] = {{"points", tensors.points},
                           {"orders", tensors.orders},
                           {"pairs", tensors.pairs},
                           {"roads", tensors.flow.rows()},
                           {"intervals", tensors.flow.cols()}};
    out.matrix("flow.csv", tensors.flow);
    out.matrix("speed_raw.csv", tensors.speed);
    out.json_doc("flow.meta.json", {{"interval_seconds", kSlotSeconds},
                                    {"tz_offset_s", cfg.tz_offset_s},
                                    {"max_dist_km", cfg.max_dist_km},
                                    {"offset", {{"dlat", offset.dlat}, {"dlon", offset.dlon}}}});

    analyze_and_export(cfg, net, tensors.flow, tensors.speed, out, manifest, stage);
    spdlog::info("pipeline finished in {:.1f}s",
                 std::chrono::duration<double>(clock::now() - t_start).count());
  });
}

json run_analysis(const RunConfig& cfg) {
  return run_stages(cfg, "analysis_manifest.json",
                    [&](OutputDir& out, json& manifest, std::string& stage) {
                      stage = "network";
                      const RoadNetwork net = load_configured_network(cfg, manifest);
                      stage = "load";
                      const auto flow = read_flow_matrix_csv(out.root() / "flow.csv");
                      const auto speed = read_speed_matrix_csv(out.root() / "speed_raw.csv");
                      if (flow.intervals != speed.intervals) {
                        throw ConfigError("flow.csv and speed_raw.csv have different interval axes");
                      }
                      analyze_and_export(cfg, net, flow, speed, out, manifest, stage);
                    });
}

std::vector<std::string> export_scenario_timeseries(const RunConfig& cfg,
                                                    const std::string& scenario) {
  const auto path = cfg.output_dir / "network_series.csv";
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string() + " (run estimate first)");
  std::string line;
  std::getline(in, line);
  std::vector<IntervalIndex> axis;
  std::vector<double> dc_values;
  std::vector<double> cf_values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string label, dc, cf;
    std::getline(row, label, ',');
    std::getline(row, dc, ',');
    std::getline(row, cf, ',');
    const auto interval = parse_interval_label(label);
    if (!interval) throw ConfigError("bad interval label in " + path.string() + ": " + label);
    axis.push_back(*interval);
    dc_values.push_back(dc.empty() ? std::nan("") : std::stod(dc));
    cf_values.push_back(cf.empty() ? std::nan("") : std::stod(cf));
  }
  auto dc = daily_profiles(axis, dc_values);
  auto cf = daily_profiles(axis, cf_values);
  normalize_profiles(dc);
  normalize_profiles(cf);

  const auto groups = effective_groups(cfg, axis);
  const auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const ScenarioGroup& g) { return g.name == scenario; });
  if (it == groups.end()) throw ConfigError("unknown scenario '" + scenario + "'");
  OutputDir out(cfg.output_dir);
  write_timeseries(out, *it, dc, cf);
  const json written = out.digests();
  std::vector<std::string> names;
  for (const auto& [name, digest] : written.items()) names.push_back(name);
  return names;
}

std::filesystem::path export_heatmap_file(const RunConfig& cfg, const std::string& matrix,
                                          const IntervalIndex& interval) {
  if (matrix != "flow" && matrix != "speed" && matrix != "inrix") {
    throw ConfigError("heatmap matrix must be flow, speed or inrix");
  }
  json manifest;
  const RoadNetwork net = load_configured_network(cfg, manifest);
  const auto values = read_speed_matrix_csv(cfg.output_dir / (matrix + ".csv"));
  const std::string name = heatmap_name(matrix, interval);
  OutputDir out(cfg.output_dir);
  out.json_doc(name, export_heatmap(values, net, interval));
  return out.root() / name;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xF];
  }
  return hex;
}

}  // namespace carhail
