// carhail: car-hailing traces to road-level flow/speed matrices and congestion analytics.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "carhail/errors.hpp"
#include "carhail/pipeline.hpp"
#include "carhail/synthetic.hpp"

namespace {

using namespace carhail;

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitDataQuality = 2;

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

OffsetVector parse_offset(const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.size() != 2) throw ConfigError("--offset expects dlat,dlon");
  try {
    return {std::stod(parts[0]), std::stod(parts[1])};
  } catch (const std::exception&) {
    throw ConfigError("--offset expects two numbers, got '" + text + "'");
  }
}

std::vector<std::chrono::sys_days> parse_days(const std::vector<std::string>& items) {
  std::vector<std::chrono::sys_days> days;
  for (const auto& item : items) {
    for (const auto& text : split(item, ',')) {
      const auto day = parse_day(text);
      if (!day) throw ConfigError("bad date '" + text + "' (expected YYYY-MM-DD)");
      days.push_back(*day);
    }
  }
  return days;
}

struct CliOptions {
  RunConfig run;
  std::string columns;
  std::string delimiter = ",";
  std::string offset;
  std::vector<std::string> holiday;
  std::vector<std::string> weekday;
  std::vector<std::string> weekend;
  std::string log_level = "info";

  std::string interval;
  std::string matrix = "inrix";
  std::string scenario_name;

  std::string scenario_file;
  std::vector<std::string> params;
  std::string synth_out = "synthetic";
};

RunConfig finalize(CliOptions& opts) {
  RunConfig cfg = opts.run;
  if (!opts.columns.empty()) {
    cfg.layout = ColumnLayout::from_names(opts.columns);
  }
  if (opts.delimiter.size() != 1) throw ConfigError("--delimiter must be one character");
  cfg.layout.delimiter = opts.delimiter == "\\t" ? '\t' : opts.delimiter[0];
  if (!opts.offset.empty()) cfg.offset = parse_offset(opts.offset);
  const std::pair<const char*, std::vector<std::string>*> groups[] = {
      {"holiday", &opts.holiday}, {"weekday", &opts.weekday}, {"weekend", &opts.weekend}};
  for (const auto& [name, items] : groups) {
    auto days = parse_days(*items);
    if (!days.empty()) cfg.groups.push_back({name, std::move(days)});
  }
  cfg.validate();
  return cfg;
}

void require_inputs(const RunConfig& cfg, bool traces) {
  if (cfg.network.empty()) throw ConfigError("--network is required");
  if (traces && cfg.traces.empty()) throw ConfigError("--traces is required");
}

void print_json(const nlohmann::json& doc) { std::cout << doc.dump(2) << "\n"; }

int run_synth(const CliOptions& opts) {
  synth::Scenario scenario;
  if (!opts.scenario_file.empty()) scenario = synth::load_scenario(opts.scenario_file);
  for (const auto& kv : opts.params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--param expects key=value, got '" + kv + "'");
    synth::set_scenario_param(scenario, kv.substr(0, eq), kv.substr(eq + 1));
  }
  scenario.validate();
  const auto data = synth::generate(scenario);
  synth::write_synthetic(data, opts.synth_out);
  print_json({{"output_dir", opts.synth_out},
              {"pings", data.truth.pings},
              {"orders", data.truth.orders},
              {"roads", data.truth.flow.rows()},
              {"intervals", data.truth.flow.cols()}});
  return kExitOk;
}

// High-water resident set of this process image. ru_maxrss seen by a parent
// also counts memory from before exec, so the process reports its own.
long peak_rss_kib() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmHWM:", 0) == 0) return std::strtol(line.c_str() + 6, nullptr, 10);
  }
  return -1;
}

int run_scan(const RunConfig& cfg) {
  if (cfg.traces.empty()) throw ConfigError("--traces is required");
  ChunkReader reader(cfg.traces, {cfg.layout, cfg.chunk_size, cfg.max_error_rate, true});
  std::size_t max_batch = 0;
  while (auto batch = reader.next()) max_batch = std::max(max_batch, batch->size());
  const auto& s = reader.stats();
  print_json({{"rows", s.rows},
              {"parsed", s.parsed},
              {"parse_errors", s.parse_errors},
              {"validation_errors", s.validation_errors},
              {"batches", s.batches},
              {"max_batch", max_batch},
              {"bytes", s.bytes},
              {"peak_rss_kib", peak_rss_kib()}});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Road-level traffic patterns from car-hailing GPS traces"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option defaults; flags take precedence");

  CliOptions opts;
  auto& run = opts.run;
  app.add_option("--traces", run.traces, "Trace CSV (plain or gzip)");
  app.add_option("--network", run.network, "Road network GeoJSON");
  app.add_option("-o,--out", run.output_dir, "Output directory")->capture_default_str();
  app.add_option("--columns", opts.columns,
                 "Column order, e.g. driver_id,order_id,timestamp,lon,lat");
  app.add_option("--delimiter", opts.delimiter, "Field delimiter")->capture_default_str();
  app.add_option("--tz-offset", run.tz_offset_s, "Local time offset from UTC in seconds")
      ->capture_default_str();
  app.add_option("--chunk-size", run.chunk_size, "Records per batch")->capture_default_str();
  app.add_option("--max-error-rate", run.max_error_rate, "Tolerated fraction of bad rows")
      ->capture_default_str();
  app.add_option("--max-dist-km", run.max_dist_km, "Map-matching distance gate")
      ->capture_default_str();
  app.add_option("--pair-dt-max", run.pair_dt_max_s, "Max seconds between paired points")
      ->capture_default_str();
  app.add_option("--anomaly-kmh", run.anomaly_kmh, "Speed anomaly threshold")
      ->capture_default_str();
  app.add_option("--missing-fraction", run.missing_fraction,
                 "Drop roads whose share of empty intervals exceeds this")
      ->capture_default_str();
  app.add_option("--offset", opts.offset, "Explicit coordinate shift dlat,dlon in degrees");
  app.add_option("--offset-sample", run.offset_sample, "Records used to estimate the offset")
      ->capture_default_str();
  app.add_option("--offset-min-sample", run.offset_min_sample)->capture_default_str();
  app.add_option("--holiday", opts.holiday, "Holiday dates YYYY-MM-DD[,...]");
  app.add_option("--weekday", opts.weekday, "Weekday dates YYYY-MM-DD[,...]");
  app.add_option("--weekend", opts.weekend, "Weekend dates YYYY-MM-DD[,...]");
  app.add_flag("--all-heatmaps", run.all_heatmaps, "Write flow and INRIX layers for every interval");
  app.add_option("--log-level", opts.log_level)
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}))
      ->capture_default_str();

  auto* estimate = app.add_subcommand("estimate", "Run the full pipeline");
  auto* offset = app.add_subcommand("offset", "Print the estimated coordinate shift");
  auto* analyze = app.add_subcommand("analyze", "Re-run cleaning and analysis from saved matrices");
  auto* heatmap = app.add_subcommand("heatmap", "Write one GeoJSON heatmap layer");
  heatmap->add_option("--interval", opts.interval, "Interval label YYYY-MM-DDTHH:MM")->required();
  heatmap->add_option("--matrix", opts.matrix, "flow, speed or inrix")
      ->check(CLI::IsMember({"flow", "speed", "inrix"}))
      ->capture_default_str();
  auto* timeseries = app.add_subcommand("timeseries", "Write scenario scatter CSV and SVG plots");
  timeseries->add_option("--scenario", opts.scenario_name, "holiday, weekday, weekend or all")
      ->required();
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic city with ground truth");
  synth_cmd->add_option("--scenario", opts.scenario_file, "Scenario file (key = value lines)");
  synth_cmd->add_option("--param", opts.params, "Scenario override key=value (repeatable)");
  synth_cmd->add_option("-o,--out", opts.synth_out, "Output directory")->capture_default_str();
  auto* scan = app.add_subcommand("scan", "Stream-parse a trace file and print ingest counts");
  for (auto* sub : {estimate, offset, analyze, heatmap, timeseries, synth_cmd, scan}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitFatal;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("carhail"));
  spdlog::set_level(spdlog::level::from_str(opts.log_level));

  try {
    if (synth_cmd->parsed()) return run_synth(opts);
    const RunConfig cfg = finalize(opts);
    if (scan->parsed()) return run_scan(cfg);
    if (estimate->parsed()) {
      require_inputs(cfg, true);
      const auto manifest = run_pipeline(cfg);
      print_json({{"status", manifest["status"]},
                  {"counts", manifest["counts"]},
                  {"offset", manifest["offset"]},
                  {"output_dir", cfg.output_dir.string()},
                  {"peak_rss_kib", peak_rss_kib()}});
      return kExitOk;
    }
    if (offset->parsed()) {
      require_inputs(cfg, true);
      const auto net = load_network(cfg.network, {cfg.anomaly_kmh});
      const auto est = estimate_dataset_offset(cfg, net);
      print_json({{"dlat", est.offset.dlat},
                  {"dlon", est.offset.dlon},
                  {"sample_size", est.sample_size},
                  {"inliers", est.inliers},
                  {"iterations", est.iterations},
                  {"converged", est.converged},
                  {"median_residual_km", est.median_residual_km}});
      return kExitOk;
    }
    if (analyze->parsed()) {
      require_inputs(cfg, false);
      const auto manifest = run_analysis(cfg);
      print_json({{"status", manifest["status"]}, {"roads", manifest["roads"]}});
      return kExitOk;
    }
    if (heatmap->parsed()) {
      require_inputs(cfg, false);
      const auto interval = parse_interval_label(opts.interval);
      if (!interval) throw ConfigError("bad interval label '" + opts.interval + "'");
      std::cout << export_heatmap_file(cfg, opts.matrix, *interval).string() << "\n";
      return kExitOk;
    }
    if (timeseries->parsed()) {
      for (const auto& name : export_scenario_timeseries(cfg, opts.scenario_name)) {
        std::cout << (cfg.output_dir / name).string() << "\n";
      }
      return kExitOk;
    }
  } catch (const StageError& e) {
    spdlog::error("{}", e.what());
    return e.data_quality() ? kExitDataQuality : kExitFatal;
  } catch (const DataQualityError& e) {
    spdlog::error("{}", e.what());
    return kExitDataQuality;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFatal;
  }
  return kExitFatal;
}
