#include "carhail/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "carhail/errors.hpp"
#include "carhail/matrix_io.hpp"

namespace carhail::synth {

namespace {

constexpr double kNodeExclusionKm = 0.001;
constexpr double kAnomalyJumpKm = 0.15;

/// Portable draws on top of mt19937_64 (the std distributions are
/// implementation-defined, which would break byte-identical output).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

struct Road {
  RoadId id;
  int from;  // node index
  int to;
  double length_km;
  double speed_kmh;
};

struct Grid {
  int cols;
  int rows;
  std::vector<LatLon> nodes;
  std::vector<Road> roads;  // sorted by id
  std::map<std::pair<int, int>, std::size_t> edge;  // (node, node) -> road index, both ways

  int node(int c, int r) const { return r * cols + c; }
};

Grid build_grid(const Scenario& sc, Rng& rng) {
  Grid g{sc.grid_cols, sc.grid_rows, {}, {}, {}};
  const double dlat = sc.segment_km / kKmPerDegree;
  const double dlon = sc.segment_km / (kKmPerDegree * std::cos(deg_to_rad(sc.origin.lat)));
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      g.nodes.push_back({sc.origin.lat + r * dlat, sc.origin.lon + c * dlon});
    }
  }
  RoadId next_id = 1;
  auto add = [&](int a, int b) {
    const double len = haversine_km(g.nodes[a], g.nodes[b]);
    g.edge[{a, b}] = g.roads.size();
    g.edge[{b, a}] = g.roads.size();
    g.roads.push_back({next_id++, a, b, len, 0.0});
  };
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c + 1 < g.cols; ++c) add(g.node(c, r), g.node(c + 1, r));
  }
  for (int c = 0; c < g.cols; ++c) {
    for (int r = 0; r + 1 < g.rows; ++r) add(g.node(c, r), g.node(c, r + 1));
  }
  for (auto& road : g.roads) road.speed_kmh = rng.uniform(sc.speed_min_kmh, sc.speed_max_kmh);
  return g;
}

/// Largest-remainder split of `total` orders over slot weights.
std::vector<int> allocate(int total, const std::vector<double>& weights) {
  double sum = 0.0;
  for (double w : weights) sum += w;
  std::vector<int> counts(weights.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t s = 0; s < weights.size(); ++s) {
    const double exact = total * weights[s] / sum;
    counts[s] = static_cast<int>(std::floor(exact));
    assigned += counts[s];
    remainders.emplace_back(exact - counts[s], s);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int i = 0; i < total - assigned; ++i) ++counts[remainders[static_cast<std::size_t>(i)].second];
  return counts;
}

// One leg of a trip: a road driven from `entry` node.
struct Leg {
  std::size_t road;
  bool forward;  // from road.from to road.to
  double t_start;
  double t_end;
  double speed_kmh;
};

std::vector<Leg> plan_route(const Grid& g, const Scenario& sc, Rng& rng, double t0,
                            std::int64_t day_start_utc) {
  const int n_legs = rng.integer(sc.min_trip_segments, sc.max_trip_segments);
  int c = rng.integer(0, g.cols - 1);
  int r = rng.integer(0, g.rows - 1);
  int dir = -1;  // 0 E, 1 N, 2 W, 3 S
  constexpr int dc[4] = {1, 0, -1, 0};
  constexpr int dr[4] = {0, 1, 0, -1};

  std::vector<Leg> legs;
  double t = t0;
  for (int i = 0; i < n_legs; ++i) {
    std::vector<int> options;
    for (int d = 0; d < 4; ++d) {
      const int nc = c + dc[d];
      const int nr = r + dr[d];
      if (nc < 0 || nc >= g.cols || nr < 0 || nr >= g.rows) continue;
      if (dir >= 0 && d == (dir + 2) % 4) continue;
      options.push_back(d);
    }
    if (options.empty()) break;
    int next = options[static_cast<std::size_t>(rng.integer(0, static_cast<int>(options.size()) - 1))];
    if (dir >= 0 && std::find(options.begin(), options.end(), dir) != options.end() &&
        rng.uniform() < 0.6) {
      next = dir;
    }
    const int a = g.node(c, r);
    const int b = g.node(c + dc[next], r + dr[next]);
    const std::size_t road = g.edge.at({a, b});
    const auto slot = static_cast<std::size_t>(
        ((static_cast<std::int64_t>(std::floor(t)) - day_start_utc) % 86'400 + 86'400) % 86'400 /
        kSlotSeconds);
    double speed = g.roads[road].speed_kmh;
    if (!sc.speed_factor.empty()) speed *= sc.speed_factor[slot];
    const double duration = g.roads[road].length_km / speed * 3600.0;
    legs.push_back({road, g.roads[road].from == a, t, t + duration, speed});
    t += duration;
    c += dc[next];
    r += dr[next];
    dir = next;
  }
  return legs;
}

struct Ping {
  std::int64_t timestamp;
  std::uint32_t order;
  std::uint32_t seq;
  std::uint32_t driver;
  LatLon emitted;
};

std::vector<double> parse_list(std::string_view value) {
  std::vector<double> out;
  std::string token;
  std::istringstream in{std::string(value)};
  while (std::getline(in, token, ',')) {
    const auto b = token.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = token.find_last_not_of(" \t");
    out.push_back(std::stod(token.substr(b, e - b + 1)));
  }
  return out;
}

}  // namespace

std::vector<double> demand_from_peaks(const std::vector<DemandPeak>& peaks, double floor) {
  std::vector<double> w(kSlotsPerDay, floor);
  for (int s = 0; s < kSlotsPerDay; ++s) {
    const double hour = (s + 0.5) * 0.25;
    for (const auto& p : peaks) {
      const double z = (hour - p.hour) / p.width_h;
      w[static_cast<std::size_t>(s)] += p.amplitude * std::exp(-0.5 * z * z);
    }
  }
  return w;
}

std::vector<double> bimodal_profile() {
  return demand_from_peaks({{8.0, 1.0, 1.0}, {18.0, 1.0, 1.2}});
}

std::vector<double> multipeak_profile() {
  return demand_from_peaks({{8.5, 1.0, 0.6}, {12.0, 0.8, 0.6}, {18.0, 1.0, 0.6}, {21.5, 0.9, 0.6}},
                           0.02);
}

std::vector<double> flat_profile() { return std::vector<double>(kSlotsPerDay, 1.0); }

void Scenario::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("infeasible scenario: " + msg); };
  if (grid_cols < 1 || grid_rows < 1 || (grid_cols < 2 && grid_rows < 2)) fail("grid has no roads");
  if (!(segment_km > 0.0)) fail("segment_km must be > 0");
  if (days < 1) fail("days must be >= 1");
  if (orders_per_day < 0) fail("orders_per_day must be >= 0");
  if (drivers < 1) fail("drivers must be >= 1");
  if (demand_profile.size() != static_cast<std::size_t>(kSlotsPerDay)) fail("demand needs 96 weights");
  double total = 0.0;
  for (double w : demand_profile) {
    if (!(w >= 0.0)) fail("negative demand weight");
    total += w;
  }
  if (!(total > 0.0)) fail("demand profile is all zero");
  if (!day_scale.empty() && day_scale.size() != static_cast<std::size_t>(days)) {
    fail("day_scale needs one factor per day");
  }
  if (!(speed_min_kmh > 0.0) || speed_max_kmh < speed_min_kmh) fail("speed range must be positive");
  if (!speed_factor.empty()) {
    if (speed_factor.size() != static_cast<std::size_t>(kSlotsPerDay)) fail("speed_factor needs 96 values");
    for (double f : speed_factor) {
      if (!(f > 0.0)) fail("speed factors must be > 0");
    }
  }
  if (!(ping_period_s >= 1.0)) fail("ping_period_s must be >= 1");
  if (min_trip_segments < 1 || max_trip_segments < min_trip_segments) fail("bad trip length range");
  if (!(noise_std_deg >= 0.0)) fail("noise_std_deg must be >= 0");
  if (!(anomaly_rate >= 0.0 && anomaly_rate <= 1.0)) fail("anomaly_rate must lie in [0, 1]");
}

void set_scenario_param(Scenario& sc, std::string_view key_in, std::string_view value_in) {
  const std::string key(key_in);
  const std::string value(value_in);
  try {
    if (key == "seed") sc.seed = std::stoull(value);
    else if (key == "grid_cols") sc.grid_cols = std::stoi(value);
    else if (key == "grid_rows") sc.grid_rows = std::stoi(value);
    else if (key == "segment_km") sc.segment_km = std::stod(value);
    else if (key == "origin_lat") sc.origin.lat = std::stod(value);
    else if (key == "origin_lon") sc.origin.lon = std::stod(value);
    else if (key == "first_day") {
      const auto day = parse_day(value);
      if (!day) throw ConfigError("bad first_day '" + value + "'");
      sc.first_day = *day;
    }
    else if (key == "days") sc.days = std::stoi(value);
    else if (key == "tz_offset_s") sc.tz_offset_s = std::stoll(value);
    else if (key == "orders_per_day") sc.orders_per_day = std::stoi(value);
    else if (key == "drivers") sc.drivers = std::stoi(value);
    else if (key == "demand") {
      if (value == "bimodal") sc.demand_profile = bimodal_profile();
      else if (value == "multipeak") sc.demand_profile = multipeak_profile();
      else if (value == "flat") sc.demand_profile = flat_profile();
      else sc.demand_profile = parse_list(value);
    }
    else if (key == "demand_peaks") {
      // hour:amplitude:width;hour:amplitude:width...
      std::vector<DemandPeak> peaks;
      std::istringstream in(value);
      std::string item;
      while (std::getline(in, item, ';')) {
        DemandPeak p;
        if (std::sscanf(item.c_str(), "%lf:%lf:%lf", &p.hour, &p.amplitude, &p.width_h) != 3) {
          throw ConfigError("bad demand peak '" + item + "'");
        }
        peaks.push_back(p);
      }
      sc.demand_profile = demand_from_peaks(peaks);
    }
    else if (key == "day_scale") sc.day_scale = parse_list(value);
    else if (key == "speed_min_kmh") sc.speed_min_kmh = std::stod(value);
    else if (key == "speed_max_kmh") sc.speed_max_kmh = std::stod(value);
    else if (key == "speed_factor") {
      if (value == "none") sc.speed_factor.clear();
      else if (value == "rush_hours") {
        // Slower around the commuter peaks.
        const auto dip = demand_from_peaks({{8.0, 0.45, 1.0}, {18.0, 0.5, 1.2}}, 0.0);
        sc.speed_factor.assign(kSlotsPerDay, 1.0);
        for (std::size_t s = 0; s < dip.size(); ++s) sc.speed_factor[s] = 1.0 - dip[s];
      } else {
        sc.speed_factor = parse_list(value);
      }
    }
    else if (key == "ping_period_s") sc.ping_period_s = std::stod(value);
    else if (key == "min_trip_segments") sc.min_trip_segments = std::stoi(value);
    else if (key == "max_trip_segments") sc.max_trip_segments = std::stoi(value);
    else if (key == "noise_std_deg") sc.noise_std_deg = std::stod(value);
    else if (key == "offset_dlat") sc.injected_offset.dlat = std::stod(value);
    else if (key == "offset_dlon") sc.injected_offset.dlon = std::stod(value);
    else if (key == "anomaly_rate") sc.anomaly_rate = std::stod(value);
    else if (key == "supply_free_flow") sc.supply_free_flow = value == "true" || value == "1";
    else throw ConfigError("unknown scenario key '" + key + "'");
  } catch (const std::logic_error&) {
    throw ConfigError("bad value for scenario key '" + key + "': '" + value + "'");
  }
}

Scenario parse_scenario(std::string_view text, Scenario base) {
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) throw ConfigError("scenario line without '=': " + line);
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    set_scenario_param(base, strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
  }
  return base;
}

Scenario load_scenario(const std::filesystem::path& path, Scenario base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str(), std::move(base));
}

SyntheticData generate(const Scenario& sc) {
  sc.validate();
  Rng rng(sc.seed);
  const Grid grid = build_grid(sc, rng);

  std::vector<RoadId> road_ids;
  for (const auto& road : grid.roads) road_ids.push_back(road.id);
  const auto axis = day_intervals(sc.first_day, sc.days);
  const std::size_t cols = axis.size();

  SyntheticData out;
  GroundTruth& truth = out.truth;
  truth.flow = FlowMatrix(road_ids, axis);
  truth.pair_counts = FlowMatrix(road_ids, axis);
  truth.speed = SpeedMatrix(road_ids, axis);
  for (const auto& road : grid.roads) truth.kinematic_speed_kmh.push_back(road.speed_kmh);

  const std::int64_t first_day_s = sc.first_day.time_since_epoch().count() * std::int64_t{86'400};
  const std::int64_t axis_begin = first_day_s - sc.tz_offset_s;
  const std::int64_t axis_end = axis_begin + std::int64_t{sc.days} * 86'400;
  auto column_of = [&](std::int64_t ts) {
    return static_cast<std::size_t>((ts - axis_begin) / kSlotSeconds);
  };

  std::vector<Ping> pings;
  std::uint32_t order = 0;
  for (int d = 0; d < sc.days; ++d) {
    const double scale = sc.day_scale.empty() ? 1.0 : sc.day_scale[static_cast<std::size_t>(d)];
    const auto counts =
        allocate(static_cast<int>(std::lround(sc.orders_per_day * scale)), sc.demand_profile);
    const std::int64_t day_start = axis_begin + std::int64_t{d} * 86'400;
    for (std::size_t slot = 0; slot < counts.size(); ++slot) {
      for (int k = 0; k < counts[slot]; ++k, ++order) {
        const auto driver = static_cast<std::uint32_t>(rng.integer(0, sc.drivers - 1));
        const std::int64_t t0 = day_start + static_cast<std::int64_t>(slot) * kSlotSeconds +
                                rng.integer(0, static_cast<int>(kSlotSeconds) - 1);
        const auto legs = plan_route(grid, sc, rng, static_cast<double>(t0), axis_begin);
        if (legs.empty()) continue;
        ++truth.orders;

        // Emitted pings of this order: (timestamp, road index, along-road km).
        std::vector<std::tuple<std::int64_t, std::size_t, double>> own;
        std::size_t leg = 0;
        std::uint32_t seq = 0;
        for (std::int64_t m = 0;; ++m) {
          const std::int64_t ts = t0 + std::llround(static_cast<double>(m) * sc.ping_period_s);
          const auto t = static_cast<double>(ts);
          while (leg < legs.size() && t > legs[leg].t_end) ++leg;
          if (leg == legs.size() || ts >= axis_end) break;
          const Leg& L = legs[leg];
          const Road& road = grid.roads[L.road];
          const double travelled = (t - L.t_start) / 3600.0 * L.speed_kmh;
          const double along = L.forward ? travelled : road.length_km - travelled;
          if (along < kNodeExclusionKm || along > road.length_km - kNodeExclusionKm) {
            ++truth.dropped_near_node;
            continue;
          }
          double shown = along;
          if (sc.anomaly_rate > 0.0 && rng.uniform() < sc.anomaly_rate) {
            ++truth.anomalous_pings;
            shown = along + kAnomalyJumpKm <= road.length_km - kNodeExclusionKm
                        ? along + kAnomalyJumpKm
                        : std::max(kNodeExclusionKm, along - kAnomalyJumpKm);
          }
          const LatLon& a = grid.nodes[static_cast<std::size_t>(road.from)];
          const LatLon& b = grid.nodes[static_cast<std::size_t>(road.to)];
          const double f = shown / road.length_km;
          LatLon p{a.lat + f * (b.lat - a.lat), a.lon + f * (b.lon - a.lon)};
          if (sc.noise_std_deg > 0.0) {
            p.lat += sc.noise_std_deg * rng.normal();
            p.lon += sc.noise_std_deg * rng.normal();
          }
          p.lat += sc.injected_offset.dlat;
          p.lon += sc.injected_offset.dlon;
          pings.push_back({ts, order, seq++, driver, p});
          own.emplace_back(ts, L.road, along);
        }

        // Ground truth from labels and exact along-road positions.
        std::set<std::size_t> cells;
        for (std::size_t i = 0; i < own.size(); ++i) {
          const auto& [ts, road, along] = own[i];
          const std::size_t cell = road * cols + column_of(ts);
          cells.insert(cell);
          if (i + 1 == own.size()) continue;
          const auto& [ts2, road2, along2] = own[i + 1];
          const auto dt = static_cast<double>(ts2 - ts);
          if (road2 != road || !(dt > 0.0) || dt > kDefaultPairDtMaxS) continue;
          truth.speed.values[cell] += std::abs(along2 - along) / (dt / 3600.0);
          ++truth.pair_counts.values[cell];
        }
        for (const std::size_t cell : cells) ++truth.flow.values[cell];
      }
    }
  }
  for (std::size_t cell = 0; cell < truth.speed.values.size(); ++cell) {
    if (truth.pair_counts.values[cell] > 0) {
      truth.speed.values[cell] /= truth.pair_counts.values[cell];
    }
  }
  truth.pings = pings.size();

  std::sort(pings.begin(), pings.end(), [](const Ping& a, const Ping& b) {
    return std::tie(a.timestamp, a.order, a.seq) < std::tie(b.timestamp, b.order, b.seq);
  });
  std::string& csv = out.traces_csv;
  csv.reserve(pings.size() * 56 + 64);
  csv += "driver_id,order_id,timestamp,lon,lat\n";
  char line[160];
  for (const auto& p : pings) {
    const int n = std::snprintf(line, sizeof line, "d%05u,o%07u,%lld,%.8f,%.8f\n", p.driver, p.order,
                                static_cast<long long>(p.timestamp), p.emitted.lon, p.emitted.lat);
    csv.append(line, static_cast<std::size_t>(n));
  }

  nlohmann::json features = nlohmann::json::array();
  for (std::size_t i = 0; i < grid.roads.size(); ++i) {
    const Road& road = grid.roads[i];
    const LatLon& a = grid.nodes[static_cast<std::size_t>(road.from)];
    const LatLon& b = grid.nodes[static_cast<std::size_t>(road.to)];
    nlohmann::json props = {{"id", road.id}};
    if (sc.supply_free_flow) props["free_flow_kmh"] = std::min(road.speed_kmh, kDefaultAnomalyKmh);
    features.push_back({{"type", "Feature"},
                        {"properties", props},
                        {"geometry",
                         {{"type", "LineString"},
                          {"coordinates", {{a.lon, a.lat}, {b.lon, b.lat}}}}}});
  }
  out.network_geojson =
      nlohmann::json{{"type", "FeatureCollection"}, {"features", features}}.dump(1) + "\n";
  return out;
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (dir / name).string());
    out << content;
  };
  write("network.geojson", data.network_geojson);
  write("traces.csv", data.traces_csv);
  write_matrix_csv(dir / "truth_flow.csv", data.truth.flow);
  write_matrix_csv(dir / "truth_speed.csv", data.truth.speed);
  const nlohmann::json meta = {
      {"pings", data.truth.pings},
      {"orders", data.truth.orders},
      {"dropped_near_node", data.truth.dropped_near_node},
      {"anomalous_pings", data.truth.anomalous_pings},
      {"road_ids", data.truth.flow.road_ids},
      {"kinematic_speed_kmh", data.truth.kinematic_speed_kmh},
  };
  write("truth.json", meta.dump(1) + "\n");
}

template <typename T>
ErrorReport compare(const SpatioTemporalMatrix<T>& estimated, const SpatioTemporalMatrix<T>& truth) {
  if (estimated.road_ids != truth.road_ids || estimated.intervals != truth.intervals ||
      estimated.values.size() != truth.values.size()) {
    throw std::invalid_argument("compare: matrices have different axes");
  }
  ErrorReport rep;
  rep.cells = truth.values.size();
  double abs_sum = 0.0;
  double rel_sum = 0.0;
  std::size_t rel_n = 0;
  for (std::size_t i = 0; i < rep.cells; ++i) {
    const auto e = static_cast<double>(estimated.values[i]);
    const auto t = static_cast<double>(truth.values[i]);
    const double diff = std::abs(e - t);
    if (estimated.values[i] != truth.values[i]) {
      ++rep.mismatched;
      rep.exact = false;
    }
    if ((t == 0.0) != (e == 0.0)) ++rep.zero_mismatch;
    rep.max_abs = std::max(rep.max_abs, diff);
    abs_sum += diff;
    if (t != 0.0) {
      const double rel = diff / std::abs(t);
      rep.max_rel = std::max(rep.max_rel, rel);
      rel_sum += rel;
      ++rel_n;
    }
  }
  if (rep.cells > 0) rep.mean_abs = abs_sum / static_cast<double>(rep.cells);
  if (rel_n > 0) rep.mean_rel = rel_sum / static_cast<double>(rel_n);
  return rep;
}

template ErrorReport compare(const FlowMatrix&, const FlowMatrix&);
template ErrorReport compare(const SpeedMatrix&, const SpeedMatrix&);

}  // namespace carhail::synth
