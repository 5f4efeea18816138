#include "carhail/pattern_estimation.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>
#include <unordered_set>

#include <spdlog/spdlog.h>

namespace carhail {

namespace {

double pair_speed_kmh(double d_km, double dt_s) { return d_km / (dt_s / 3600.0); }

}  // namespace

std::vector<TracePair> build_pairs(std::span<const MatchedPoint> points, double max_dt_s) {
  std::vector<TracePair> pairs;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const MatchedPoint& a = points[i - 1];
    const MatchedPoint& b = points[i];
    if (a.road_id != b.road_id) continue;
    const auto dt = static_cast<double>(b.record.timestamp - a.record.timestamp);
    if (!(dt > 0.0) || dt > max_dt_s) continue;
    const double d = haversine_km(a.record.position(), b.record.position());
    pairs.push_back({a.road_id, d, dt, pair_speed_kmh(d, dt), a.interval});
  }
  return pairs;
}

double road_mean_speed(std::span<const TracePair> pairs) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : pairs) sum += p.v_kmh;
  return sum / static_cast<double>(pairs.size());
}

std::size_t flow_count(std::span<const MatchedPoint> points) {
  std::unordered_set<std::string_view> orders;
  for (const auto& p : points) orders.insert(p.record.order_id);
  return orders.size();
}

// ---------------------------------------------------------------------------

TensorBuilder::TensorBuilder(std::vector<RoadId> road_ids, TensorOptions options)
    : road_ids_(std::move(road_ids)), options_(options) {
  for (std::size_t i = 0; i < road_ids_.size(); ++i) {
    road_index_.emplace(road_ids_[i], static_cast<std::uint32_t>(i));
  }
}

void TensorBuilder::add(std::span<const MatchedPoint> batch) {
  points_.reserve(points_.size() + batch.size());
  for (const auto& m : batch) {
    const auto road = road_index_.find(m.road_id);
    if (road == road_index_.end()) continue;
    auto [it, inserted] =
        order_index_.try_emplace(m.record.order_id, static_cast<std::uint32_t>(order_names_.size()));
    if (inserted) order_names_.push_back(m.record.order_id);
    points_.push_back({it->second, road->second, m.record.timestamp, m.record.lat, m.record.lon,
                       static_cast<std::int32_t>(m.interval.day.time_since_epoch().count()),
                       m.interval.slot});
  }
}

Tensors TensorBuilder::finish() const {
  // Rank orders by id so accumulation order never depends on arrival order.
  std::vector<std::uint32_t> by_name(order_names_.size());
  std::iota(by_name.begin(), by_name.end(), 0U);
  std::sort(by_name.begin(), by_name.end(),
            [&](std::uint32_t a, std::uint32_t b) { return order_names_[a] < order_names_[b]; });
  std::vector<std::uint32_t> rank(order_names_.size());
  for (std::uint32_t r = 0; r < by_name.size(); ++r) rank[by_name[r]] = r;

  std::vector<Point> pts = points_;
  for (auto& p : pts) p.order = rank[p.order];
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return std::tie(a.order, a.timestamp, a.road, a.lat, a.lon) <
           std::tie(b.order, b.timestamp, b.road, b.lat, b.lon);
  });

  std::int32_t first_day = 0;
  std::int32_t n_days = 0;
  if (options_.first_day) {
    first_day = static_cast<std::int32_t>(options_.first_day->time_since_epoch().count());
    n_days = options_.n_days;
  } else if (!pts.empty()) {
    const auto [lo, hi] = std::minmax_element(
        pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.day < b.day; });
    first_day = lo->day;
    n_days = hi->day - lo->day + 1;
  }

  Tensors out;
  const auto axis = day_intervals(std::chrono::sys_days{std::chrono::days{first_day}}, n_days);
  out.flow = FlowMatrix(road_ids_, axis);
  out.pair_counts = FlowMatrix(road_ids_, axis);
  out.speed = SpeedMatrix(road_ids_, axis);
  out.points = pts.size();
  out.orders = order_names_.size();

  const std::size_t cols = axis.size();
  auto column = [&](const Point& p) -> std::optional<std::size_t> {
    const std::int32_t d = p.day - first_day;
    if (d < 0 || d >= n_days) return std::nullopt;
    return static_cast<std::size_t>(d) * kSlotsPerDay + static_cast<std::size_t>(p.slot);
  };

  std::vector<std::size_t> cells;
  for (std::size_t begin = 0; begin < pts.size();) {
    std::size_t end = begin;
    while (end < pts.size() && pts[end].order == pts[begin].order) ++end;

    cells.clear();
    for (std::size_t i = begin; i < end; ++i) {
      const auto col = column(pts[i]);
      if (!col) {
        ++out.outside_axis;
        continue;
      }
      cells.push_back(pts[i].road * cols + *col);
      if (i + 1 == end) break;
      const Point& a = pts[i];
      const Point& b = pts[i + 1];
      if (a.road != b.road) continue;
      const auto dt = static_cast<double>(b.timestamp - a.timestamp);
      if (!(dt > 0.0) || dt > options_.pair_dt_max_s) continue;
      const double d = haversine_km({a.lat, a.lon}, {b.lat, b.lon});
      const std::size_t cell = a.road * cols + *col;
      out.speed.values[cell] += pair_speed_kmh(d, dt);
      ++out.pair_counts.values[cell];
      ++out.pairs;
    }
    std::sort(cells.begin(), cells.end());
    cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
    for (const std::size_t cell : cells) ++out.flow.values[cell];
    begin = end;
  }

  for (std::size_t cell = 0; cell < out.speed.values.size(); ++cell) {
    if (out.pair_counts.values[cell] > 0) {
      out.speed.values[cell] /= static_cast<double>(out.pair_counts.values[cell]);
    }
  }
  return out;
}

Tensors build_tensors(std::span<const MatchedPoint> matched, std::vector<RoadId> road_ids,
                      TensorOptions options) {
  TensorBuilder builder(std::move(road_ids), options);
  builder.add(matched);
  return builder.finish();
}

// ---------------------------------------------------------------------------

MissingFilterResult filter_missing(const SpeedMatrix& speeds, double max_missing_fraction) {
  MissingFilterResult out;
  std::vector<RoadId> kept;
  std::vector<std::size_t> kept_rows;
  for (std::size_t r = 0; r < speeds.rows(); ++r) {
    const auto row = speeds.row(r);
    const auto zeros = static_cast<std::size_t>(std::count(row.begin(), row.end(), 0.0));
    const double fraction =
        row.empty() ? 0.0 : static_cast<double>(zeros) / static_cast<double>(row.size());
    if (fraction > max_missing_fraction) {
      out.dropped.push_back(speeds.road_ids[r]);
    } else {
      kept.push_back(speeds.road_ids[r]);
      kept_rows.push_back(r);
    }
  }
  out.retained = SpeedMatrix(std::move(kept), speeds.intervals);
  for (std::size_t i = 0; i < kept_rows.size(); ++i) {
    const auto src = speeds.row(kept_rows[i]);
    std::copy(src.begin(), src.end(), out.retained.row(i).begin());
  }
  if (out.retained.rows() == 0 && speeds.rows() > 0) {
    spdlog::warn("every road exceeds the missing-value threshold {}; nothing left to analyse",
                 max_missing_fraction);
  }
  return out;
}

FilledSeries interpolate_missing(std::span<const double> row) {
  FilledSeries out{{row.begin(), row.end()}, false};
  auto& v = out.values;
  std::optional<std::size_t> last;  // previous observed index
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == 0.0) continue;
    if (!last) {
      std::fill(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(i), v[i]);
    } else if (i - *last > 1) {
      const double a = v[*last];
      const double b = v[i];
      const auto span = static_cast<double>(i - *last);
      for (std::size_t j = *last + 1; j < i; ++j) {
        v[j] = a + (b - a) * static_cast<double>(j - *last) / span;
      }
    }
    last = i;
  }
  if (!last) {
    out.flagged = !v.empty();
    return out;
  }
  std::fill(v.begin() + static_cast<std::ptrdiff_t>(*last) + 1, v.end(), v[*last]);
  return out;
}

RepairedSeries repair_anomalies(std::span<const double> row, double threshold_kmh) {
  RepairedSeries out{{row.begin(), row.end()}, 0, false};
  const std::size_t n = row.size();
  auto anomalous = [&](std::size_t i) { return row[i] > threshold_kmh; };

  // Nearest non-anomalous index to the left of each position.
  std::vector<std::optional<std::size_t>> left(n);
  std::optional<std::size_t> seen;
  for (std::size_t i = 0; i < n; ++i) {
    left[i] = seen;
    if (!anomalous(i)) seen = i;
  }
  seen.reset();
  for (std::size_t k = n; k-- > 0;) {
    if (anomalous(k)) {
      ++out.anomaly_count;
      if (left[k] && seen) {
        out.values[k] = 0.5 * (row[*left[k]] + row[*seen]);
      } else if (left[k]) {
        out.values[k] = row[*left[k]];
      } else if (seen) {
        out.values[k] = row[*seen];
      } else {
        out.values[k] = threshold_kmh;
        out.flagged = true;
      }
    } else {
      seen = k;
    }
  }
  return out;
}

CleaningResult clean_speed_matrix(const SpeedMatrix& speeds, const CleaningOptions& options) {
  auto filtered = filter_missing(speeds, options.max_missing_fraction);
  CleaningResult out;
  out.speed = std::move(filtered.retained);
  out.dropped = std::move(filtered.dropped);
  for (std::size_t r = 0; r < out.speed.rows(); ++r) {
    auto row = out.speed.row(r);
    const auto filled = interpolate_missing(row);
    if (filled.flagged) {
      out.flagged.push_back(out.speed.road_ids[r]);
      continue;
    }
    const auto repaired = repair_anomalies(filled.values, options.anomaly_kmh);
    out.anomaly_count += repaired.anomaly_count;
    if (repaired.flagged) out.saturated.push_back(out.speed.road_ids[r]);
    std::copy(repaired.values.begin(), repaired.values.end(), row.begin());
  }
  const std::size_t cells = out.speed.values.size();
  out.anomaly_rate =
      cells == 0 ? 0.0 : static_cast<double>(out.anomaly_count) / static_cast<double>(cells);
  return out;
}

}  // namespace carhail
