#include "carhail/congestion_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "carhail/errors.hpp"

namespace carhail {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

MeasureFit fit_measure(const ScenarioGroup& group, const std::vector<DailyProfile>& profiles) {
  MeasureFit fit;
  std::vector<std::vector<double>> raw;
  std::vector<std::vector<double>> normalized;
  for (const auto day : group.days) {
    const auto it = std::find_if(profiles.begin(), profiles.end(),
                                 [&](const DailyProfile& p) { return p.day == day; });
    if (it == profiles.end() || !it->complete) continue;
    fit.days.push_back(day);
    raw.push_back(it->values);
    normalized.push_back(it->normalized ? *it->normalized : min_max_normalize(it->values).values);
  }
  if (raw.size() >= 2) {
    fit.raw = fitting_index(raw);
    fit.normalized = fitting_index(normalized);
  }
  return fit;
}

}  // namespace

double estimate_free_flow(std::span<const double> speed_row, double anomaly_kmh) {
  if (speed_row.empty() ||
      std::any_of(speed_row.begin(), speed_row.end(), [](double v) { return !(v > 0.0); })) {
    throw UndefinedValueError("free-flow speed needs a cleaned row without missing values");
  }
  std::vector<double> sorted(speed_row.begin(), speed_row.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = kFreeFlowPercentile * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double value = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  return std::clamp(value, kMinFreeFlowKmh, anomaly_kmh);
}

double inrix_score(double free_flow_kmh, double road_speed_kmh) {
  if (!(road_speed_kmh > 0.0) || !(free_flow_kmh > 0.0)) {
    throw UndefinedValueError("INRIX score needs positive free-flow and road speeds");
  }
  return std::max(free_flow_kmh / road_speed_kmh - 1.0, 0.0);
}

std::optional<double> network_inrix(std::span<const double> scores,
                                    std::span<const double> lengths_km) {
  if (scores.size() != lengths_km.size()) {
    throw std::invalid_argument("network_inrix: scores and lengths differ in size");
  }
  double weighted = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (!std::isfinite(scores[k])) continue;
    weighted += lengths_km[k] * scores[k];
    total += lengths_km[k];
  }
  if (!(total > 0.0)) return std::nullopt;
  return weighted / total;
}

FittingIndex fitting_index(const std::vector<std::vector<double>>& day_series) {
  if (day_series.size() < 2) {
    throw std::invalid_argument("fitting_index needs at least two days");
  }
  const std::size_t slots = day_series.front().size();
  if (slots == 0) throw std::invalid_argument("fitting_index: empty day series");
  for (const auto& day : day_series) {
    if (day.size() != slots) throw std::invalid_argument("fitting_index: ragged day series");
  }
  const auto n_days = static_cast<double>(day_series.size());

  std::vector<double> slot_mean(slots, 0.0);
  double grand = 0.0;
  for (const auto& day : day_series) {
    for (std::size_t j = 0; j < slots; ++j) slot_mean[j] += day[j];
  }
  for (double& m : slot_mean) {
    grand += m;
    m /= n_days;
  }
  grand /= n_days * static_cast<double>(slots);

  double residual = 0.0;
  double total = 0.0;
  for (const auto& day : day_series) {
    for (std::size_t j = 0; j < slots; ++j) {
      residual += (day[j] - slot_mean[j]) * (day[j] - slot_mean[j]);
      total += (day[j] - grand) * (day[j] - grand);
    }
  }
  if (total == 0.0) return {1.0, true};
  return {1.0 - residual / total, false};
}

NormalizedSeries min_max_normalize(std::span<const double> day_values) {
  NormalizedSeries out{std::vector<double>(day_values.size(), 0.0), false};
  if (day_values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(day_values.begin(), day_values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t j = 0; j < day_values.size(); ++j) {
    out.values[j] = (day_values[j] - *lo) / range;
  }
  return out;
}

CongestionSeries compute_congestion(const SpeedMatrix& cleaned, const RoadNetwork& net,
                                    std::span<const RoadId> exclude, double anomaly_kmh) {
  std::vector<std::size_t> rows;
  std::vector<RoadId> ids;
  CongestionSeries out;
  for (std::size_t r = 0; r < cleaned.rows(); ++r) {
    const RoadId id = cleaned.road_ids[r];
    if (std::find(exclude.begin(), exclude.end(), id) != exclude.end()) continue;
    const auto idx = net.index_of(id);
    if (!idx) {
      spdlog::warn("road {} is not in the network; excluded from congestion scoring", id);
      continue;
    }
    const auto row = cleaned.row(r);
    if (std::none_of(row.begin(), row.end(), [](double v) { return v > 0.0; })) continue;

    const RoadSegment& seg = net.segments()[*idx];
    FreeFlow ff;
    if (seg.free_flow_kmh) {
      ff = {*seg.free_flow_kmh, FreeFlowSource::supplied};
    } else {
      ff = {estimate_free_flow(row, anomaly_kmh), FreeFlowSource::estimated};
    }
    rows.push_back(r);
    ids.push_back(id);
    out.free_flow.push_back(ff);
    out.lengths_km.push_back(seg.length_km);
  }

  out.per_road = SpatioTemporalMatrix<double>(ids, cleaned.intervals, kNaN);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = cleaned.row(rows[i]);
    auto dst = out.per_road.row(i);
    for (std::size_t c = 0; c < src.size(); ++c) {
      if (src[c] > 0.0) dst[c] = inrix_score(out.free_flow[i].kmh, src[c]);
    }
  }

  const std::size_t cols = cleaned.cols();
  out.network.assign(cols, kNaN);
  out.excluded_roads.assign(cols, 0);
  std::vector<double> column(ids.size());
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      column[i] = out.per_road.at(i, c);
      if (!std::isfinite(column[i])) ++out.excluded_roads[c];
    }
    if (const auto v = network_inrix(column, out.lengths_km)) out.network[c] = *v;
  }
  return out;
}

std::vector<DailyAggregate> daily_aggregates(const FlowMatrix& flow,
                                             const CongestionSeries& congestion) {
  struct Acc {
    std::uint64_t cf = 0;
    double dc_sum = 0.0;
    std::size_t dc_n = 0;
    std::size_t slots = 0;
    bool undefined = false;
  };
  std::map<std::chrono::sys_days, Acc> days;
  for (std::size_t c = 0; c < flow.cols(); ++c) {
    Acc& acc = days[flow.intervals[c].day];
    ++acc.slots;
    for (std::size_t r = 0; r < flow.rows(); ++r) acc.cf += flow.at(r, c);
  }
  for (std::size_t c = 0; c < congestion.network.size(); ++c) {
    Acc& acc = days[congestion.per_road.intervals[c].day];
    const double v = congestion.network[c];
    if (std::isfinite(v)) {
      acc.dc_sum += v;
      ++acc.dc_n;
    } else {
      acc.undefined = true;
    }
  }
  std::vector<DailyAggregate> out;
  for (const auto& [day, acc] : days) {
    DailyAggregate agg;
    agg.day = day;
    agg.total_cf = acc.cf;
    agg.mean_dc = acc.dc_n == 0 ? kNaN : acc.dc_sum / static_cast<double>(acc.dc_n);
    agg.partial = acc.undefined || acc.slots != kSlotsPerDay || acc.dc_n != kSlotsPerDay;
    out.push_back(agg);
  }
  return out;
}

std::vector<DailyProfile> daily_profiles(const std::vector<IntervalIndex>& axis,
                                         std::span<const double> values) {
  if (axis.size() != values.size()) {
    throw std::invalid_argument("daily_profiles: axis and values differ in size");
  }
  std::map<std::chrono::sys_days, DailyProfile> days;
  for (std::size_t c = 0; c < axis.size(); ++c) {
    auto [it, inserted] = days.try_emplace(axis[c].day);
    DailyProfile& p = it->second;
    if (inserted) {
      p.day = axis[c].day;
      p.values.assign(kSlotsPerDay, kNaN);
    }
    p.values[static_cast<std::size_t>(axis[c].slot)] = values[c];
  }
  std::vector<DailyProfile> out;
  for (auto& [day, p] : days) {
    p.complete = std::all_of(p.values.begin(), p.values.end(),
                             [](double v) { return std::isfinite(v); });
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<DailyProfile> dc_profiles(const CongestionSeries& congestion) {
  return daily_profiles(congestion.per_road.intervals, congestion.network);
}

std::vector<DailyProfile> cf_profiles(const FlowMatrix& flow) {
  std::vector<double> totals(flow.cols(), 0.0);
  for (std::size_t r = 0; r < flow.rows(); ++r) {
    for (std::size_t c = 0; c < flow.cols(); ++c) totals[c] += flow.at(r, c);
  }
  return daily_profiles(flow.intervals, totals);
}

void normalize_profiles(std::vector<DailyProfile>& profiles) {
  for (auto& p : profiles) {
    if (!p.complete) continue;
    auto n = min_max_normalize(p.values);
    p.degenerate = n.degenerate;
    p.normalized = std::move(n.values);
  }
}

ScenarioFit fit_scenario(const ScenarioGroup& group, const std::vector<DailyProfile>& dc,
                         const std::vector<DailyProfile>& cf) {
  return {group.name, fit_measure(group, dc), fit_measure(group, cf)};
}

}  // namespace carhail
