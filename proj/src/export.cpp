#include "carhail/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "carhail/errors.hpp"
#include "carhail/matrix_io.hpp"

namespace carhail {

namespace {

const std::vector<double>* series_of(const DailyProfile& p, bool normalized) {
  if (!normalized) return &p.values;
  return p.normalized ? &*p.normalized : nullptr;
}

std::string fixed(double v, int digits = 2) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

SpeedMatrix to_real_matrix(const FlowMatrix& flow) {
  SpeedMatrix out(flow.road_ids, flow.intervals);
  std::transform(flow.values.begin(), flow.values.end(), out.values.begin(),
                 [](std::uint32_t v) { return static_cast<double>(v); });
  return out;
}

nlohmann::json export_heatmap(const SpeedMatrix& matrix, const RoadNetwork& net,
                              const IntervalIndex& interval) {
  const auto col = matrix.column_of(interval);
  if (!col) throw ExportError("interval " + interval_label(interval) + " is not in the matrix");

  double max_value = -std::numeric_limits<double>::infinity();
  for (double v : matrix.values) {
    if (std::isfinite(v)) max_value = std::max(max_value, v);
  }

  nlohmann::json features = nlohmann::json::array();
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    const auto idx = net.index_of(matrix.road_ids[r]);
    if (!idx) {
      throw ExportError("road " + std::to_string(matrix.road_ids[r]) + " is not in the network");
    }
    const RoadSegment& seg = net.segments()[*idx];
    nlohmann::json coords = nlohmann::json::array();
    for (const auto& v : seg.polyline) coords.push_back({v.lon, v.lat});

    const double value = matrix.at(r, *col);
    nlohmann::json props = {{"road_id", seg.id}};
    if (std::isfinite(value)) {
      props["value"] = value;
      props["ratio"] = max_value > 0.0 ? value / max_value : 0.0;
    } else {
      props["value"] = nullptr;
      props["ratio"] = nullptr;
    }
    features.push_back({{"type", "Feature"},
                        {"properties", props},
                        {"geometry", {{"type", "LineString"}, {"coordinates", coords}}}});
  }
  return {{"type", "FeatureCollection"},
          {"interval", interval_label(interval)},
          {"max_value", std::isfinite(max_value) ? nlohmann::json(max_value) : nlohmann::json()},
          {"features", features}};
}

std::string timeseries_csv(const std::vector<DailyProfile>& days, bool normalized) {
  std::ostringstream out;
  out << "slot,day,value\n";
  for (const auto& p : days) {
    const auto* series = series_of(p, normalized);
    if (series == nullptr) continue;
    const std::string day = format_day(p.day);
    for (std::size_t s = 0; s < series->size(); ++s) {
      if (!std::isfinite((*series)[s])) continue;
      out << slot_label(static_cast<int>(s)) << ',' << day << ',' << format_number((*series)[s])
          << '\n';
    }
  }
  return out.str();
}

std::string timeseries_svg(const std::vector<DailyProfile>& days, bool normalized,
                           const std::string& title) {
  constexpr double kWidth = 860.0;
  constexpr double kHeight = 420.0;
  constexpr double kLeft = 70.0;
  constexpr double kRight = 150.0;
  constexpr double kTop = 40.0;
  constexpr double kBottom = 50.0;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  double y_min = 0.0;
  double y_max = 1.0;
  if (!normalized) {
    double hi = -std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& p : days) {
      for (double v : p.values) {
        if (!std::isfinite(v)) continue;
        hi = std::max(hi, v);
        lo = std::min(lo, v);
      }
    }
    if (std::isfinite(hi)) {
      y_min = std::min(0.0, lo);
      y_max = hi > y_min ? hi : y_min + 1.0;
    }
  }
  auto px = [&](double slot) { return kLeft + plot_w * slot / (kSlotsPerDay - 1); };
  auto py = [&](double v) { return kTop + plot_h * (1.0 - (v - y_min) / (y_max - y_min)); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft << "\" y=\"22\" font-size=\"14\">" << title << "</text>\n";
  svg << "<g id=\"axes\" stroke=\"black\" fill=\"none\">\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w
      << "\" y2=\"" << kTop + plot_h << "\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kTop + plot_h << "\"/>\n</g>\n";

  svg << "<g id=\"xticks\">\n";
  for (int slot = 0; slot < kSlotsPerDay; slot += 16) {
    svg << "<text x=\"" << fixed(px(slot)) << "\" y=\"" << fixed(kTop + plot_h + 18)
        << "\" text-anchor=\"middle\">" << slot_label(slot) << "</text>\n";
  }
  svg << "</g>\n<g id=\"yticks\" data-min=\"" << format_number(y_min) << "\" data-max=\""
      << format_number(y_max) << "\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = y_min + (y_max - y_min) * i / 5.0;
    svg << "<text x=\"" << fixed(kLeft - 8) << "\" y=\"" << fixed(py(v) + 4)
        << "\" text-anchor=\"end\">" << fixed(v, 3) << "</text>\n";
  }
  svg << "</g>\n";

  std::size_t k = 0;
  for (const auto& p : days) {
    const auto* series = series_of(p, normalized);
    if (series == nullptr) continue;
    const char* colour = kPalette[k % std::size(kPalette)];
    svg << "<g class=\"day\" data-day=\"" << format_day(p.day) << "\" fill=\"" << colour << "\">\n";
    for (std::size_t s = 0; s < series->size(); ++s) {
      const double v = (*series)[s];
      if (!std::isfinite(v)) continue;
      svg << "<circle cx=\"" << fixed(px(static_cast<double>(s))) << "\" cy=\"" << fixed(py(v))
          << "\" r=\"1.8\"/>\n";
    }
    svg << "</g>\n";
    svg << "<text x=\"" << fixed(kLeft + plot_w + 12) << "\" y=\""
        << fixed(kTop + 12 + 14.0 * static_cast<double>(k)) << "\" fill=\"" << colour << "\">"
        << format_day(p.day) << "</text>\n";
    ++k;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace carhail
