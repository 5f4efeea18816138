#include "carhail/map_matching.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

#include "carhail/errors.hpp"

namespace carhail {

namespace {

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

struct Constraint {
  double nx;  // unit direction in the (east, north) degree plane
  double ny;
  double residual;
};

std::string describe(const OffsetVector& v) {
  std::ostringstream out;
  out.precision(6);
  out << "(dlat " << v.dlat << ", dlon " << v.dlon << ")";
  return out.str();
}

}  // namespace

bool OffsetVector::within_cap(double cap_deg) const {
  return std::abs(dlat) <= cap_deg && std::abs(dlon) <= cap_deg;
}

OffsetEstimate estimate_offset(std::span<const TraceRecord> sample, const RoadNetwork& net,
                               const OffsetEstimateOptions& options) {
  if (sample.size() < options.min_sample || sample.empty()) {
    throw DataQualityError("offset sample has " + std::to_string(sample.size()) +
                           " records, need at least " + std::to_string(options.min_sample));
  }
  if (net.empty()) throw DataQualityError("cannot estimate an offset against an empty network");

  std::vector<double> lats;
  lats.reserve(sample.size());
  for (const auto& r : sample) lats.push_back(r.lat);
  const double cos_ref = std::cos(deg_to_rad(median(std::move(lats))));

  OffsetEstimate est;
  est.sample_size = sample.size();
  std::vector<Constraint> constraints(sample.size());
  std::vector<double> residuals(sample.size());

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    est.iterations = iter + 1;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      const LatLon q{sample[i].lat + est.offset.dlat, sample[i].lon + est.offset.dlon};
      const auto hit = net.nearest_segment(q);
      const RoadSegment& seg = net.segment(hit->road_id);
      const auto proj = project_onto_segment(q, seg);
      const double ex = (proj.foot.lon - q.lon) * cos_ref;
      const double ey = proj.foot.lat - q.lat;
      const double r = std::hypot(ex, ey);
      if (r > 1e-12) {
        constraints[i] = {ex / r, ey / r, r};
      } else {
        // On the road: pins the shift across the piece it lies on.
        const LatLon& a = seg.polyline[proj.sub_segment];
        const LatLon& b = seg.polyline[proj.sub_segment + 1];
        const double tx = (b.lon - a.lon) * cos_ref;
        const double ty = b.lat - a.lat;
        const double len = std::hypot(tx, ty);
        constraints[i] = {-ty / len, tx / len, 0.0};
      }
      residuals[i] = constraints[i].residual;
    }

    const double cutoff = 3.0 * median(residuals) + 1e-9;
    double sxx = 0.0, sxy = 0.0, syy = 0.0, bx = 0.0, by = 0.0;
    est.inliers = 0;
    for (const auto& c : constraints) {
      if (c.residual > cutoff) continue;
      ++est.inliers;
      sxx += c.nx * c.nx;
      sxy += c.nx * c.ny;
      syy += c.ny * c.ny;
      bx += c.nx * c.residual;
      by += c.ny * c.residual;
    }

    // Pseudo-inverse of the symmetric 2x2 normal matrix.
    const double mean = 0.5 * (sxx + syy);
    const double spread = std::hypot(0.5 * (sxx - syy), sxy);
    const double lambda[2] = {mean + spread, mean - spread};
    const double floor = 1e-9 * std::max(lambda[0], 1e-300);
    double ux = 1.0, uy = 0.0;
    if (spread > 0.0) {
      // Eigenvector of the larger eigenvalue.
      const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
      ux = std::cos(theta);
      uy = std::sin(theta);
    } else if (sxx < syy) {
      ux = 0.0;
      uy = 1.0;
    }
    const double vx = -uy, vy = ux;
    double step_x = 0.0, step_y = 0.0;
    if (lambda[0] > floor) {
      const double k = (ux * bx + uy * by) / lambda[0];
      step_x += k * ux;
      step_y += k * uy;
    }
    if (lambda[1] > floor) {
      const double k = (vx * bx + vy * by) / lambda[1];
      step_x += k * vx;
      step_y += k * vy;
    }

    est.offset.dlat += step_y;
    est.offset.dlon += step_x / cos_ref;
    if (!est.offset.within_cap(10.0 * options.cap_deg)) break;
    if (std::hypot(step_x, step_y) < options.tolerance_deg) {
      est.converged = true;
      break;
    }
  }

  std::vector<double> final_residuals;
  final_residuals.reserve(sample.size());
  for (const auto& r : sample) {
    const LatLon q{r.lat + est.offset.dlat, r.lon + est.offset.dlon};
    final_residuals.push_back(net.nearest_segment(q)->distance_km);
  }
  est.median_residual_km = median(std::move(final_residuals));

  if (!est.offset.within_cap(options.cap_deg)) {
    throw DataQualityError("estimated offset " + describe(est.offset) + " exceeds the " +
                           std::to_string(options.cap_deg) +
                           " degree cap; traces and network probably do not belong together");
  }
  if (!est.converged) {
    spdlog::warn("offset estimate did not converge after {} iterations", est.iterations);
  }
  return est;
}

OffsetApplication apply_offset(std::vector<TraceRecord> records, const OffsetVector& offset) {
  OffsetApplication out;
  out.records.reserve(records.size());
  for (auto& r : records) {
    r.lat += offset.dlat;
    r.lon += offset.dlon;
    if (!in_geographic_range(r.position())) {
      ++out.skipped;
      continue;
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

double MatchResult::match_rate() const {
  const std::size_t total = matched.size() + unmatched;
  return total == 0 ? 0.0 : static_cast<double>(matched.size()) / static_cast<double>(total);
}

MatchResult match_batch(std::vector<TraceRecord> records, const RoadNetwork& net,
                        double max_dist_km, std::int64_t tz_offset_s) {
  MatchResult out;
  out.matched.reserve(records.size());
  for (auto& r : records) {
    const auto hit = net.nearest_segment(r.position(), max_dist_km);
    if (!hit) {
      ++out.unmatched;
      continue;
    }
    const IntervalIndex interval = assign_interval(r.timestamp, tz_offset_s);
    out.matched.push_back({std::move(r), hit->road_id, hit->distance_km, interval});
  }
  return out;
}

}  // namespace carhail
