#include "mgcat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mgcat {

namespace {

double dist(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

void push_unique(PointSequence& out, const Point& p) {
  if (out.empty() || !(out.back() == p)) out.push_back(p);
}

double mean_min_dist(const PointSequence& from, const PointSequence& to) {
  double total = 0.0;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) best = std::min(best, dist(p, q));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

PointSequence to_points(const RoadNetwork& net, std::span<const SegId> segs, double sample_step) {
  PointSequence out;
  for (SegId s : segs) {
    const auto& seg = net.segment(s);
    push_unique(out, seg.a);
    if (sample_step > 0.0) {
      const double len = dist(seg.a, seg.b);
      const auto steps = static_cast<int>(std::floor(len / sample_step));
      for (int k = 1; k <= steps; ++k) {
        const double t = k * sample_step / len;
        if (t >= 1.0) break;
        push_unique(out, Point{seg.a.x + t * (seg.b.x - seg.a.x), seg.a.y + t * (seg.b.y - seg.a.y)});
      }
    }
    push_unique(out, seg.b);
  }
  return out;
}

PRF1 prf1(std::span<const SegId> pred, std::span<const SegId> truth) {
  if (truth.empty()) throw ValidationError("prf1: empty ground truth");
  std::vector<SegId> p(pred.begin(), pred.end()), t(truth.begin(), truth.end());
  std::sort(p.begin(), p.end());
  p.erase(std::unique(p.begin(), p.end()), p.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  std::vector<SegId> both;
  std::set_intersection(p.begin(), p.end(), t.begin(), t.end(), std::back_inserter(both));
  PRF1 out;
  const auto hit = static_cast<double>(both.size());
  out.p = p.empty() ? 0.0 : hit / static_cast<double>(p.size());
  out.r = hit / static_cast<double>(t.size());
  out.f1 = (out.p + out.r) > 0.0 ? 2.0 * out.p * out.r / (out.p + out.r) : 0.0;
  return out;
}

double owd(const PointSequence& a, const PointSequence& b) {
  if (a.empty() || b.empty()) throw ValidationError("owd: empty point sequence");
  return 0.5 * (mean_min_dist(a, b) + mean_min_dist(b, a));
}

double polyline_length(const PointSequence& p) {
  double total = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i) total += dist(p[i - 1], p[i]);
  return total;
}

double shortest_supertrajectory(const PointSequence& a, const PointSequence& b) {
  if (a.empty() || b.empty()) throw ValidationError("merge distance: empty point sequence");
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // da[i][j]: consumed i points of A and j of B, last point is A[i-1].
  // db[i][j]: same, last point is B[j-1].
  std::vector<std::vector<double>> da(n + 1, std::vector<double>(m + 1, inf));
  std::vector<std::vector<double>> db(n + 1, std::vector<double>(m + 1, inf));
  da[1][0] = 0.0;
  db[0][1] = 0.0;
  for (std::size_t i = 0; i <= n; ++i)
    for (std::size_t j = 0; j <= m; ++j) {
      if (i >= 1 && (i > 1 || j > 0)) {
        const Point& p = a[i - 1];
        double best = da[i][j];
        if (i >= 2) best = std::min(best, da[i - 1][j] + dist(a[i - 2], p));
        if (j >= 1) best = std::min(best, db[i - 1][j] + dist(b[j - 1], p));
        da[i][j] = best;
      }
      if (j >= 1 && (j > 1 || i > 0)) {
        const Point& p = b[j - 1];
        double best = db[i][j];
        if (j >= 2) best = std::min(best, db[i][j - 1] + dist(b[j - 2], p));
        if (i >= 1) best = std::min(best, da[i][j - 1] + dist(a[i - 1], p));
        db[i][j] = best;
      }
    }
  return std::min(da[n][m], db[n][m]);
}

double merge_distance(const PointSequence& a, const PointSequence& b) {
  const double t = shortest_supertrajectory(a, b);
  const double denom = polyline_length(a) + polyline_length(b);
  if (denom > 0.0) return 2.0 * t / denom - 1.0;
  if (t == 0.0) return 0.0;
  throw ValidationError("merge distance undefined for two distinct single points");
}

}  // namespace mgcat
