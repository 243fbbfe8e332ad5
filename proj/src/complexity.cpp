#include "mgcat/complexity.hpp"

#include <algorithm>
#include <cmath>

namespace mgcat {

std::string to_string(Level level) {
  switch (level) {
    case Level::Low:
      return "Low";
    case Level::Mid:
      return "Mid";
    case Level::High:
      return "High";
  }
  return "?";
}

namespace {

// Constant-range features carry no signal and normalize to 0.
double minmax(double v, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

double shortest_length(const RoadNetwork& net, SegId from, SegId to) {
  auto r = shortest_route(net, from, to);
  if (!r)
    throw ValidationError("segment " + std::to_string(to) + " unreachable from " + std::to_string(from) +
                          "; detour score undefined");
  return r->length;
}

}  // namespace

double CorpusCalibration::normalize_ds(double ds) const { return minmax(ds, ds_min, ds_max); }
double CorpusCalibration::normalize_es(double es) const { return minmax(es, es_min, es_max); }

Level CorpusCalibration::level(double c) const {
  if (c <= q25) return Level::Low;
  if (c > q75) return Level::High;
  return Level::Mid;
}

double detour_score(const Trajectory& traj, const RoadNetwork& net) {
  if (traj.empty()) throw ValidationError("detour_score: empty trajectory");
  const double rl = route_length(net, traj.segs);
  return rl / shortest_length(net, traj.segs.front(), traj.segs.back());
}

double sparse_detour_score(const Trajectory& traj, const RoadNetwork& net, const ViewGraph& distance) {
  if (traj.empty()) throw ValidationError("sparse_detour_score: empty trajectory");
  double rl = net.length(traj.segs.front());
  for (std::size_t i = 0; i + 1 < traj.segs.size(); ++i) {
    const SegId a = traj.segs[i];
    const SegId b = traj.segs[i + 1];
    const auto* e = distance.find(a, b);
    const double pair_len = (e && e->raw < distance.missing_fill) ? e->raw : shortest_length(net, a, b);
    rl += pair_len - net.length(a);
  }
  return rl / shortest_length(net, traj.segs.front(), traj.segs.back());
}

double entropy_score(const Trajectory& traj, const TransitionStats& stats) {
  if (traj.empty()) throw ValidationError("entropy_score: empty trajectory");
  double total = 0.0;
  for (SegId s : traj.segs) total += stats.entropy(s);
  return total / static_cast<double>(traj.size());
}

double lower_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ValidationError("quantile of empty set");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto idx = static_cast<std::ptrdiff_t>(std::ceil(p * n)) - 1;
  idx = std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(values.size()) - 1);
  return values[static_cast<std::size_t>(idx)];
}

CorpusCalibration calibrate(std::span<const Trajectory> corpus, const RoadNetwork& net, const TransitionStats& stats,
                            double mu, double nu) {
  if (corpus.empty()) throw ValidationError("calibrate: empty corpus");
  std::vector<double> ds(corpus.size()), es(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    ds[i] = detour_score(corpus[i], net);
    es[i] = entropy_score(corpus[i], stats);
  }
  CorpusCalibration c;
  c.mu = mu;
  c.nu = nu;
  c.ds_min = *std::min_element(ds.begin(), ds.end());
  c.ds_max = *std::max_element(ds.begin(), ds.end());
  c.es_min = *std::min_element(es.begin(), es.end());
  c.es_max = *std::max_element(es.begin(), es.end());
  std::vector<double> cx(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) cx[i] = c.combine(ds[i], es[i]);
  c.q25 = lower_quantile(cx, 0.25);
  c.q75 = lower_quantile(cx, 0.75);
  c.theta = c.q75;
  return c;
}

namespace {

ComplexityProfile finish(const Trajectory& traj, double ds, double es, const CorpusCalibration& calib) {
  ComplexityProfile p;
  p.ds = ds;
  p.es = es;
  p.ds_norm = calib.normalize_ds(ds);
  p.es_norm = calib.normalize_es(es);
  p.complexity = calib.mu * p.ds_norm + calib.nu * p.es_norm;
  p.level = calib.level(p.complexity);
  p.loop = traj.segs.size() > 1 && traj.segs.front() == traj.segs.back();
  return p;
}

}  // namespace

ComplexityProfile score(const Trajectory& traj, const RoadNetwork& net, const TransitionStats& stats,
                        const CorpusCalibration& calib) {
  return finish(traj, detour_score(traj, net), entropy_score(traj, stats), calib);
}

ComplexityProfile score_sparse(const Trajectory& traj, const RoadNetwork& net, const TransitionStats& stats,
                               const ViewGraph& distance, const CorpusCalibration& calib) {
  return finish(traj, sparse_detour_score(traj, net, distance), entropy_score(traj, stats), calib);
}

}  // namespace mgcat
