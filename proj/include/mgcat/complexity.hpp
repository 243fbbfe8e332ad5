#pragma once

#include <span>
#include <string>
#include <vector>

#include "mgcat/common.hpp"
#include "mgcat/roadnet.hpp"

namespace mgcat {

enum class Level { Low, Mid, High };

std::string to_string(Level level);

struct ComplexityProfile {
  double ds = 1.0;       // route length ratio, >= 1 on dense routes
  double es = 0.0;       // nats
  double ds_norm = 0.0;  // corpus min-max, clamped to [0, 1]
  double es_norm = 0.0;
  double complexity = 0.0;
  Level level = Level::Low;
  bool loop = false;  // origin == destination; DS taken against the single segment
};

struct CorpusCalibration {
  double ds_min = 1.0;
  double ds_max = 1.0;
  double es_min = 0.0;
  double es_max = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double theta = 0.0;
  double mu = 0.5;
  double nu = 0.5;

  double normalize_ds(double ds) const;
  double normalize_es(double es) const;
  double combine(double ds, double es) const { return mu * normalize_ds(ds) + nu * normalize_es(es); }
  /// Low when c <= q25, High when c > q75.
  Level level(double c) const;
};

/// RL(traj) / RL(shortest route between its first and last segment).
double detour_score(const Trajectory& traj, const RoadNetwork& net);

/// Detour score of a sparse input: the route length is estimated by chaining
/// raw route-distance values between consecutive observed segments (each
/// shared segment counted once). Pairs missing from the view fall back to
/// the shortest route.
double sparse_detour_score(const Trajectory& traj, const RoadNetwork& net, const ViewGraph& distance);

/// Mean successor-choice entropy over the trajectory's segments.
double entropy_score(const Trajectory& traj, const TransitionStats& stats);

/// Lower empirical quantile: sorted[ceil(p * n) - 1].
double lower_quantile(std::vector<double> values, double p);

/// Min-max bounds of DS/ES over `corpus`, quartiles of the combined
/// complexity, and theta = q75.
CorpusCalibration calibrate(std::span<const Trajectory> corpus, const RoadNetwork& net, const TransitionStats& stats,
                            double mu = 0.5, double nu = 0.5);

ComplexityProfile score(const Trajectory& traj, const RoadNetwork& net, const TransitionStats& stats,
                        const CorpusCalibration& calib);

ComplexityProfile score_sparse(const Trajectory& traj, const RoadNetwork& net, const TransitionStats& stats,
                               const ViewGraph& distance, const CorpusCalibration& calib);

}  // namespace mgcat
