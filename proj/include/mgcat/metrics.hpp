#pragma once

#include <span>
#include <vector>

#include "mgcat/common.hpp"
#include "mgcat/roadnet.hpp"

namespace mgcat {

using PointSequence = std::vector<Point>;

/// Segment endpoints in order, consecutive duplicates collapsed. With
/// sample_step > 0, interior points every sample_step meters are added.
PointSequence to_points(const RoadNetwork& net, std::span<const SegId> segs, double sample_step = 0.0);

struct PRF1 {
  double p = 0.0;
  double r = 0.0;
  double f1 = 0.0;
};

/// Set-based precision, recall and F1. Empty prediction scores 0.
PRF1 prf1(std::span<const SegId> pred, std::span<const SegId> truth);

/// 0.5 * (mean_{a in A} min_b |a-b| + mean_{b in B} min_a |a-b|).
double owd(const PointSequence& a, const PointSequence& b);

/// Length of the shortest polyline containing A and B as ordered subsequences.
double shortest_supertrajectory(const PointSequence& a, const PointSequence& b);

/// 2 * RL(T*) / (RL(A) + RL(B)) - 1.
double merge_distance(const PointSequence& a, const PointSequence& b);

double polyline_length(const PointSequence& p);

}  // namespace mgcat
