#pragma once

#include <optional>
#include <vector>

#include "mgcat/common.hpp"
#include "mgcat/roadnet.hpp"

namespace mgcat {

struct BaselineResult {
  Trajectory traj;
  /// Indices k of observed pairs (k, k+1) with no connecting route.
  std::vector<std::size_t> unfilled;
};

/// Weight of a transition with empirical probability 0.
inline constexpr double kZeroProbEps = 1e-6;

/// Most likely successor chain from `from` to `to` under -log P weights
/// (ties: fewer hops, then smaller ids). Excludes both endpoints; nullopt if
/// unreachable.
std::optional<std::vector<SegId>> most_likely_gap(const RoadNetwork& net, const TransitionStats& stats, SegId from,
                                                  SegId to);

/// Fills each gap between consecutive observed segments with its most
/// likely route. Adjacent observed pairs are left as they are.
BaselineResult frequency_recover(const Trajectory& sparse, const RoadNetwork& net, const TransitionStats& stats);

}  // namespace mgcat
