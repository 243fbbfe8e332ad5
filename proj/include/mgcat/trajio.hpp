#pragma once

#include <filesystem>
#include <vector>

#include "mgcat/common.hpp"
#include "mgcat/roadnet.hpp"

namespace mgcat {

/// Reads `traj_id,seq_idx,seg_id,timestamp_s`. Rows of one trajectory must be
/// contiguous with seq_idx 0, 1, ... . When `net` is given, segment ids are
/// range-checked.
std::vector<Trajectory> load_trajectories(const std::filesystem::path& path, const RoadNetwork* net = nullptr);
void save_trajectories(const std::vector<Trajectory>& trajs, const std::filesystem::path& path);

/// Recovered sequence with per-position provenance. Generated positions carry
/// no timestamp.
struct RecoveredTrajectory {
  std::int64_t id = 0;
  std::vector<SegId> segs;
  std::vector<bool> observed;
  std::vector<double> times;  // meaningful where observed
};

/// Marks positions of `recovered` matching the observed input, in order
/// (greedy earliest match).
RecoveredTrajectory annotate_recovery(const Trajectory& observed, const std::vector<SegId>& recovered);

/// Same columns as the trajectory CSV plus `source` (observed|generated).
void save_recovered(const std::vector<RecoveredTrajectory>& recs, const std::filesystem::path& path);
/// Reads a recovered CSV back into plain segment sequences.
std::vector<Trajectory> load_recovered(const std::filesystem::path& path);

}  // namespace mgcat
