#pragma once

#include <cstdint>
#include <vector>

#include "mgcat/common.hpp"
#include "mgcat/roadnet.hpp"

namespace mgcat {

struct GenConfig {
  int rows = 8;
  int cols = 8;
  double spacing = 100.0;  // meters
  int count = 2000;
  double p_detour = 0.5;
  /// Probability weight of turning vs going straight in detour walks
  /// (0.5 is neutral, higher zig-zags).
  double turn_bias = 0.8;
  /// Relative weight of steps that do not get closer to the destination.
  double away_weight = 0.25;
  double speed = 10.0;  // m/s
  double jitter = 0.1;
  int min_segments = 4;
  int max_retries = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

/// n x m lattice, node (r, c) at (c * spacing, r * spacing). Each undirected
/// edge yields two directed segments.
RoadNetwork gen_grid_network(int rows, int cols, double spacing);

/// Dense trajectories; trajectory i uses substream derive_seed(seed, {i}).
std::vector<Trajectory> gen_trajectories(const RoadNetwork& net, const GenConfig& cfg);

/// Keeps ceil(keep_ratio * n) positions (first and last always), order kept.
/// Throws for fewer than 3 segments.
Trajectory sparsify(const Trajectory& traj, double keep_ratio, std::uint64_t seed);

/// Positions kept by sparsify, ascending.
std::vector<std::size_t> sparsify_positions(std::size_t n, double keep_ratio, std::uint64_t seed);

}  // namespace mgcat
