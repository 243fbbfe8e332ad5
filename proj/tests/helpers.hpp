#pragma once

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "mgcat/model.hpp"
#include "mgcat/roadnet.hpp"
#include "mgcat/synthgen.hpp"

namespace mgcat::test {

/// Nodes 0..n-1 on the x axis. Forward segment k goes k -> k+1 (ids 0..n-2);
/// backward segment n-1+k goes k+1 -> k.
inline RoadNetwork line_network(int nodes, double length = 100.0) {
  std::vector<Segment> segs;
  SegId id = 0;
  for (int k = 0; k + 1 < nodes; ++k)
    segs.push_back({id++, k, k + 1, length, {k * length, 0.0}, {(k + 1) * length, 0.0}});
  for (int k = 0; k + 1 < nodes; ++k)
    segs.push_back({id++, k + 1, k, length, {(k + 1) * length, 0.0}, {k * length, 0.0}});
  return RoadNetwork::from_segments(std::move(segs));
}

/// Segment of a generated grid going from node (r0,c0) to (r1,c1).
inline SegId grid_seg(const RoadNetwork& net, int cols, int r0, int c0, int r1, int c1) {
  const std::int64_t a = static_cast<std::int64_t>(r0) * cols + c0;
  const std::int64_t b = static_cast<std::int64_t>(r1) * cols + c1;
  for (const auto& s : net.segments())
    if (s.from_node == a && s.to_node == b) return s.id;
  FAIL("no grid segment");
  return -1;
}

inline Trajectory make_traj(std::int64_t id, std::vector<SegId> segs) {
  Trajectory t;
  t.id = id;
  t.segs = std::move(segs);
  for (std::size_t i = 0; i < t.segs.size(); ++i) t.times.push_back(10.0 * static_cast<double>(i));
  return t;
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mgcat_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.d_e = 8;
  c.d_h = 16;
  c.layers = 1;
  c.heads = 2;
  c.ff_mult = 2;
  c.buckets = 8;
  c.gat_heads = 2;
  c.dec_hidden = 16;
  c.dec_layers = 2;
  c.max_seq_len = 64;
  return c;
}

/// Grid network with transition stats and both knn-sparsified views built
/// from a generated corpus.
struct Fixture {
  RoadNetwork net;
  std::vector<Trajectory> trajs;
  TransitionStats stats;
  ViewGraph distance;
  ViewGraph entropy;

  explicit Fixture(int side = 4, int count = 60, std::uint64_t seed = 5, int knn = 4) {
    net = gen_grid_network(side, side, 100.0);
    GenConfig g;
    g.rows = g.cols = side;
    g.count = count;
    g.seed = seed;
    trajs = gen_trajectories(net, g);
    stats = build_transition_stats(trajs, net);
    const auto pairs = build_pair_set(net, trajs, 4);
    ViewBuildOptions opt;
    opt.seed = seed + 1;
    auto [d, e] = build_view_graphs(net, stats, pairs, opt);
    distance = sparsify_knn(std::move(d), knn);
    entropy = sparsify_knn(std::move(e), knn);
  }
};

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace mgcat::test
