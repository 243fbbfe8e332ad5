#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mgcat/common.hpp"
#include "mgcat/kernels.hpp"

namespace mgcat {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

struct Segment {
  SegId id = 0;
  std::int64_t from_node = 0;
  std::int64_t to_node = 0;
  double length = 0.0;  // meters
  Point a;              // from_node end
  Point b;              // to_node end
  bool operator==(const Segment&) const = default;
};

/// Directed segment graph. Segment ids are dense in [0, size()).
/// successors(i) are the segments leaving i's to_node; the intersecting set
/// used by the entropy terms is the same list.
class RoadNetwork {
 public:
  RoadNetwork() = default;

  /// Validates and builds adjacency. Segment ids are remapped to dense range
  /// in ascending order of the given ids.
  static RoadNetwork from_segments(std::vector<Segment> segments);

  std::size_t size() const noexcept { return segments_.size(); }
  const Segment& segment(SegId i) const { return segments_.at(static_cast<std::size_t>(i)); }
  const std::vector<Segment>& segments() const noexcept { return segments_; }
  std::span<const SegId> successors(SegId i) const { return successors_.at(static_cast<std::size_t>(i)); }
  std::span<const SegId> intersecting(SegId i) const { return successors(i); }
  bool is_successor(SegId from, SegId to) const;
  double length(SegId i) const { return segment(i).length; }

  bool operator==(const RoadNetwork& o) const { return segments_ == o.segments_; }

 private:
  std::vector<Segment> segments_;
  std::vector<std::vector<SegId>> successors_;
};

RoadNetwork load_network(const std::filesystem::path& path);
void save_network(const RoadNetwork& net, const std::filesystem::path& path);

/// Sum of segment lengths.
double route_length(const RoadNetwork& net, std::span<const SegId> route);

/// True when every consecutive pair is a successor pair.
bool is_valid_chain(const RoadNetwork& net, std::span<const SegId> route);

struct Route {
  std::vector<SegId> segs;
  double length = 0.0;
};

/// Minimum-length successor chain from `from` to `to`, both included.
std::optional<Route> shortest_route(const RoadNetwork& net, SegId from, SegId to);

/// Dijkstra lengths from `from` to every segment (route length including both
/// ends); unreachable entries are +inf.
std::vector<double> shortest_lengths_from(const RoadNetwork& net, SegId from);

// ---------------------------------------------------------------------------
// Transition statistics

class TransitionStats {
 public:
  TransitionStats() = default;
  explicit TransitionStats(const RoadNetwork& net);

  void add(SegId from, SegId to);

  /// counts aligned with net.successors(i)
  std::span<const std::uint64_t> counts(SegId i) const { return counts_.at(static_cast<std::size_t>(i)); }
  std::uint64_t count(SegId from, SegId to) const;
  std::uint64_t outflow(SegId i) const { return outflow_.at(static_cast<std::size_t>(i)); }
  /// counts/outflow, 0 when outflow is 0.
  double probability(SegId from, SegId to) const;
  /// Successor-choice entropy in nats; 0 for zero-outflow segments.
  double entropy(SegId i) const;

  const std::vector<std::int64_t>& rejected() const noexcept { return rejected_; }

 private:
  friend TransitionStats build_transition_stats(std::span<const Trajectory>, const RoadNetwork&);
  std::vector<std::vector<SegId>> succ_;
  std::vector<std::vector<std::uint64_t>> counts_;
  std::vector<std::uint64_t> outflow_;
  std::vector<double> entropy_;
  std::vector<std::int64_t> rejected_;
  bool batch_ = false;  // defer entropy refresh during bulk counting
  void refresh(std::size_t i);
  void finalize();
};

/// Counts every consecutive pair. Trajectories with a non-adjacent pair are
/// skipped entirely and listed in rejected().
TransitionStats build_transition_stats(std::span<const Trajectory> trajs, const RoadNetwork& net);

// ---------------------------------------------------------------------------
// Route sampling and view graphs

/// k randomized shortest routes from i to j (edge lengths scaled by i.i.d.
/// Uniform(1,2) factors per run). Empty when j is unreachable.
std::vector<std::vector<SegId>> sample_routes(const RoadNetwork& net, SegId i, SegId j, int k,
                                              std::uint64_t seed);

enum class ViewKind { distance, entropy };

std::string to_string(ViewKind kind);
ViewKind view_kind_from_string(const std::string& s);

using PairSet = std::vector<std::pair<SegId, SegId>>;

/// Pairs co-occurring (either order) in any trajectory, plus (i, j) for every
/// j reachable from i within `hops` successor steps. Sorted, unique.
PairSet build_pair_set(const RoadNetwork& net, std::span<const Trajectory> trajs, int hops = 4);

struct ViewEntry {
  SegId col = 0;
  double raw = 0.0;
  double norm = 0.0;
};

/// One semantic adjacency view. Stored sparsely by row; pairs outside the
/// stored set read as missing_fill (normalized per column like any entry).
class ViewGraph {
 public:
  ViewKind kind = ViewKind::distance;
  int k = 3;
  std::uint64_t seed = 0;
  int knn_k = 8;
  double missing_fill = 0.0;
  std::size_t num_nodes = 0;

  /// rows[i] sorted by column
  std::vector<std::vector<ViewEntry>> rows;
  std::vector<double> col_min;
  std::vector<double> col_max;
  std::vector<std::vector<SegId>> knn;

  const ViewEntry* find(SegId i, SegId j) const;
  double raw(SegId i, SegId j) const;
  double normalized(SegId i, SegId j) const;
  std::size_t nnz() const;

  /// Column-wise min-max scaling of every stored value; fills col_min/col_max.
  void normalize_columns();
  double normalize_value(SegId col, double raw) const;
};

struct ViewBuildOptions {
  int k = 3;
  std::uint64_t seed = 0;
  Exec exec = Exec::parallel;
};

ViewGraph build_distance_graph(const RoadNetwork& net, const PairSet& pairs, const ViewBuildOptions& opt);
ViewGraph build_entropy_graph(const RoadNetwork& net, const TransitionStats& stats, const PairSet& pairs,
                              const ViewBuildOptions& opt);

/// Both views from one shared set of sampled routes (identical to building
/// them separately with the same seed).
std::pair<ViewGraph, ViewGraph> build_view_graphs(const RoadNetwork& net, const TransitionStats& stats,
                                                  const PairSet& pairs, const ViewBuildOptions& opt);

/// Keeps, per node, the K stored neighbors with smallest normalized value
/// (ties by smaller id), excluding self.
ViewGraph sparsify_knn(ViewGraph vg, int K);

void save_view_graph(const ViewGraph& vg, const std::filesystem::path& csv_path,
                     const std::filesystem::path& meta_path);
ViewGraph load_view_graph(const std::filesystem::path& csv_path, const std::filesystem::path& meta_path);

}  // namespace mgcat
