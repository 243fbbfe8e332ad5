#include "mgcat/roadnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <sstream>
#include <unordered_map>

#include "mgcat/csv.hpp"
#include "mgcat/rng.hpp"

namespace mgcat {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct HeapItem {
  double cost;
  SegId seg;
  bool operator>(const HeapItem& o) const { return cost != o.cost ? cost > o.cost : seg > o.seg; }
};

using MinHeap = std::priority_queue<HeapItem, std::vector<HeapItem>, std::greater<HeapItem>>;

// Dijkstra over segments where entering segment s costs weight[s]. The start
// segment's own weight is included so costs equal route lengths. Stops when
// `target` is settled (target < 0 runs to completion).
void dijkstra(const RoadNetwork& net, SegId source, SegId target, std::span<const double> weight,
              std::vector<double>& dist, std::vector<SegId>& pred) {
  const std::size_t n = net.size();
  dist.assign(n, kInf);
  pred.assign(n, -1);
  MinHeap heap;
  dist[static_cast<std::size_t>(source)] = weight[static_cast<std::size_t>(source)];
  heap.push({dist[static_cast<std::size_t>(source)], source});
  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[static_cast<std::size_t>(u)]) continue;
    if (u == target) return;
    for (SegId v : net.successors(u)) {
      const double nd = d + weight[static_cast<std::size_t>(v)];
      auto& dv = dist[static_cast<std::size_t>(v)];
      if (nd < dv) {
        dv = nd;
        pred[static_cast<std::size_t>(v)] = u;
        heap.push({nd, v});
      }
    }
  }
}

std::vector<SegId> unwind(SegId source, SegId target, const std::vector<SegId>& pred) {
  std::vector<SegId> path;
  for (SegId s = target; s != -1; s = pred[static_cast<std::size_t>(s)]) {
    path.push_back(s);
    if (s == source) break;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<double> lengths_of(const RoadNetwork& net) {
  std::vector<double> w(net.size());
  for (std::size_t i = 0; i < net.size(); ++i) w[i] = net.segments()[i].length;
  return w;
}

}  // namespace

// ---------------------------------------------------------------------------
// RoadNetwork

RoadNetwork RoadNetwork::from_segments(std::vector<Segment> segments) {
  std::sort(segments.begin(), segments.end(), [](const Segment& a, const Segment& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < segments.size(); ++i)
    if (segments[i].id == segments[i - 1].id)
      throw ValidationError("duplicate seg_id " + std::to_string(segments[i].id));

  std::unordered_map<std::int64_t, int> in_deg;
  std::unordered_map<std::int64_t, int> out_deg;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    auto& s = segments[i];
    if (!(s.length > 0.0) || !std::isfinite(s.length))
      throw ValidationError("segment " + std::to_string(s.id) + " has non-positive length");
    for (double c : {s.a.x, s.a.y, s.b.x, s.b.y})
      if (!std::isfinite(c)) throw ValidationError("segment " + std::to_string(s.id) + " has non-finite coordinate");
    s.id = static_cast<SegId>(i);
    ++out_deg[s.from_node];
    ++in_deg[s.to_node];
  }
  for (const auto& s : segments) {
    if (!out_deg.count(s.to_node))
      throw ValidationError("dangling node " + std::to_string(s.to_node) + ": no segment leaves it");
    if (!in_deg.count(s.from_node))
      throw ValidationError("dangling node " + std::to_string(s.from_node) + ": no segment enters it");
  }

  std::unordered_map<std::int64_t, std::vector<SegId>> leaving;
  for (const auto& s : segments) leaving[s.from_node].push_back(s.id);

  RoadNetwork net;
  net.successors_.resize(segments.size());
  for (const auto& s : segments) net.successors_[static_cast<std::size_t>(s.id)] = leaving[s.to_node];
  net.segments_ = std::move(segments);
  return net;
}

bool RoadNetwork::is_successor(SegId from, SegId to) const {
  auto succ = successors(from);
  return std::find(succ.begin(), succ.end(), to) != succ.end();
}

RoadNetwork load_network(const std::filesystem::path& path) {
  csv::Reader rd(path);
  rd.expect_header("seg_id,from_node,to_node,length_m,x1,y1,x2,y2");
  std::vector<Segment> segs;
  std::vector<std::string> f;
  while (rd.next(f)) {
    if (f.size() != 8) rd.fail("expected 8 fields, got " + std::to_string(f.size()));
    Segment s;
    s.id = static_cast<SegId>(rd.to_int(f[0]));
    s.from_node = rd.to_int(f[1]);
    s.to_node = rd.to_int(f[2]);
    s.length = rd.to_double(f[3]);
    s.a = {rd.to_double(f[4]), rd.to_double(f[5])};
    s.b = {rd.to_double(f[6]), rd.to_double(f[7])};
    segs.push_back(s);
  }
  return RoadNetwork::from_segments(std::move(segs));
}

void save_network(const RoadNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "seg_id,from_node,to_node,length_m,x1,y1,x2,y2\n";
  for (const auto& s : net.segments()) {
    out << s.id << ',' << s.from_node << ',' << s.to_node << ',' << csv::fmt(s.length) << ',' << csv::fmt(s.a.x)
        << ',' << csv::fmt(s.a.y) << ',' << csv::fmt(s.b.x) << ',' << csv::fmt(s.b.y) << '\n';
  }
}

double route_length(const RoadNetwork& net, std::span<const SegId> route) {
  double total = 0.0;
  for (SegId s : route) total += net.length(s);
  return total;
}

bool is_valid_chain(const RoadNetwork& net, std::span<const SegId> route) {
  for (std::size_t i = 0; i + 1 < route.size(); ++i)
    if (!net.is_successor(route[i], route[i + 1])) return false;
  return true;
}

std::optional<Route> shortest_route(const RoadNetwork& net, SegId from, SegId to) {
  std::vector<double> dist;
  std::vector<SegId> pred;
  const auto w = lengths_of(net);
  dijkstra(net, from, to, w, dist, pred);
  if (!std::isfinite(dist[static_cast<std::size_t>(to)])) return std::nullopt;
  Route r;
  r.segs = unwind(from, to, pred);
  r.length = route_length(net, r.segs);
  return r;
}

std::vector<double> shortest_lengths_from(const RoadNetwork& net, SegId from) {
  std::vector<double> dist;
  std::vector<SegId> pred;
  dijkstra(net, from, -1, lengths_of(net), dist, pred);
  return dist;
}

// ---------------------------------------------------------------------------
// TransitionStats

TransitionStats::TransitionStats(const RoadNetwork& net) {
  succ_.resize(net.size());
  for (std::size_t i = 0; i < net.size(); ++i) {
    auto s = net.successors(static_cast<SegId>(i));
    succ_[i].assign(s.begin(), s.end());
  }
  counts_.resize(net.size());
  for (std::size_t i = 0; i < net.size(); ++i) counts_[i].assign(net.successors(static_cast<SegId>(i)).size(), 0);
  outflow_.assign(net.size(), 0);
  entropy_.assign(net.size(), 0.0);
}

void TransitionStats::add(SegId from, SegId to) {
  const auto& succ = succ_.at(static_cast<std::size_t>(from));
  auto it = std::find(succ.begin(), succ.end(), to);
  if (it == succ.end()) throw ValidationError("not a successor pair");
  ++counts_[static_cast<std::size_t>(from)][static_cast<std::size_t>(it - succ.begin())];
  ++outflow_[static_cast<std::size_t>(from)];
  if (!batch_) refresh(static_cast<std::size_t>(from));
}

std::uint64_t TransitionStats::count(SegId from, SegId to) const {
  const auto& succ = succ_.at(static_cast<std::size_t>(from));
  auto it = std::find(succ.begin(), succ.end(), to);
  if (it == succ.end()) return 0;
  return counts_[static_cast<std::size_t>(from)][static_cast<std::size_t>(it - succ.begin())];
}

double TransitionStats::probability(SegId from, SegId to) const {
  const auto out = outflow(from);
  if (out == 0) return 0.0;
  return static_cast<double>(count(from, to)) / static_cast<double>(out);
}

double TransitionStats::entropy(SegId i) const { return entropy_.at(static_cast<std::size_t>(i)); }

void TransitionStats::refresh(std::size_t i) {
  double h = 0.0;
  if (outflow_[i] > 0) {
    const double total = static_cast<double>(outflow_[i]);
    for (auto c : counts_[i]) {
      if (c == 0) continue;
      const double p = static_cast<double>(c) / total;
      h -= p * std::log(p);
    }
  }
  entropy_[i] = h;
}

void TransitionStats::finalize() {
  for (std::size_t i = 0; i < counts_.size(); ++i) refresh(i);
}

TransitionStats build_transition_stats(std::span<const Trajectory> trajs, const RoadNetwork& net) {
  TransitionStats stats(net);
  stats.batch_ = true;
  for (const auto& t : trajs) {
    bool ok = true;
    for (SegId s : t.segs)
      if (s < 0 || static_cast<std::size_t>(s) >= net.size()) ok = false;
    if (ok && !is_valid_chain(net, t.segs)) ok = false;
    if (!ok) {
      stats.rejected_.push_back(t.id);
      continue;
    }
    for (std::size_t i = 0; i + 1 < t.segs.size(); ++i) stats.add(t.segs[i], t.segs[i + 1]);
  }
  stats.batch_ = false;
  stats.finalize();
  return stats;
}

// ---------------------------------------------------------------------------
// Route sampling

namespace {

// Per-worker scratch buffers for repeated randomized Dijkstra runs.
struct RouteSampler {
  const RoadNetwork& net;
  std::vector<double> base;
  std::vector<double> weight;
  std::vector<double> dist;
  std::vector<SegId> pred;

  explicit RouteSampler(const RoadNetwork& n) : net(n), base(lengths_of(n)), weight(n.size()) {}

  std::vector<std::vector<SegId>> sample(SegId i, SegId j, int k, std::uint64_t seed) {
    std::vector<std::vector<SegId>> routes;
    if (i == j) {
      routes.assign(static_cast<std::size_t>(k), std::vector<SegId>{i});
      return routes;
    }
    Rng rng(seed);
    for (int r = 0; r < k; ++r) {
      for (std::size_t s = 0; s < base.size(); ++s) weight[s] = base[s] * rng.uniform(1.0, 2.0);
      dijkstra(net, i, j, weight, dist, pred);
      if (!std::isfinite(dist[static_cast<std::size_t>(j)])) return {};
      routes.push_back(unwind(i, j, pred));
    }
    return routes;
  }
};

std::uint64_t pair_seed(std::uint64_t seed, SegId i, SegId j) {
  return derive_seed(seed, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)});
}

struct RawViews {
  std::vector<double> dist;
  std::vector<double> ent;
  std::vector<char> missing;
};

RawViews compute_raw(const RoadNetwork& net, const TransitionStats* stats, const PairSet& pairs,
                     const ViewBuildOptions& opt) {
  if (opt.k < 1) throw ValidationError("route sample count k must be >= 1");
  RawViews out;
  out.dist.assign(pairs.size(), 0.0);
  out.ent.assign(pairs.size(), 0.0);
  out.missing.assign(pairs.size(), 0);

  auto work = [&](RouteSampler& sampler, std::size_t p) {
    auto [i, j] = pairs[p];
    auto routes = sampler.sample(i, j, opt.k, pair_seed(opt.seed, i, j));
    if (routes.empty()) {
      out.missing[p] = 1;
      return;
    }
    double len = 0.0;
    double ent = 0.0;
    for (const auto& r : routes) {
      len += route_length(net, r);
      if (stats)
        for (SegId s : r) ent += stats->entropy(s);
    }
    out.dist[p] = len / static_cast<double>(routes.size());
    out.ent[p] = ent / static_cast<double>(routes.size());
  };

  const auto n = static_cast<long long>(pairs.size());
  if (opt.exec == Exec::parallel && kernels::max_threads() > 1) {
#pragma omp parallel
    {
      RouteSampler sampler(net);
#pragma omp for schedule(dynamic, 64)
      for (long long p = 0; p < n; ++p) work(sampler, static_cast<std::size_t>(p));
    }
  } else {
    RouteSampler sampler(net);
    for (long long p = 0; p < n; ++p) work(sampler, static_cast<std::size_t>(p));
  }
  return out;
}

ViewGraph assemble(const RoadNetwork& net, ViewKind kind, const PairSet& pairs, const std::vector<double>& raw,
                   const std::vector<char>& missing, const ViewBuildOptions& opt) {
  ViewGraph vg;
  vg.kind = kind;
  vg.k = opt.k;
  vg.seed = opt.seed;
  vg.num_nodes = net.size();
  double max_finite = 0.0;
  bool any = false;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (missing[p]) continue;
    max_finite = any ? std::max(max_finite, raw[p]) : raw[p];
    any = true;
  }
  vg.missing_fill = (any && max_finite > 0.0) ? 1.05 * max_finite : 1.0;
  vg.rows.resize(net.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    auto [i, j] = pairs[p];
    vg.rows[static_cast<std::size_t>(i)].push_back({j, missing[p] ? vg.missing_fill : raw[p], 0.0});
  }
  for (auto& row : vg.rows)
    std::sort(row.begin(), row.end(), [](const ViewEntry& a, const ViewEntry& b) { return a.col < b.col; });
  vg.normalize_columns();
  return vg;
}

void check_pairs(const RoadNetwork& net, const PairSet& pairs) {
  for (auto [i, j] : pairs)
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= net.size() || static_cast<std::size_t>(j) >= net.size())
      throw ValidationError("pair (" + std::to_string(i) + "," + std::to_string(j) + ") outside network");
}

}  // namespace

std::vector<std::vector<SegId>> sample_routes(const RoadNetwork& net, SegId i, SegId j, int k, std::uint64_t seed) {
  if (k < 1) throw ValidationError("sample_routes: k must be >= 1");
  RouteSampler sampler(net);
  return sampler.sample(i, j, k, seed);
}

std::string to_string(ViewKind kind) { return kind == ViewKind::distance ? "distance" : "entropy"; }

ViewKind view_kind_from_string(const std::string& s) {
  if (s == "distance") return ViewKind::distance;
  if (s == "entropy") return ViewKind::entropy;
  throw ValidationError("unknown view kind '" + s + "'");
}

PairSet build_pair_set(const RoadNetwork& net, std::span<const Trajectory> trajs, int hops) {
  PairSet pairs;
  for (const auto& t : trajs)
    for (SegId a : t.segs)
      for (SegId b : t.segs) pairs.emplace_back(a, b);

  std::vector<int> depth(net.size(), -1);
  std::vector<SegId> frontier;
  std::vector<SegId> touched;
  for (std::size_t s = 0; s < net.size(); ++s) {
    const auto src = static_cast<SegId>(s);
    frontier.assign(1, src);
    touched.assign(1, src);
    depth[s] = 0;
    for (std::size_t q = 0; q < frontier.size(); ++q) {
      const SegId u = frontier[q];
      pairs.emplace_back(src, u);
      if (depth[static_cast<std::size_t>(u)] >= hops) continue;
      for (SegId v : net.successors(u)) {
        if (depth[static_cast<std::size_t>(v)] >= 0) continue;
        depth[static_cast<std::size_t>(v)] = depth[static_cast<std::size_t>(u)] + 1;
        frontier.push_back(v);
        touched.push_back(v);
      }
    }
    for (SegId t : touched) depth[static_cast<std::size_t>(t)] = -1;
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

// ---------------------------------------------------------------------------
// ViewGraph

const ViewEntry* ViewGraph::find(SegId i, SegId j) const {
  if (i < 0 || static_cast<std::size_t>(i) >= rows.size()) return nullptr;
  const auto& row = rows[static_cast<std::size_t>(i)];
  auto it = std::lower_bound(row.begin(), row.end(), j, [](const ViewEntry& e, SegId c) { return e.col < c; });
  if (it == row.end() || it->col != j) return nullptr;
  return &*it;
}

double ViewGraph::raw(SegId i, SegId j) const {
  const auto* e = find(i, j);
  return e ? e->raw : missing_fill;
}

double ViewGraph::normalized(SegId i, SegId j) const {
  const auto* e = find(i, j);
  return e ? e->norm : normalize_value(j, missing_fill);
}

std::size_t ViewGraph::nnz() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.size();
  return n;
}

double ViewGraph::normalize_value(SegId col, double value) const {
  const double lo = col_min.at(static_cast<std::size_t>(col));
  const double hi = col_max.at(static_cast<std::size_t>(col));
  if (hi > lo) return std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
  return value >= missing_fill ? 1.0 : 0.0;
}

void ViewGraph::normalize_columns() {
  col_min.assign(num_nodes, kInf);
  col_max.assign(num_nodes, -kInf);
  std::vector<std::size_t> col_count(num_nodes, 0);
  for (const auto& row : rows)
    for (const auto& e : row) {
      const auto c = static_cast<std::size_t>(e.col);
      col_min[c] = std::min(col_min[c], e.raw);
      col_max[c] = std::max(col_max[c], e.raw);
      ++col_count[c];
    }
  for (std::size_t c = 0; c < num_nodes; ++c) {
    // Unstored entries of the column hold missing_fill.
    if (col_count[c] < num_nodes) {
      col_min[c] = std::min(col_min[c], missing_fill);
      col_max[c] = std::max(col_max[c], missing_fill);
    }
  }
  for (auto& row : rows)
    for (auto& e : row) e.norm = normalize_value(e.col, e.raw);
}

ViewGraph build_distance_graph(const RoadNetwork& net, const PairSet& pairs, const ViewBuildOptions& opt) {
  check_pairs(net, pairs);
  auto raw = compute_raw(net, nullptr, pairs, opt);
  return assemble(net, ViewKind::distance, pairs, raw.dist, raw.missing, opt);
}

ViewGraph build_entropy_graph(const RoadNetwork& net, const TransitionStats& stats, const PairSet& pairs,
                              const ViewBuildOptions& opt) {
  check_pairs(net, pairs);
  auto raw = compute_raw(net, &stats, pairs, opt);
  return assemble(net, ViewKind::entropy, pairs, raw.ent, raw.missing, opt);
}

std::pair<ViewGraph, ViewGraph> build_view_graphs(const RoadNetwork& net, const TransitionStats& stats,
                                                  const PairSet& pairs, const ViewBuildOptions& opt) {
  check_pairs(net, pairs);
  auto raw = compute_raw(net, &stats, pairs, opt);
  return {assemble(net, ViewKind::distance, pairs, raw.dist, raw.missing, opt),
          assemble(net, ViewKind::entropy, pairs, raw.ent, raw.missing, opt)};
}

ViewGraph sparsify_knn(ViewGraph vg, int K) {
  if (K < 0) throw ValidationError("knn K must be >= 0");
  vg.knn_k = K;
  vg.knn.assign(vg.rows.size(), {});
  std::vector<std::pair<double, SegId>> cand;
  for (std::size_t i = 0; i < vg.rows.size(); ++i) {
    cand.clear();
    for (const auto& e : vg.rows[i])
      if (static_cast<std::size_t>(e.col) != i) cand.emplace_back(e.norm, e.col);
    const auto keep = std::min(cand.size(), static_cast<std::size_t>(K));
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end());
    for (std::size_t q = 0; q < keep; ++q) vg.knn[i].push_back(cand[q].second);
  }
  return vg;
}

void save_view_graph(const ViewGraph& vg, const std::filesystem::path& csv_path,
                     const std::filesystem::path& meta_path) {
  {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write " + csv_path.string());
    out << "i,j,raw,normalized\n";
    for (std::size_t i = 0; i < vg.rows.size(); ++i)
      for (const auto& e : vg.rows[i])
        out << i << ',' << e.col << ',' << csv::fmt(e.raw) << ',' << csv::fmt(e.norm) << '\n';
  }
  std::ofstream meta(meta_path);
  if (!meta) throw std::runtime_error("cannot write " + meta_path.string());
  meta << "view_kind = " << to_string(vg.kind) << '\n'
       << "k = " << vg.k << '\n'
       << "seed = " << vg.seed << '\n'
       << "missing_fill = " << csv::fmt(vg.missing_fill) << '\n'
       << "K = " << vg.knn_k << '\n'
       << "num_nodes = " << vg.num_nodes << '\n';
}

ViewGraph load_view_graph(const std::filesystem::path& csv_path, const std::filesystem::path& meta_path) {
  ViewGraph vg;
  {
    std::ifstream meta(meta_path);
    if (!meta) throw ValidationError("cannot open " + meta_path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t no = 0;
    while (std::getline(meta, line)) {
      ++no;
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(meta_path.string(), no, "expected key = value");
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
      };
      kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    for (const char* key : {"view_kind", "k", "seed", "missing_fill", "K", "num_nodes"})
      if (!kv.count(key)) throw ValidationError(meta_path.string() + ": missing key " + key);
    vg.kind = view_kind_from_string(kv["view_kind"]);
    vg.k = std::stoi(kv["k"]);
    vg.seed = std::stoull(kv["seed"]);
    vg.missing_fill = std::stod(kv["missing_fill"]);
    vg.knn_k = std::stoi(kv["K"]);
    vg.num_nodes = std::stoull(kv["num_nodes"]);
  }
  vg.rows.resize(vg.num_nodes);
  csv::Reader rd(csv_path);
  rd.expect_header("i,j,raw,normalized");
  std::vector<std::string> f;
  while (rd.next(f)) {
    if (f.size() != 4) rd.fail("expected 4 fields");
    const auto i = rd.to_int(f[0]);
    const auto j = rd.to_int(f[1]);
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= vg.num_nodes || static_cast<std::size_t>(j) >= vg.num_nodes)
      rd.fail("pair outside node range");
    vg.rows[static_cast<std::size_t>(i)].push_back({static_cast<SegId>(j), rd.to_double(f[2]), rd.to_double(f[3])});
  }
  for (auto& row : vg.rows)
    std::sort(row.begin(), row.end(), [](const ViewEntry& a, const ViewEntry& b) { return a.col < b.col; });
  vg.normalize_columns();
  const int K = vg.knn_k;
  return sparsify_knn(std::move(vg), K);
}

}  // namespace mgcat
