#include "mgcat/baseline.hpp"

#include <cmath>
#include <limits>
#include <queue>

namespace mgcat {

namespace {

struct Label {
  double cost = std::numeric_limits<double>::infinity();
  int hops = 0;
  bool operator<(const Label& o) const { return cost != o.cost ? cost < o.cost : hops < o.hops; }
  bool operator==(const Label& o) const { return cost == o.cost && hops == o.hops; }
};

struct Item {
  Label label;
  SegId seg;
  bool operator>(const Item& o) const {
    if (!(label == o.label)) return o.label < label;
    return seg > o.seg;
  }
};

}  // namespace

std::optional<std::vector<SegId>> most_likely_gap(const RoadNetwork& net, const TransitionStats& stats, SegId from,
                                                  SegId to) {
  const double zero_w = std::log(1.0 / kZeroProbEps);
  std::vector<Label> best(net.size());
  std::vector<SegId> pred(net.size(), -1);
  std::vector<char> done(net.size(), 0);
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  best[from] = Label{0.0, 0};
  heap.push({best[from], from});
  while (!heap.empty()) {
    auto [label, u] = heap.top();
    heap.pop();
    if (done[u]) continue;
    done[u] = 1;
    if (u == to && u != from) break;
    for (SegId v : net.successors(u)) {
      if (v == from) continue;
      const double p = stats.probability(u, v);
      const double w = p > 0.0 ? -std::log(p) : zero_w;
      Label cand{label.cost + w, label.hops + 1};
      if (cand < best[v] || (cand == best[v] && u < pred[v])) {
        if (done[v]) continue;
        best[v] = cand;
        pred[v] = u;
        heap.push({cand, v});
      }
    }
  }
  if (from == to || pred[to] < 0) return std::nullopt;
  std::vector<SegId> gap;
  for (SegId s = pred[to]; s != from; s = pred[s]) gap.push_back(s);
  return std::vector<SegId>(gap.rbegin(), gap.rend());
}

BaselineResult frequency_recover(const Trajectory& sparse, const RoadNetwork& net, const TransitionStats& stats) {
  if (sparse.empty()) throw ValidationError("frequency_recover: empty input");
  BaselineResult out;
  out.traj.id = sparse.id;
  out.traj.segs.push_back(sparse.segs.front());
  for (std::size_t k = 0; k + 1 < sparse.size(); ++k) {
    const SegId a = sparse.segs[k];
    const SegId b = sparse.segs[k + 1];
    if (a != b && !net.is_successor(a, b)) {
      if (auto gap = most_likely_gap(net, stats, a, b))
        out.traj.segs.insert(out.traj.segs.end(), gap->begin(), gap->end());
      else
        out.unfilled.push_back(k);
    }
    out.traj.segs.push_back(b);
  }
  return out;
}

}  // namespace mgcat
