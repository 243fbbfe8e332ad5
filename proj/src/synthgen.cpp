#include "mgcat/synthgen.hpp"

#include <algorithm>
#include <cmath>

#include "mgcat/rng.hpp"

namespace mgcat {

void GenConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (rows < 2 || cols < 2) throw ValidationError("grid must be at least 2x2");
  if (!(spacing > 0.0)) throw ValidationError("spacing must be positive");
  if (count < 0) throw ValidationError("trajectory count must be non-negative");
  if (!prob(p_detour) || !prob(turn_bias) || !prob(jitter)) throw ValidationError("probabilities must lie in [0, 1]");
  if (!(away_weight >= 0.0)) throw ValidationError("away_weight must be non-negative");
  if (!(speed > 0.0)) throw ValidationError("speed must be positive");
  if (min_segments < 1) throw ValidationError("min_segments must be >= 1");
}

RoadNetwork gen_grid_network(int rows, int cols, double spacing) {
  if (rows < 2 || cols < 2) throw ValidationError("grid must be at least 2x2");
  auto node = [cols](int r, int c) { return static_cast<std::int64_t>(r) * cols + c; };
  auto pos = [spacing](int r, int c) { return Point{c * spacing, r * spacing}; };
  std::vector<Segment> segs;
  auto edge = [&](int r1, int c1, int r2, int c2) {
    for (int dir = 0; dir < 2; ++dir) {
      Segment s;
      s.id = static_cast<SegId>(segs.size());
      s.from_node = dir == 0 ? node(r1, c1) : node(r2, c2);
      s.to_node = dir == 0 ? node(r2, c2) : node(r1, c1);
      s.a = dir == 0 ? pos(r1, c1) : pos(r2, c2);
      s.b = dir == 0 ? pos(r2, c2) : pos(r1, c1);
      s.length = spacing;
      segs.push_back(s);
    }
  };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) edge(r, c, r, c + 1);
      if (r + 1 < rows) edge(r, c, r + 1, c);
    }
  return RoadNetwork::from_segments(std::move(segs));
}

namespace {

struct Walker {
  const RoadNetwork& net;
  const GenConfig& cfg;
  std::vector<std::vector<double>> dist;  // dist[a][b]: route length a..b

  bool turns(SegId from, SegId to) const {
    const auto& s = net.segment(from);
    const auto& t = net.segment(to);
    const double cross = (s.b.x - s.a.x) * (t.b.y - t.a.y) - (s.b.y - s.a.y) * (t.b.x - t.a.x);
    return std::abs(cross) > 1e-9 * s.length * t.length;
  }

  bool u_turn(SegId from, SegId to) const { return net.segment(to).to_node == net.segment(from).from_node; }

  // Biased walk from o to d; empty when it exceeds the length cap.
  std::vector<SegId> walk(SegId o, SegId d, Rng& rng) const {
    const double cap = 4.0 * dist[o][d];
    std::vector<SegId> route{o};
    double len = net.length(o);
    SegId cur = o;
    std::vector<SegId> cands;
    std::vector<double> w;
    while (cur != d) {
      cands.clear();
      for (SegId s : net.successors(cur))
        if (!u_turn(cur, s)) cands.push_back(s);
      if (cands.empty()) cands.assign(net.successors(cur).begin(), net.successors(cur).end());
      SegId next = -1;
      if (std::find(cands.begin(), cands.end(), d) != cands.end()) {
        next = d;
      } else {
        w.clear();
        for (SegId s : cands) {
          double x = dist[s][d] < dist[cur][d] ? 1.0 : cfg.away_weight;
          x *= turns(cur, s) ? cfg.turn_bias : 1.0 - cfg.turn_bias;
          w.push_back(x);
        }
        auto k = rng.weighted(w);
        if (k == w.size()) k = rng.index(cands.size());
        next = cands[k];
      }
      route.push_back(next);
      len += net.length(next);
      if (len > cap) return {};
      cur = next;
    }
    return route;
  }
};

}  // namespace

std::vector<Trajectory> gen_trajectories(const RoadNetwork& net, const GenConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<SegId>(net.size());
  if (n < 2) throw ValidationError("network too small");
  Walker walker{net, cfg, {}};
  walker.dist.resize(net.size());
  for (SegId s = 0; s < n; ++s) walker.dist[s] = shortest_lengths_from(net, s);

  std::vector<Trajectory> out(static_cast<std::size_t>(cfg.count));
#pragma omp parallel for schedule(dynamic, 16)
  for (int i = 0; i < cfg.count; ++i) {
    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(i)}));
    std::vector<SegId> segs;
    while (segs.empty()) {
      const auto o = static_cast<SegId>(rng.index(net.size()));
      const auto d = static_cast<SegId>(rng.index(net.size()));
      if (o == d || !std::isfinite(walker.dist[o][d])) continue;
      auto sp = shortest_route(net, o, d);
      if (static_cast<int>(sp->segs.size()) < cfg.min_segments) continue;
      if (rng.uniform() < cfg.p_detour) {
        for (int t = 0; t < cfg.max_retries && segs.empty(); ++t) segs = walker.walk(o, d, rng);
      }
      if (segs.empty()) segs = sp->segs;
    }
    Trajectory& tr = out[static_cast<std::size_t>(i)];
    tr.id = i;
    tr.segs = std::move(segs);
    tr.times.resize(tr.segs.size());
    double t = 0.0;
    for (std::size_t k = 0; k < tr.segs.size(); ++k) {
      tr.times[k] = t;
      t += net.length(tr.segs[k]) / cfg.speed * rng.uniform(1.0 - cfg.jitter, 1.0 + cfg.jitter);
    }
  }
  return out;
}

std::vector<std::size_t> sparsify_positions(std::size_t n, double keep_ratio, std::uint64_t seed) {
  if (n < 3) throw ValidationError("sparsify needs at least 3 segments");
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) throw ValidationError("keep_ratio must lie in (0, 1]");
  auto keep = static_cast<std::size_t>(std::ceil(keep_ratio * static_cast<double>(n) - 1e-9));
  keep = std::clamp<std::size_t>(keep, 2, n);
  std::vector<std::size_t> interior(n - 2);
  for (std::size_t i = 0; i < interior.size(); ++i) interior[i] = i + 1;
  Rng rng(seed);
  rng.shuffle(interior);
  std::vector<std::size_t> pos{0, n - 1};
  pos.insert(pos.end(), interior.begin(), interior.begin() + static_cast<std::ptrdiff_t>(keep - 2));
  std::sort(pos.begin(), pos.end());
  return pos;
}

Trajectory sparsify(const Trajectory& traj, double keep_ratio, std::uint64_t seed) {
  Trajectory out;
  out.id = traj.id;
  for (auto p : sparsify_positions(traj.size(), keep_ratio, seed)) {
    out.segs.push_back(traj.segs[p]);
    if (!traj.times.empty()) out.times.push_back(traj.times[p]);
  }
  return out;
}

}  // namespace mgcat
