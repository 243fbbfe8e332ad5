#include <doctest.h>

#include <fstream>
#include <functional>
#include <queue>

#include "helpers.hpp"
#include "mgcat/baseline.hpp"
#include "mgcat/complexity.hpp"
#include "mgcat/config.hpp"
#include "mgcat/metrics.hpp"
#include "mgcat/synthgen.hpp"
#include "mgcat/trajio.hpp"

using namespace mgcat;
using namespace mgcat::test;

// Metrics ----------------------------------------------------------------------

TEST_CASE("prf1: hand examples") {
  const std::vector<SegId> truth{1, 2, 3, 4};
  auto r = prf1(truth, truth);
  CHECK(r.p == 1.0);
  CHECK(r.r == 1.0);
  CHECK(r.f1 == 1.0);
  r = prf1(std::vector<SegId>{2, 3, 5}, truth);
  CHECK(r.p == 2.0 / 3.0);
  CHECK(r.r == 0.5);
  CHECK(r.f1 == doctest::Approx(4.0 / 7.0).epsilon(1e-15));
  r = prf1(std::vector<SegId>{7, 8}, truth);
  CHECK(r.f1 == 0.0);
  r = prf1(std::vector<SegId>{}, truth);
  CHECK(r.p == 0.0);
  CHECK(r.f1 == 0.0);
  r = prf1(std::vector<SegId>{2, 2, 2, 9}, truth);  // set semantics
  CHECK(r.p == 0.5);
  CHECK_THROWS_AS(prf1(truth, std::vector<SegId>{}), ValidationError);
}

TEST_CASE("owd and merge distance: hand examples") {
  const PointSequence a{{0, 0}, {100, 0}}, b{{0, 50}, {100, 50}};
  CHECK(owd(a, a) == 0.0);
  CHECK(owd(a, b) == 50.0);
  CHECK(owd(b, a) == owd(a, b));
  CHECK(shortest_supertrajectory(a, b) == 200.0);
  CHECK(merge_distance(a, b) == 1.0);
  CHECK(merge_distance(a, a) == 0.0);
  CHECK(merge_distance({{3, 4}}, {{3, 4}}) == 0.0);
  CHECK_THROWS_AS(merge_distance({{3, 4}}, {{0, 0}}), ValidationError);
  CHECK_THROWS_AS(owd({}, a), ValidationError);
}

namespace {

double brute_super(const PointSequence& a, const PointSequence& b) {
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, const Point*, double)> rec = [&](std::size_t i, std::size_t j,
                                                                                const Point* last, double len) {
    if (i == a.size() && j == b.size()) {
      best = std::min(best, len);
      return;
    }
    auto step = [&](const Point& p) { return last ? len + std::hypot(p.x - last->x, p.y - last->y) : len; };
    if (i < a.size()) rec(i + 1, j, &a[i], step(a[i]));
    if (j < b.size()) rec(i, j + 1, &b[j], step(b[j]));
  };
  rec(0, 0, nullptr, 0.0);
  return best;
}

PointSequence random_points(Rng& rng, std::size_t n, bool lattice) {
  PointSequence p;
  for (std::size_t k = 0; k < n; ++k) {
    if (lattice)
      p.push_back({100.0 * static_cast<double>(rng.index(4)), 100.0 * static_cast<double>(rng.index(4))});
    else
      p.push_back({rng.uniform(-500, 500), rng.uniform(-500, 500)});
  }
  return p;
}

}  // namespace

TEST_CASE("merge distance DP equals exhaustive interleavings up to 6x6") {
  Rng rng(42);
  std::size_t cases = 0;
  for (std::size_t n = 1; n <= 6; ++n)
    for (std::size_t m = 1; m <= 6; ++m)
      for (int trial = 0; trial < 6; ++trial) {
        const auto a = random_points(rng, n, trial % 2 == 0);
        const auto b = random_points(rng, m, trial % 2 == 0);
        CHECK(shortest_supertrajectory(a, b) == brute_super(a, b));
        if (polyline_length(a) + polyline_length(b) > 0) CHECK(merge_distance(a, b) >= -1e-12);
        ++cases;
      }
  CHECK(cases == 216);
}

TEST_CASE("to_points") {
  const auto net = line_network(4);
  const std::vector<SegId> segs{0, 1, 2};
  const auto p = to_points(net, segs);
  CHECK(p == PointSequence{{0, 0}, {100, 0}, {200, 0}, {300, 0}});
  const auto q = to_points(net, std::vector<SegId>{0}, 25.0);
  CHECK(q == PointSequence{{0, 0}, {25, 0}, {50, 0}, {75, 0}, {100, 0}});
  CHECK(polyline_length(p) == 300.0);
}

// Synthetic data ---------------------------------------------------------------

TEST_CASE("grid network counts and connectivity") {
  CHECK(gen_grid_network(2, 2, 100.0).size() == 8);
  const auto net = gen_grid_network(5, 5, 100.0);
  CHECK(net.size() == 80);
  for (const auto& s : net.segments()) CHECK(s.length == 100.0);
  for (SegId src = 0; src < static_cast<SegId>(net.size()); ++src) {
    std::vector<char> seen(net.size(), 0);
    std::queue<SegId> q;
    q.push(src);
    seen[static_cast<std::size_t>(src)] = 1;
    std::size_t count = 1;
    while (!q.empty()) {
      const SegId u = q.front();
      q.pop();
      for (SegId v : net.successors(u))
        if (!seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = 1;
          ++count;
          q.push(v);
        }
    }
    CHECK(count == net.size());
  }
  CHECK_THROWS_AS(gen_grid_network(1, 4, 100.0), ValidationError);
}

TEST_CASE("generated corpora") {
  const auto net = gen_grid_network(6, 6, 100.0);
  GenConfig g;
  g.rows = g.cols = 6;
  g.count = 300;
  g.seed = 4;

  SUBCASE("valid, timed, reproducible") {
    const auto t = gen_trajectories(net, g);
    CHECK(t.size() == 300);
    const auto st = build_transition_stats(t, net);
    CHECK(st.rejected().empty());
    for (const auto& x : t) {
      CHECK(x.size() >= 4);
      CHECK(is_valid_chain(net, x.segs));
      CHECK(x.times.front() == 0.0);
      for (std::size_t k = 1; k < x.size(); ++k) CHECK(x.times[k] > x.times[k - 1]);
    }
    CHECK(gen_trajectories(net, g) == t);
  }
  SUBCASE("no detours means DS 1") {
    g.p_detour = 0.0;
    for (const auto& x : gen_trajectories(net, g)) CHECK(detour_score(x, net) == 1.0);
  }
  SUBCASE("all detours with high turn bias") {
    g.p_detour = 1.0;
    g.turn_bias = 0.9;
    double total = 0.0;
    const auto t = gen_trajectories(net, g);
    for (const auto& x : t) total += detour_score(x, net);
    CHECK(total / static_cast<double>(t.size()) > 1.2);
  }
  SUBCASE("complexity is controllable") {
    g.p_detour = 0.8;
    const auto hi = gen_trajectories(net, g);
    g.p_detour = 0.1;
    const auto lo = gen_trajectories(net, g);
    std::vector<Trajectory> all(hi);
    all.insert(all.end(), lo.begin(), lo.end());
    const auto st = build_transition_stats(all, net);
    const auto c = calibrate(all, net, st);
    double mh = 0.0, ml = 0.0;
    for (const auto& x : hi) mh += score(x, net, st, c).complexity;
    for (const auto& x : lo) ml += score(x, net, st, c).complexity;
    CHECK(mh > ml);
  }
  SUBCASE("bad config rejected") {
    g.p_detour = 1.5;
    CHECK_THROWS_AS(gen_trajectories(net, g), ValidationError);
  }
}

TEST_CASE("sparsify") {
  const auto t = make_traj(3, {0, 1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(sparsify(t, 1.0, 5) == t);
  const auto s = sparsify(t, 2.0 / 3.0, 5);
  CHECK(s.size() == 6);
  CHECK(s.segs.front() == 0);
  CHECK(s.segs.back() == 8);
  CHECK(std::is_sorted(s.segs.begin(), s.segs.end()));
  CHECK(s.times.size() == 6);
  CHECK(sparsify(t, 2.0 / 3.0, 5) == s);
  CHECK(sparsify(t, 0.01, 5).size() == 2);
  CHECK_THROWS_AS(sparsify(make_traj(0, {1, 2}), 0.5, 1), ValidationError);
}

// Baseline ---------------------------------------------------------------------

TEST_CASE("baseline: forced gap, identity, unreachable") {
  const auto net = line_network(5);
  const auto st = build_transition_stats(std::vector<Trajectory>{make_traj(0, {0, 1, 2, 3})}, net);
  auto r = frequency_recover(make_traj(0, {0, 2}), net, st);
  CHECK(r.traj.segs == std::vector<SegId>{0, 1, 2});
  CHECK(r.unfilled.empty());
  r = frequency_recover(make_traj(0, {0, 1, 2, 3}), net, st);
  CHECK(r.traj.segs == std::vector<SegId>{0, 1, 2, 3});

  std::vector<Segment> segs{{0, 0, 1, 100, {0, 0}, {100, 0}},
                            {1, 1, 0, 100, {100, 0}, {0, 0}},
                            {2, 5, 6, 100, {0, 500}, {100, 500}},
                            {3, 6, 5, 100, {100, 500}, {0, 500}}};
  const auto islands = RoadNetwork::from_segments(segs);
  r = frequency_recover(make_traj(0, {0, 2, 3}), islands, build_transition_stats({}, islands));
  CHECK(r.traj.segs == std::vector<SegId>{0, 2, 3});
  CHECK(r.unfilled == std::vector<std::size_t>{0});
}

TEST_CASE("baseline: picks the higher-probability route") {
  const auto net = gen_grid_network(3, 3, 100.0);
  auto seg = [&](int r0, int c0, int r1, int c1) { return grid_seg(net, 3, r0, c0, r1, c1); };
  const SegId a = seg(1, 0, 0, 0), b = seg(1, 1, 1, 2);
  const SegId s1 = seg(0, 0, 0, 1), s2 = seg(0, 1, 1, 1);
  const SegId t1 = seg(0, 0, 1, 0), t2 = seg(1, 0, 1, 1);
  TransitionStats st(net);
  st.add(a, s1);
  st.add(a, t1);
  for (int k = 0; k < 9; ++k) st.add(s1, s2), st.add(s2, b);
  st.add(s1, seg(0, 1, 0, 2));
  st.add(s2, seg(1, 1, 2, 1));
  st.add(t1, t2), st.add(t1, seg(1, 0, 2, 0));
  st.add(t2, b), st.add(t2, seg(1, 1, 2, 1));
  CHECK(st.probability(s1, s2) == 0.9);
  CHECK(st.probability(t1, t2) == 0.5);
  const auto gap = most_likely_gap(net, st, a, b);
  REQUIRE(gap);
  CHECK(*gap == std::vector<SegId>{s1, s2});
}

TEST_CASE("baseline: output keeps every observed segment in order") {
  Fixture fx(5, 100, 6);
  for (std::size_t i = 0; i < 40; ++i) {
    const auto sp = sparsify(fx.trajs[i], 1.0 / 3.0, i);
    const auto r = frequency_recover(sp, fx.net, fx.stats);
    std::size_t k = 0;
    for (SegId s : r.traj.segs)
      if (k < sp.size() && s == sp.segs[k]) ++k;
    CHECK(k == sp.size());
    CHECK(is_valid_chain(fx.net, r.traj.segs));
  }
}

// Files and config -------------------------------------------------------------

TEST_CASE("trajectory CSV") {
  const auto dir = scratch_dir("trajio");
  const auto net = gen_grid_network(3, 3, 100.0);
  std::vector<Trajectory> t{make_traj(4, {0, 2, 5}), make_traj(1, {7})};
  t[0].times = {0.0, 1.0 / 3.0, 12.5};
  save_trajectories(t, dir / "t.csv");
  CHECK(load_trajectories(dir / "t.csv", &net) == t);

  auto bad = [&](const std::string& body) {
    std::ofstream(dir / "b.csv") << "traj_id,seq_idx,seg_id,timestamp_s\n" << body;
    return dir / "b.csv";
  };
  CHECK_THROWS_AS(load_trajectories(bad("1,0,0,0\n2,0,1,0\n1,1,2,1\n")), ParseError);
  CHECK_THROWS_AS(load_trajectories(bad("1,0,0,0\n1,2,1,1\n")), ParseError);
  CHECK_THROWS_AS(load_trajectories(bad("1,0,0,5\n1,1,1,4\n")), ParseError);
  CHECK_THROWS_AS(load_trajectories(bad("1,0,99,0\n"), &net), ParseError);
  CHECK_THROWS_AS(load_trajectories(bad("1,0,x,0\n")), ParseError);
  std::ofstream(dir / "h.csv") << "id,seq,seg,t\n";
  CHECK_THROWS_AS(load_trajectories(dir / "h.csv"), ValidationError);
}

TEST_CASE("recovered CSV") {
  const auto dir = scratch_dir("recio");
  auto obs = make_traj(2, {5, 9});
  const auto r = annotate_recovery(obs, {5, 6, 9, 9});
  CHECK(r.observed == std::vector<bool>{true, false, true, false});
  CHECK(r.times[2] == 10.0);
  save_recovered({r}, dir / "r.csv");
  std::ifstream in(dir / "r.csv");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text ==
        "traj_id,seq_idx,seg_id,timestamp_s,source\n"
        "2,0,5,0,observed\n2,1,6,,generated\n2,2,9,10,observed\n2,3,9,,generated\n");
  const auto back = load_recovered(dir / "r.csv");
  REQUIRE(back.size() == 1);
  CHECK(back[0].segs == r.segs);
}

TEST_CASE("config") {
  const auto c = Config::parse("# comment\n\nseed = 7\n  lr=0.001 \nsoft_mask = false\nname = a b\n");
  CHECK(c.get_int("seed", 0) == 7);
  CHECK(c.get_double("lr", 0) == 0.001);
  CHECK_FALSE(c.get_bool("soft_mask", true));
  CHECK(c.get_string("name", "") == "a b");
  CHECK(c.get_int("missing", 3) == 3);
  CHECK_THROWS_AS(c.get_int("lr", 0), ValidationError);
  CHECK_THROWS_AS(c.get_bool("name", false), ValidationError);
  try {
    Config::parse("a = 1\nbroken\n", "x.cfg");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  auto d = c;
  d.merge(Config::parse("seed = 9\nextra = 1\n"));
  CHECK(d.get_int("seed", 0) == 9);
  CHECK(d.to_text() == "extra = 1\nlr = 0.001\nname = a b\nseed = 9\nsoft_mask = false\n");
  const auto dir = scratch_dir("config");
  d.save(dir / "c.txt");
  CHECK(Config::load(dir / "c.txt").values() == d.values());
}
