#include <doctest.h>

#include <fstream>
#include <set>

#include "helpers.hpp"
#include "mgcat/roadnet.hpp"
#include "mgcat/synthgen.hpp"

using namespace mgcat;
using namespace mgcat::test;

TEST_CASE("load_network: 2x2 grid file") {
  const auto dir = scratch_dir("net2x2");
  save_network(gen_grid_network(2, 2, 100.0), dir / "n.csv");
  const auto net = load_network(dir / "n.csv");
  CHECK(net.size() == 8);
  for (SegId i = 0; i < 8; ++i) CHECK(!net.successors(i).empty());
}

TEST_CASE("load_network: zero length rejected") {
  const auto dir = scratch_dir("netzero");
  std::ofstream(dir / "n.csv") << "seg_id,from_node,to_node,length_m,x1,y1,x2,y2\n"
                                  "0,0,1,0,0,0,1,0\n1,1,0,100,1,0,0,0\n";
  CHECK_THROWS_AS(load_network(dir / "n.csv"), ValidationError);
}

TEST_CASE("load_network: malformed row reports its line") {
  const auto dir = scratch_dir("netbad");
  std::ofstream(dir / "n.csv") << "seg_id,from_node,to_node,length_m,x1,y1,x2,y2\n"
                                  "0,0,1,100,0,0,1,0\n1,1,0,abc,1,0,0,0\n";
  try {
    load_network(dir / "n.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("load_network: dangling node rejected") {
  const auto dir = scratch_dir("netdangle");
  std::ofstream(dir / "n.csv") << "seg_id,from_node,to_node,length_m,x1,y1,x2,y2\n"
                                  "0,0,1,100,0,0,1,0\n1,1,0,100,1,0,0,0\n2,1,2,100,1,0,2,0\n";
  CHECK_THROWS_AS(load_network(dir / "n.csv"), ValidationError);
}

TEST_CASE("load_network: 5x5 round trip and sparse id remap") {
  const auto dir = scratch_dir("net5x5");
  const auto net = gen_grid_network(5, 5, 100.0);
  save_network(net, dir / "n.csv");
  CHECK(load_network(dir / "n.csv") == net);

  std::ofstream(dir / "m.csv") << "seg_id,from_node,to_node,length_m,x1,y1,x2,y2\n"
                                  "70,1,0,100,1,0,0,0\n10,0,1,100,0,0,1,0\n";
  const auto m = load_network(dir / "m.csv");
  CHECK(m.size() == 2);
  CHECK(m.segment(0).from_node == 0);
  CHECK(m.segment(1).from_node == 1);
}

TEST_CASE("transition stats: hand counts") {
  const auto net = gen_grid_network(3, 3, 100.0);
  const SegId s1 = grid_seg(net, 3, 1, 0, 1, 1);
  const SegId s2 = grid_seg(net, 3, 1, 1, 1, 2);
  const SegId s3 = grid_seg(net, 3, 1, 1, 2, 1);

  SUBCASE("single choice") {
    std::vector<Trajectory> t{make_traj(0, {s1, s2}), make_traj(1, {s1, s2})};
    const auto st = build_transition_stats(t, net);
    CHECK(st.probability(s1, s2) == 1.0);
    CHECK(st.entropy(s1) == 0.0);
  }
  SUBCASE("even split") {
    std::vector<Trajectory> t;
    for (int i = 0; i < 50; ++i) t.push_back(make_traj(i, {s1, s2}));
    for (int i = 0; i < 50; ++i) t.push_back(make_traj(50 + i, {s1, s3}));
    const auto st = build_transition_stats(t, net);
    CHECK(st.probability(s1, s2) == 0.5);
    CHECK(st.entropy(s1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("empty corpus") {
    const auto st = build_transition_stats({}, net);
    for (SegId i = 0; i < static_cast<SegId>(net.size()); ++i) {
      CHECK(st.outflow(i) == 0);
      CHECK(st.entropy(i) == 0.0);
      for (SegId j : net.successors(i)) CHECK(st.probability(i, j) == 0.0);
    }
  }
  SUBCASE("non-adjacent trajectory rejected by id") {
    std::vector<Trajectory> t{make_traj(4, {s1, s2}), make_traj(9, {s1, grid_seg(net, 3, 0, 0, 0, 1)})};
    const auto st = build_transition_stats(t, net);
    REQUIRE(st.rejected().size() == 1);
    CHECK(st.rejected()[0] == 9);
    CHECK(st.outflow(s1) == 1);
  }
  SUBCASE("incremental add matches batch build") {
    TransitionStats st(net);
    st.add(s1, s2);
    st.add(s1, s3);
    CHECK(st.entropy(s1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
}

TEST_CASE("transition stats: probabilities sum to one") {
  Fixture fx(5, 200, 3);
  for (SegId i = 0; i < static_cast<SegId>(fx.net.size()); ++i) {
    if (fx.stats.outflow(i) == 0) continue;
    double s = 0.0;
    for (SegId j : fx.net.successors(i)) s += fx.stats.probability(i, j);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("sample_routes") {
  SUBCASE("identity") {
    const auto net = gen_grid_network(3, 3, 100.0);
    const auto r = sample_routes(net, 4, 4, 3, 1);
    REQUIRE(r.size() == 3);
    for (const auto& x : r) CHECK(x == std::vector<SegId>{4});
  }
  SUBCASE("forced path on a line") {
    const auto net = line_network(5);
    const auto r = sample_routes(net, 0, 3, 3, 9);
    REQUIRE(r.size() == 3);
    for (const auto& x : r) CHECK(x == std::vector<SegId>{0, 1, 2, 3});
  }
  SUBCASE("3x3 routes never beat Dijkstra, and are deterministic") {
    const auto net = gen_grid_network(3, 3, 100.0);
    const auto n = static_cast<SegId>(net.size());
    for (SegId i = 0; i < n; ++i)
      for (SegId j = 0; j < n; ++j) {
        const auto routes = sample_routes(net, i, j, 3, 100 + static_cast<std::uint64_t>(i * n + j));
        const auto best = shortest_route(net, i, j);
        REQUIRE(best.has_value());
        REQUIRE(routes.size() == 3);
        for (const auto& r : routes) {
          CHECK(r.front() == i);
          CHECK(r.back() == j);
          CHECK(is_valid_chain(net, r));
          CHECK(route_length(net, r) >= best->length);
        }
        CHECK(routes == sample_routes(net, i, j, 3, 100 + static_cast<std::uint64_t>(i * n + j)));
      }
  }
  SUBCASE("k < 1 rejected") { CHECK_THROWS_AS(sample_routes(line_network(3), 0, 1, 0, 1), ValidationError); }
}

namespace {

// Two separate two-way roads: no route between them.
RoadNetwork two_islands() {
  std::vector<Segment> segs{
      {0, 0, 1, 100, {0, 0}, {100, 0}},
      {1, 1, 0, 100, {100, 0}, {0, 0}},
      {2, 5, 6, 100, {0, 500}, {100, 500}},
      {3, 6, 5, 100, {100, 500}, {0, 500}},
  };
  return RoadNetwork::from_segments(segs);
}

}  // namespace

TEST_CASE("distance graph: hand values") {
  const auto net = line_network(4);
  PairSet pairs{{0, 0}, {0, 2}, {1, 2}};
  ViewBuildOptions opt;
  const auto vg = build_distance_graph(net, pairs, opt);
  CHECK(vg.raw(0, 0) == 100.0);
  CHECK(vg.raw(0, 2) == 300.0);
  CHECK(vg.raw(1, 2) == 200.0);
  CHECK(vg.missing_fill == doctest::Approx(1.05 * 300.0).epsilon(1e-15));
}

TEST_CASE("distance graph: disconnected pair is the sentinel") {
  const auto net = two_islands();
  PairSet pairs{{0, 0}, {0, 1}, {0, 2}, {2, 3}};
  const auto vg = build_distance_graph(net, pairs, {});
  CHECK(vg.raw(0, 2) == vg.missing_fill);
  CHECK(vg.normalized(0, 2) == 1.0);
  CHECK(vg.normalized(3, 0) == 1.0);  // outside the pair set
}

TEST_CASE("entropy graph: hand values") {
  SUBCASE("deterministic successors give zero") {
    const auto net = line_network(4);
    std::vector<Trajectory> t{make_traj(0, {0, 1, 2})};
    const auto st = build_transition_stats(t, net);
    const auto vg = build_entropy_graph(net, st, {{0, 2}}, {});
    CHECK(vg.raw(0, 2) == 0.0);
  }
  SUBCASE("one segment with an even split gives ln 2") {
    const auto net = gen_grid_network(3, 3, 100.0);
    const SegId s1 = grid_seg(net, 3, 1, 0, 1, 1);
    TransitionStats st(net);
    st.add(s1, grid_seg(net, 3, 1, 1, 1, 2));
    st.add(s1, grid_seg(net, 3, 1, 1, 2, 1));
    const auto vg = build_entropy_graph(net, st, {{s1, s1}}, {});
    CHECK(vg.raw(s1, s1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("no route normalizes to one") {
    const auto net = two_islands();
    const auto st = build_transition_stats({}, net);
    const auto vg = build_entropy_graph(net, st, {{0, 1}, {0, 3}}, {});
    CHECK(vg.normalized(0, 3) == 1.0);
  }
}

TEST_CASE("view graphs: invariants on a generated corpus") {
  Fixture fx(5, 150, 11, 8);
  const auto pairs = build_pair_set(fx.net, fx.trajs, 4);
  for (const ViewGraph* vg : {&fx.distance, &fx.entropy}) {
    for (std::size_t c = 0; c < vg->num_nodes; ++c) {
      if (vg->col_max[c] > vg->col_min[c]) {
        CHECK(vg->normalize_value(static_cast<SegId>(c), vg->col_min[c]) == 0.0);
        CHECK(vg->normalize_value(static_cast<SegId>(c), vg->col_max[c]) == 1.0);
      }
    }
    for (std::size_t i = 0; i < vg->rows.size(); ++i) {
      CHECK(vg->knn[i].size() <= 8);
      for (const auto& e : vg->rows[i]) {
        CHECK(e.norm >= 0.0);
        CHECK(e.norm <= 1.0);
        CHECK(e.raw >= 0.0);
      }
      for (SegId nb : vg->knn[i]) CHECK(vg->find(static_cast<SegId>(i), nb) != nullptr);
    }
  }
  for (const auto& [i, j] : pairs) {
    const auto best = shortest_route(fx.net, i, j);
    if (best) CHECK(fx.distance.raw(i, j) >= best->length);
  }
}

TEST_CASE("view graphs: serial and parallel builds agree bitwise") {
  Fixture fx(4, 80, 2);
  const auto pairs = build_pair_set(fx.net, fx.trajs, 4);
  ViewBuildOptions a;
  a.seed = 17;
  a.exec = Exec::serial;
  ViewBuildOptions b = a;
  b.exec = Exec::parallel;
  const auto [d1, e1] = build_view_graphs(fx.net, fx.stats, pairs, a);
  const auto [d2, e2] = build_view_graphs(fx.net, fx.stats, pairs, b);
  for (std::size_t i = 0; i < d1.rows.size(); ++i) {
    REQUIRE(d1.rows[i].size() == d2.rows[i].size());
    for (std::size_t q = 0; q < d1.rows[i].size(); ++q) {
      CHECK(d1.rows[i][q].raw == d2.rows[i][q].raw);
      CHECK(e1.rows[i][q].raw == e2.rows[i][q].raw);
    }
  }
  const auto d3 = build_distance_graph(fx.net, pairs, a);
  CHECK(d3.rows.size() == d1.rows.size());
  for (std::size_t i = 0; i < d1.rows.size(); ++i)
    for (std::size_t q = 0; q < d1.rows[i].size(); ++q) CHECK(d3.rows[i][q].raw == d1.rows[i][q].raw);
}

TEST_CASE("sparsify_knn") {
  ViewGraph vg;
  vg.num_nodes = 3;
  vg.missing_fill = 10.0;
  vg.rows = {{{1, 2.0, 0}, {2, 5.0, 0}}, {{0, 1.0, 0}}, {}};
  vg.normalize_columns();
  vg.rows[0][0].norm = 0.2;
  vg.rows[0][1].norm = 0.5;

  SUBCASE("K=1 keeps the argmin") { CHECK(sparsify_knn(vg, 1).knn[0] == std::vector<SegId>{1}); }
  SUBCASE("K above degree keeps everything") {
    const auto k = sparsify_knn(vg, 5);
    CHECK(k.knn[0] == std::vector<SegId>{1, 2});
    CHECK(k.knn[1] == std::vector<SegId>{0});
    CHECK(k.knn[2].empty());
  }
  SUBCASE("5x5 grid K=4 equals brute-force top-K") {
    Fixture fx(5, 100, 8, 4);
    for (std::size_t i = 0; i < fx.distance.rows.size(); ++i) {
      std::set<std::pair<double, SegId>> all;
      for (const auto& e : fx.distance.rows[i])
        if (static_cast<std::size_t>(e.col) != i) all.emplace(e.norm, e.col);
      std::vector<SegId> want;
      for (const auto& [v, c] : all) {
        if (want.size() == 4) break;
        want.push_back(c);
      }
      CHECK(fx.distance.knn[i] == want);
    }
  }
}

TEST_CASE("view graph persistence round trip") {
  Fixture fx(3, 30, 4);
  const auto dir = scratch_dir("viewio");
  save_view_graph(fx.entropy, dir / "v.csv", dir / "v.meta");
  const auto back = load_view_graph(dir / "v.csv", dir / "v.meta");
  CHECK(back.kind == ViewKind::entropy);
  CHECK(back.missing_fill == fx.entropy.missing_fill);
  CHECK(back.knn == fx.entropy.knn);
  REQUIRE(back.rows.size() == fx.entropy.rows.size());
  for (std::size_t i = 0; i < back.rows.size(); ++i)
    for (std::size_t q = 0; q < back.rows[i].size(); ++q) {
      CHECK(back.rows[i][q].raw == fx.entropy.rows[i][q].raw);
      CHECK(back.rows[i][q].norm == fx.entropy.rows[i][q].norm);
    }
}
