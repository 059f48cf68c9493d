#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "dodrio/layout.hpp"
#include "synthetic.hpp"

using namespace dodrio;
namespace dt = dodrio::testing;

namespace {

GraphSpec nodes_only(std::size_t n) {
  GraphSpec g;
  for (std::size_t k = 0; k < n; ++k) g.nodes.push_back({k, "t" + std::to_string(k), 0.0});
  return g;
}

std::vector<std::string> tokens(std::size_t n) {
  std::vector<std::string> t;
  for (std::size_t k = 0; k < n; ++k) t.push_back("t" + std::to_string(k));
  return t;
}

// Separation at which spring, repulsion and the centroid pull cancel for a
// single edge of normalized weight 1: k^2/d = d^2/k + g*d/2. Bisection.
double two_node_equilibrium(const ForceParams& p) {
  const double k = p.ideal_distance;
  const auto net = [&](double d) { return k * k / d - d * d / k - p.gravity * d / 2.0; };
  double lo = 1e-6 * k, hi = 10.0 * k;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (net(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(AttentionGraph, IdentityHasNoEdges) {
  const auto t = tokens(4);
  const std::vector<double> s(4, 0.5);
  for (double thr : {0.0, 0.05, 0.5})
    EXPECT_TRUE(build_attention_graph(Matrix::identity(4), t, s, thr).edges.empty());
}

TEST(AttentionGraph, UniformCompleteDigraph) {
  const auto t = tokens(4);
  const auto g = build_attention_graph(dt::uniform_attention(4), t, std::vector<double>(4, 1.0), 0.0);
  ASSERT_EQ(g.edges.size(), 12u);
  for (const auto& e : g.edges) {
    EXPECT_EQ(e.weight, 0.25);
    EXPECT_NE(e.source, e.target);
  }
  EXPECT_EQ(g.nodes.size(), 4u);
  EXPECT_EQ(g.nodes[2].token, "t2");
}

TEST(AttentionGraph, ThresholdCounting) {
  const Matrix a{{0.9, 0.05, 0.05}, {0.6, 0.1, 0.3}, {0.25, 0.7, 0.05}};
  const auto t = tokens(3);
  const auto g = build_attention_graph(a, t, {}, 0.5);
  ASSERT_EQ(g.edges.size(), 2u);  // (1,0) 0.6 and (2,1) 0.7; (0,0) is a self-loop
  EXPECT_EQ(g.edges[0], (GraphEdge{1, 0, 0.6}));
  EXPECT_EQ(g.edges[1], (GraphEdge{2, 1, 0.7}));

  const Matrix b{{0.1, 0.8, 0.1, 0.0}, {0.55, 0.2, 0.25, 0.0}, {0.0, 0.0, 0.0, 1.0}, {0.5, 0.2, 0.2, 0.1}};
  EXPECT_EQ(build_attention_graph(b, tokens(4), {}, 0.5).edges.size(), 3u);  // 0.5 is not > 0.5
}

TEST(AttentionGraph, ThresholdNesting) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = dt::uniform_index(rng, 2, 12);
    const auto a = dt::random_stochastic(n, rng);
    auto prev = threshold_edges(a, 0.0);
    for (double thr = 0.02; thr < 1.0; thr += 0.02) {
      const auto cur = threshold_edges(a, thr);
      EXPECT_LE(cur.size(), prev.size());
      for (const auto& e : cur)
        EXPECT_NE(std::find(prev.begin(), prev.end(), e), prev.end());
      prev = cur;
    }
  }
}

TEST(ForceLayout, SingleNodeAtOrigin) {
  const auto r = force_layout(nodes_only(1), {}, 5);
  ASSERT_EQ(r.positions.size(), 1u);
  EXPECT_EQ(r.positions[0], (Point{0.0, 0.0}));
}

TEST(ForceLayout, TwoNodeEquilibrium) {
  const ForceParams params;
  const double expect = two_node_equilibrium(params);
  EXPECT_NEAR(expect, params.ideal_distance, 0.1 * params.ideal_distance);
  for (double w : {0.05, 0.3, 1.0}) {
    for (std::uint64_t seed : {1, 2, 3, 99}) {
      auto g = nodes_only(2);
      g.edges.push_back({0, 1, w});
      const auto r = force_layout(g, params, seed);
      const double d = std::hypot(r.positions[0].x - r.positions[1].x,
                                  r.positions[0].y - r.positions[1].y);
      EXPECT_NEAR(d, params.ideal_distance, 0.1 * params.ideal_distance);
      EXPECT_NEAR(d, expect, 0.01 * expect);
    }
  }
}

TEST(ForceLayout, DeterministicAndCentered) {
  std::mt19937_64 rng(32);
  const auto a = dt::random_stochastic(9, rng);
  const auto g = build_attention_graph(a, tokens(9), {}, 0.05);
  const auto r1 = force_layout(g, {}, 7);
  const auto r2 = force_layout(g, {}, 7);
  ASSERT_EQ(r1.positions.size(), 9u);
  double cx = 0.0, cy = 0.0;
  for (std::size_t k = 0; k < 9; ++k) {
    EXPECT_EQ(std::memcmp(&r1.positions[k], &r2.positions[k], sizeof(Point)), 0);
    EXPECT_TRUE(std::isfinite(r1.positions[k].x) && std::isfinite(r1.positions[k].y));
    cx += r1.positions[k].x;
    cy += r1.positions[k].y;
  }
  EXPECT_NEAR(cx, 0.0, 1e-9);
  EXPECT_NEAR(cy, 0.0, 1e-9);
  const auto r3 = force_layout(g, {}, 8);
  EXPECT_NE(r1.positions, r3.positions);
}

TEST(ForceLayout, EdgeOrderInvariantAndDistinct) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = dt::uniform_index(rng, 2, 14);
    auto g = build_attention_graph(dt::random_stochastic(n, rng), tokens(n), {}, 0.05);
    const auto base = force_layout(g, {}, 11);
    std::shuffle(g.edges.begin(), g.edges.end(), rng);
    EXPECT_EQ(force_layout(g, {}, 11).positions, base.positions);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) EXPECT_NE(base.positions[i], base.positions[j]);
  }
}

TEST(ForceLayout, IsolatedNodesStayBounded) {
  const auto r = force_layout(nodes_only(20), {}, 3);
  for (const auto& p : r.positions) EXPECT_LT(std::hypot(p.x, p.y), 50.0);
}

TEST(GridLayout, RowMajorFill) {
  const auto six = grid_layout(6, 3);
  ASSERT_EQ(six.positions.size(), 6u);
  EXPECT_EQ(six.positions[2], (Point{2, 0}));
  EXPECT_EQ(six.positions[3], (Point{0, 1}));
  EXPECT_EQ(six.bounds.max_y, 1.0);

  const auto five = grid_layout(5, 3);
  EXPECT_EQ(five.positions[4], (Point{1, 1}));
  EXPECT_EQ(five.bounds.max_x, 2.0);

  const auto one = grid_layout(1, 4);
  EXPECT_EQ(one.positions[0], (Point{0, 0}));
  EXPECT_THROW(grid_layout(3, 0), Error);
  EXPECT_EQ(default_grid_columns(10), 4u);
}

TEST(RadialLayout, Angles) {
  const auto four = radial_layout(4);
  const Point expect[] = {{0, -1}, {1, 0}, {0, 1}, {-1, 0}};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(four.positions[k].x, expect[k].x, 1e-15);
    EXPECT_NEAR(four.positions[k].y, expect[k].y, 1e-15);
    EXPECT_DOUBLE_EQ(radial_angle_degrees(k, 4), -90.0 + 90.0 * static_cast<double>(k));
  }
  const auto one = radial_layout(1);
  EXPECT_NEAR(one.positions[0].x, 0.0, 1e-15);
  EXPECT_NEAR(one.positions[0].y, -1.0, 1e-15);
}

TEST(RadialLayout, ConstantAngularGap) {
  for (std::size_t n = 2; n <= 40; ++n) {
    const auto r = radial_layout(n);
    const double gap = 2.0 * std::numbers::pi / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& a = r.positions[k];
      const auto& b = r.positions[(k + 1) % n];
      double d = std::atan2(b.y, b.x) - std::atan2(a.y, a.x);
      if (d < 0) d += 2.0 * std::numbers::pi;
      EXPECT_NEAR(d, gap, 1e-9) << n << " " << k;
      EXPECT_NEAR(std::hypot(a.x, a.y), 1.0, 1e-12);
    }
  }
}

TEST(PureGeometry, IndependentOfWeights) {
  std::mt19937_64 rng(34);
  const auto a = dt::random_stochastic(7, rng);
  EXPECT_EQ(radial_layout(7).positions, radial_layout(tokens(7)).positions);
  const auto g = build_attention_graph(a, tokens(7), {}, 0.0);
  (void)g;
  EXPECT_EQ(grid_layout(7, 3).positions, grid_layout(tokens(7), 3).positions);
}

TEST(ArcDiagram, HeightsAndOpacity) {
  const ArcParams p;
  const std::vector<GraphEdge> edges = {{2, 3, 0.4}, {0, 5, 0.8}, {5, 1, 0.0}};
  const auto geom = arc_diagram(6, edges, ArcSide::Above, p);
  ASSERT_EQ(geom.arcs.size(), 3u);
  EXPECT_EQ(geom.arcs[0].height, p.h_unit);
  EXPECT_EQ(geom.arcs[1].height, 5 * p.h_unit);
  EXPECT_EQ(geom.arcs[2].height, 4 * p.h_unit);
  EXPECT_EQ(geom.arcs[0].opacity, 0.5);
  EXPECT_EQ(geom.arcs[1].opacity, 1.0);
  EXPECT_EQ(geom.arcs[2].opacity, p.min_opacity);
  EXPECT_EQ(geom.arcs[2].start_x, 5.0);  // source end
  EXPECT_EQ(geom.arcs[2].end_x, 1.0);
  EXPECT_EQ(arc_diagram(6, edges, ArcSide::Below).arcs[0].side, ArcSide::Below);
  EXPECT_THROW(arc_diagram(3, edges, ArcSide::Above), Error);
}

TEST(ArcDiagram, HeightProportionalToDistance) {
  std::mt19937_64 rng(35);
  for (double unit : {0.5, 1.0, 1.0 / 7.0}) {
    ArcParams p;
    p.h_unit = unit;
    std::vector<GraphEdge> edges;
    for (int k = 0; k < 200; ++k)
      edges.push_back({dt::uniform_index(rng, 0, 39), dt::uniform_index(rng, 0, 39), dt::uniform01(rng)});
    const auto geom = arc_diagram(40, edges, ArcSide::Above, p);
    for (const auto& a : geom.arcs) {
      const double dist = std::abs(static_cast<double>(a.source) - static_cast<double>(a.target));
      EXPECT_EQ(a.height, unit * dist);
      EXPECT_GE(a.opacity, p.min_opacity);
      EXPECT_LE(a.opacity, 1.0);
    }
    for (const auto& a : geom.arcs)
      for (const auto& b : geom.arcs)
        if (a.weight < b.weight) {
          EXPECT_LE(a.opacity, b.opacity);
        }
  }
}

TEST(Normalize, AspectPreserved) {
  const std::vector<Point> pts = {{0, 0}, {4, 0}, {4, 2}};
  const auto n = normalize_positions(pts);
  EXPECT_EQ(n[0], (Point{-1, -0.5}));
  EXPECT_EQ(n[2], (Point{1, 0.5}));
  const std::vector<Point> same = {{3, 3}, {3, 3}};
  EXPECT_EQ(normalize_positions(same)[0], (Point{0, 0}));
}
