#pragma once

// Attention maps as graphs: edge thresholding, node placement (force, grid,
// radial) and arc-diagram geometry.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dodrio/error.hpp"
#include "dodrio/matrix.hpp"

namespace dodrio {

inline constexpr double kDefaultEdgeThreshold = 0.05;

struct GraphNode {
  std::size_t index = 0;
  std::string token;
  double saliency = 0.0;
};

struct GraphEdge {
  std::size_t source = 0;
  std::size_t target = 0;
  double weight = 0.0;

  friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

struct GraphSpec {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  double threshold = kDefaultEdgeThreshold;
};

/// Off-diagonal entries strictly above `threshold` become directed edges
/// carrying the raw attention weight. Edges are emitted in row-major order.
template <MatrixLike M>
std::vector<GraphEdge> threshold_edges(const M& attention, double threshold) {
  require_square(attention, "threshold_edges");
  std::vector<GraphEdge> edges;
  for (std::size_t i = 0; i < attention.rows(); ++i)
    for (std::size_t j = 0; j < attention.cols(); ++j)
      if (i != j && attention(i, j) > threshold) edges.push_back({i, j, attention(i, j)});
  return edges;
}

template <MatrixLike M>
GraphSpec build_attention_graph(const M& attention, std::span<const std::string> tokens,
                                std::span<const double> saliency,
                                double threshold = kDefaultEdgeThreshold) {
  require_square(attention, "build_attention_graph");
  const std::size_t n = attention.rows();
  if (tokens.size() != n)
    throw Error(ErrorCode::LengthMismatch, "token count does not match attention size");
  if (!saliency.empty() && saliency.size() != n)
    throw Error(ErrorCode::LengthMismatch, "saliency count does not match attention size");
  GraphSpec g;
  g.threshold = threshold;
  g.nodes.reserve(n);
  for (std::size_t k = 0; k < n; ++k)
    g.nodes.push_back({k, tokens[k], saliency.empty() ? 0.0 : saliency[k]});
  g.edges = threshold_edges(attention, threshold);
  return g;
}

//----------------------------------------------------------------------------
// Node placement

enum class LayoutKind { Force, Grid, Radial };

constexpr std::string_view layout_kind_name(LayoutKind kind) {
  switch (kind) {
    case LayoutKind::Force: return "force";
    case LayoutKind::Grid: return "grid";
    case LayoutKind::Radial: return "radial";
  }
  return "force";
}

inline LayoutKind parse_layout_kind(std::string_view name) {
  if (name == "force") return LayoutKind::Force;
  if (name == "grid") return LayoutKind::Grid;
  if (name == "radial") return LayoutKind::Radial;
  throw Error(ErrorCode::BadSelector, "unknown layout kind '" + std::string(name) + "'");
}

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Bounds {
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
};

struct LayoutResult {
  std::vector<Point> positions;
  Bounds bounds;
  LayoutKind kind = LayoutKind::Force;
};

inline Bounds bounds_of(std::span<const Point> points) {
  if (points.empty()) return {};
  Bounds b{points[0].x, points[0].y, points[0].x, points[0].y};
  for (const auto& p : points) {
    b.min_x = std::min(b.min_x, p.x);
    b.max_x = std::max(b.max_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

/// Maps points into [-1, 1]^2 about their bounding-box center with one
/// common scale factor, so the aspect ratio survives.
inline std::vector<Point> normalize_positions(std::span<const Point> points) {
  const Bounds b = bounds_of(points);
  const double cx = 0.5 * (b.min_x + b.max_x);
  const double cy = 0.5 * (b.min_y + b.max_y);
  const double half = 0.5 * std::max(b.max_x - b.min_x, b.max_y - b.min_y);
  std::vector<Point> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (half > 0.0)
      out.push_back({(p.x - cx) / half, (p.y - cy) / half});
    else
      out.push_back({0.0, 0.0});
  }
  return out;
}

struct ForceParams {
  double ideal_distance = 1.0;
  std::size_t iterations = 300;
  // Cap on per-node displacement in the first iteration; decays linearly to 0.
  double initial_temperature = 1.0;
  // Pull toward the centroid, proportional to distance. Keeps nodes that are
  // not connected to anything from drifting away.
  double gravity = 0.1;
};

namespace detail {

// Uniform double in [0, 1) from the top 53 bits; stable across standard
// library implementations, unlike std::uniform_real_distribution.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// Fruchterman-Reingold spring embedder. Attraction along an edge is
/// w * d^2 / k with w the attention weight divided by the largest weight in
/// the graph; repulsion between every pair is k^2 / d. Deterministic for a
/// fixed (graph, params, seed), independent of edge order.
inline LayoutResult force_layout(const GraphSpec& graph, const ForceParams& params = {},
                                 std::uint64_t seed = 0) {
  const std::size_t n = graph.nodes.size();
  LayoutResult result;
  result.kind = LayoutKind::Force;
  if (n == 0) return result;

  std::mt19937_64 rng(seed);
  std::vector<Point> pos(n);
  for (auto& p : pos) {
    p.x = detail::unit_uniform(rng);
    p.y = detail::unit_uniform(rng);
  }

  std::vector<GraphEdge> edges;
  double max_weight = 0.0;
  for (const auto& e : graph.edges) {
    if (e.source == e.target || e.source >= n || e.target >= n) continue;
    edges.push_back(e);
    max_weight = std::max(max_weight, e.weight);
  }
  std::sort(edges.begin(), edges.end(), [](const GraphEdge& a, const GraphEdge& b) {
    if (a.source != b.source) return a.source < b.source;
    if (a.target != b.target) return a.target < b.target;
    return a.weight < b.weight;
  });

  const double k = params.ideal_distance;
  const double k2 = k * k;
  std::vector<Point> disp(n);
  for (std::size_t iter = 0; iter < params.iterations; ++iter) {
    const double temp = params.initial_temperature *
                        (1.0 - static_cast<double>(iter) / static_cast<double>(params.iterations));
    std::fill(disp.begin(), disp.end(), Point{});

    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double dx = pos[i].x - pos[j].x;
        double dy = pos[i].y - pos[j].y;
        double d = std::hypot(dx, dy);
        if (d < 1e-9) {
          // Coincident nodes: push apart along a direction fixed by the pair.
          const double angle = static_cast<double>(i * 7 + j * 13);
          dx = 1e-6 * std::cos(angle);
          dy = 1e-6 * std::sin(angle);
          d = 1e-6;
        }
        const double f = k2 / d;
        disp[i].x += dx / d * f;
        disp[i].y += dy / d * f;
        disp[j].x -= dx / d * f;
        disp[j].y -= dy / d * f;
      }
    }

    if (max_weight > 0.0) {
      for (const auto& e : edges) {
        const double dx = pos[e.source].x - pos[e.target].x;
        const double dy = pos[e.source].y - pos[e.target].y;
        const double d = std::hypot(dx, dy);
        if (d < 1e-12) continue;
        const double f = (e.weight / max_weight) * d * d / k;
        disp[e.source].x -= dx / d * f;
        disp[e.source].y -= dy / d * f;
        disp[e.target].x += dx / d * f;
        disp[e.target].y += dy / d * f;
      }
    }

    Point centroid{};
    for (const auto& p : pos) {
      centroid.x += p.x;
      centroid.y += p.y;
    }
    centroid.x /= static_cast<double>(n);
    centroid.y /= static_cast<double>(n);

    for (std::size_t i = 0; i < n; ++i) {
      disp[i].x -= params.gravity * (pos[i].x - centroid.x);
      disp[i].y -= params.gravity * (pos[i].y - centroid.y);
      const double len = std::hypot(disp[i].x, disp[i].y);
      if (len <= 0.0) continue;
      const double step = std::min(len, temp);
      pos[i].x += disp[i].x / len * step;
      pos[i].y += disp[i].y / len * step;
    }
  }

  Point centroid{};
  for (const auto& p : pos) {
    centroid.x += p.x;
    centroid.y += p.y;
  }
  centroid.x /= static_cast<double>(n);
  centroid.y /= static_cast<double>(n);
  for (auto& p : pos) {
    p.x -= centroid.x;
    p.y -= centroid.y;
  }
  if (n == 1) pos[0] = {0.0, 0.0};

  result.positions = std::move(pos);
  result.bounds = bounds_of(result.positions);
  return result;
}

/// Row-major grid in reading order with unit spacing; token 0 at the origin,
/// y grows downward.
inline LayoutResult grid_layout(std::size_t count, std::size_t columns, double spacing = 1.0) {
  if (columns == 0) throw Error(ErrorCode::BadSelector, "grid layout needs at least one column");
  LayoutResult result;
  result.kind = LayoutKind::Grid;
  result.positions.reserve(count);
  for (std::size_t k = 0; k < count; ++k)
    result.positions.push_back({static_cast<double>(k % columns) * spacing,
                                static_cast<double>(k / columns) * spacing});
  result.bounds = bounds_of(result.positions);
  return result;
}

inline LayoutResult grid_layout(std::span<const std::string> tokens, std::size_t columns) {
  return grid_layout(tokens.size(), columns);
}

/// Column count used when callers do not pick one: near-square grid.
inline std::size_t default_grid_columns(std::size_t count) {
  if (count == 0) return 1;
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(count))));
}

inline double radial_angle_degrees(std::size_t k, std::size_t count) {
  return -90.0 + static_cast<double>(k) * 360.0 / static_cast<double>(count);
}

/// Unit circle in screen coordinates (y down): token 0 at the top, order
/// proceeds clockwise.
inline LayoutResult radial_layout(std::size_t count) {
  LayoutResult result;
  result.kind = LayoutKind::Radial;
  result.positions.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double rad = radial_angle_degrees(k, count) * std::numbers::pi / 180.0;
    result.positions.push_back({std::cos(rad), std::sin(rad)});
  }
  result.bounds = bounds_of(result.positions);
  return result;
}

inline LayoutResult radial_layout(std::span<const std::string> tokens) {
  return radial_layout(tokens.size());
}

//----------------------------------------------------------------------------
// Arc diagrams

enum class ArcSide { Above, Below };

constexpr std::string_view arc_side_name(ArcSide side) {
  return side == ArcSide::Above ? "above" : "below";
}

struct ArcParams {
  double x_unit = 1.0;
  double h_unit = 0.5;
  double min_opacity = 0.15;
};

struct Arc {
  std::size_t source = 0;
  std::size_t target = 0;
  double start_x = 0.0;  // source end; rendered lighter
  double end_x = 0.0;    // target end; rendered darker
  double height = 0.0;
  ArcSide side = ArcSide::Above;
  double weight = 0.0;
  double opacity = 1.0;
};

struct ArcGeometry {
  std::vector<Arc> arcs;
  ArcSide side = ArcSide::Above;
};

/// Token k sits at x = k * x_unit. Height grows linearly with index distance;
/// opacity is weight relative to the heaviest edge, floored at min_opacity.
inline ArcGeometry arc_diagram(std::size_t token_count, std::span<const GraphEdge> edges,
                               ArcSide side, const ArcParams& params = {}) {
  ArcGeometry geom;
  geom.side = side;
  double reference = 0.0;
  for (const auto& e : edges) {
    if (e.source >= token_count || e.target >= token_count)
      throw Error(ErrorCode::LengthMismatch, "arc endpoint outside token range");
    reference = std::max(reference, e.weight);
  }
  geom.arcs.reserve(edges.size());
  for (const auto& e : edges) {
    Arc a;
    a.source = e.source;
    a.target = e.target;
    a.start_x = static_cast<double>(e.source) * params.x_unit;
    a.end_x = static_cast<double>(e.target) * params.x_unit;
    const std::size_t span = e.source > e.target ? e.source - e.target : e.target - e.source;
    a.height = params.h_unit * static_cast<double>(span);
    a.side = side;
    a.weight = e.weight;
    a.opacity = reference > 0.0 ? std::clamp(e.weight / reference, params.min_opacity, 1.0)
                                : params.min_opacity;
    geom.arcs.push_back(a);
  }
  return geom;
}

}  // namespace dodrio
