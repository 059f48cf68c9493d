#pragma once

// JSON payloads shared by the HTTP service and `dodrio export`, plus a
// transport-free router so every endpoint is testable without a socket.

#include <charconv>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dodrio/bundle.hpp"
#include "dodrio/dependency.hpp"
#include "dodrio/head_analytics.hpp"
#include "dodrio/layout.hpp"
#include "dodrio/projection.hpp"

namespace dodrio {

using nlohmann::json;

inline constexpr std::uint64_t kForceSeed = 42;

//----------------------------------------------------------------------------
// Serializers

inline json color_json(const ColorEncoding& c) {
  return {{"hue", c.hue},
          {"chroma", c.chroma},
          {"luminance", c.luminance},
          {"radius", c.radius},
          {"rgb", {c.rgb.r, c.rgb.g, c.rgb.b}},
          {"hex", to_hex(c.rgb)}};
}

inline json card_json(const HeadScoreCard& card, const ScaleConfig& scale) {
  json j = {{"layer", card.layer},
            {"head", card.head},
            {"semantic", card.semantic},
            {"syntactic", card.syntactic},
            {"importance", card.importance},
            {"relation_accuracy", card.relation_accuracy},
            {"color", color_json(encode_color(card, scale))}};
  if (card.best_relation)
    j["best_relation"] = {{"relation", card.best_relation->first},
                          {"accuracy", card.best_relation->second}};
  else
    j["best_relation"] = nullptr;
  return j;
}

inline json heads_json(const HeadScores& scores, const ScaleConfig& scale) {
  json arr = json::array();
  for (const auto& card : scores.cards) arr.push_back(card_json(card, scale));
  return arr;
}

inline json relation_rows_json(const RelationAccuracyTable::Row& row) {
  json arr = json::array();
  for (const auto& [label, acc] : row)
    arr.push_back({{"relation", label},
                   {"accuracy", acc.accuracy},
                   {"support", acc.support},
                   {"correct", acc.correct},
                   {"instances", acc.instances}});
  return arr;
}

inline json head_detail_json(const HeadScores& scores, std::size_t layer, std::size_t head,
                             const ScaleConfig& scale) {
  const auto& table = scores.relations;
  const auto& card = scores.cards.at(layer * table.heads() + head);
  json j = card_json(card, scale);
  j["relations"] = relation_rows_json(table.row(layer, head));
  return j;
}

inline json relation_table_json(const RelationAccuracyTable& table) {
  json arr = json::array();
  for (std::size_t l = 0; l < table.layers(); ++l)
    for (std::size_t h = 0; h < table.heads(); ++h)
      arr.push_back({{"layer", l}, {"head", h}, {"relations", relation_rows_json(table.row(l, h))}});
  return arr;
}

inline json model_json(const ModelMeta& m) {
  return {{"name", m.name}, {"num_layers", m.num_layers}, {"num_heads", m.num_heads}};
}

/// Contents of `dodrio score` output.
inline json score_file_json(const CorpusBundle& bundle, const HeadScores& scores,
                            const ScaleConfig& scale) {
  return {{"model", model_json(bundle.model)},
          {"dataset", bundle.dataset_name},
          {"instance_count", bundle.instances.size()},
          {"cards", heads_json(scores, scale)},
          {"relation_table", relation_table_json(scores.relations)},
          {"skipped_instances", scores.skipped_instances}};
}

inline json instance_rows_json(const CorpusBundle& bundle) {
  json arr = json::array();
  for (const auto& inst : bundle.instances)
    arr.push_back({{"id", inst.id},
                   {"text", inst.text()},
                   {"label", inst.label},
                   {"prediction", inst.prediction}});
  return arr;
}

inline ArcParams normalized_arc_params(std::size_t token_count) {
  ArcParams p;
  p.x_unit = token_count > 1 ? 1.0 / static_cast<double>(token_count - 1) : 1.0;
  p.h_unit = 0.5 * p.x_unit;
  return p;
}

inline json arc_json(const Arc& a) {
  return {{"source", a.source},   {"target", a.target}, {"start_x", a.start_x},
          {"end_x", a.end_x},     {"height", a.height}, {"side", arc_side_name(a.side)},
          {"weight", a.weight},   {"opacity", a.opacity}};
}

inline json gold_arcs_json(const InstanceRecord& inst) {
  const auto gold = gold_arcs(inst);
  std::vector<GraphEdge> edges;
  for (const auto& g : gold) edges.push_back({g.source, g.target, 1.0});
  const auto geom = arc_diagram(inst.size(), edges, ArcSide::Above,
                                normalized_arc_params(inst.size()));
  json arr = json::array();
  for (std::size_t k = 0; k < gold.size(); ++k) {
    json a = arc_json(geom.arcs[k]);
    a["relation"] = gold[k].relation;
    arr.push_back(std::move(a));
  }
  return arr;
}

inline json instance_json(const InstanceRecord& inst) {
  json j = {{"id", inst.id},
            {"tokens", inst.tokens},
            {"text", inst.text()},
            {"label", inst.label},
            {"prediction", inst.prediction},
            {"saliency", inst.saliency},
            {"dependency",
             {{"heads", inst.dependency.heads},
              {"relations", inst.dependency.relations},
              {"root_index", inst.dependency.root_index}}},
            {"gold_arcs", gold_arcs_json(inst)}};
  return j;
}

inline json attention_json(const InstanceRecord& inst, const AttentionTensor& tensor,
                           std::size_t layer, std::size_t head) {
  const auto m = tensor.head(layer, head);
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (float v : m.row(i)) row.push_back(static_cast<double>(v));
    rows.push_back(std::move(row));
  }
  return {{"instance", inst.id}, {"layer", layer}, {"head", head},
          {"tokens", inst.tokens}, {"matrix", std::move(rows)}};
}

struct LayoutQuery {
  std::size_t layer = 0;
  std::size_t head = 0;
  LayoutKind kind = LayoutKind::Force;
  double threshold = kDefaultEdgeThreshold;

  friend auto operator<=>(const LayoutQuery&, const LayoutQuery&) = default;
};

inline json layout_json(const InstanceRecord& inst, const AttentionTensor& tensor,
                        const LayoutQuery& q) {
  const auto graph =
      build_attention_graph(tensor.head(q.layer, q.head), inst.tokens, inst.saliency, q.threshold);
  LayoutResult layout;
  switch (q.kind) {
    case LayoutKind::Force: layout = force_layout(graph, {}, kForceSeed); break;
    case LayoutKind::Grid: layout = grid_layout(inst.size(), default_grid_columns(inst.size())); break;
    case LayoutKind::Radial: layout = radial_layout(inst.size()); break;
  }
  const auto norm = normalize_positions(layout.positions);

  double max_saliency = 0.0;
  for (double s : inst.saliency) max_saliency = std::max(max_saliency, s);

  json nodes = json::array();
  for (std::size_t k = 0; k < graph.nodes.size(); ++k) {
    const auto& node = graph.nodes[k];
    nodes.push_back({{"index", node.index},
                     {"token", node.token},
                     {"saliency", node.saliency},
                     {"saliency_norm", max_saliency > 0.0 ? node.saliency / max_saliency : 0.0},
                     {"x", norm[k].x},
                     {"y", norm[k].y}});
  }
  double max_weight = 0.0;
  for (const auto& e : graph.edges) max_weight = std::max(max_weight, e.weight);
  const ArcParams opacity_rule;
  json edges = json::array();
  for (const auto& e : graph.edges)
    edges.push_back({{"source", e.source},
                     {"target", e.target},
                     {"weight", e.weight},
                     {"opacity", max_weight > 0.0 ? std::clamp(e.weight / max_weight,
                                                               opacity_rule.min_opacity, 1.0)
                                                  : opacity_rule.min_opacity}});
  return {{"instance", inst.id},
          {"layer", q.layer},
          {"head", q.head},
          {"kind", layout_kind_name(q.kind)},
          {"threshold", q.threshold},
          {"nodes", std::move(nodes)},
          {"edges", std::move(edges)},
          {"bounds",
           {{"min_x", layout.bounds.min_x},
            {"min_y", layout.bounds.min_y},
            {"max_x", layout.bounds.max_x},
            {"max_y", layout.bounds.max_y}}}};
}

inline json comparison_json(const ComparisonPayload& p) {
  const std::size_t n = p.tokens.size();
  const auto params = normalized_arc_params(n);
  json gold = json::array();
  {
    std::vector<GraphEdge> edges;
    for (const auto& g : p.gold) edges.push_back({g.source, g.target, 1.0});
    const auto geom = arc_diagram(n, edges, ArcSide::Above, params);
    for (std::size_t k = 0; k < p.gold.size(); ++k) {
      json a = arc_json(geom.arcs[k]);
      a["relation"] = p.gold[k].relation;
      gold.push_back(std::move(a));
    }
  }
  json rows = json::array();
  for (const auto& row : p.rows) {
    const auto above = arc_diagram(n, row.attention, ArcSide::Above, params);
    json attention = json::array();
    for (const auto& a : above.arcs) attention.push_back(arc_json(a));

    std::vector<GraphEdge> pred_edges;
    for (const auto& pa : row.predicted) pred_edges.push_back({pa.source, pa.target, 1.0});
    const auto below = arc_diagram(n, pred_edges, ArcSide::Below, params);
    json predicted = json::array();
    for (std::size_t k = 0; k < row.predicted.size(); ++k) {
      json a = arc_json(below.arcs[k]);
      a["correct"] = row.predicted[k].correct;
      a["relation"] = row.predicted[k].gold_relation;
      predicted.push_back(std::move(a));
    }
    rows.push_back({{"layer", row.head.layer},
                    {"head", row.head.head},
                    {"attention", std::move(attention)},
                    {"predicted", std::move(predicted)}});
  }
  return {{"instance", p.instance_id},
          {"tokens", p.tokens},
          {"threshold", p.threshold},
          {"gold", std::move(gold)},
          {"rows", std::move(rows)}};
}

inline json projection_json(const CorpusBundle& bundle, const ProjectionResult& proj) {
  const auto norm = normalize_positions(proj.coords);
  json points = json::array();
  for (std::size_t k = 0; k < proj.coords.size(); ++k) {
    const auto& inst = bundle.instances[k];
    points.push_back({{"id", inst.id},
                      {"label", inst.label},
                      {"prediction", inst.prediction},
                      {"text", inst.text()},
                      {"x", norm[k].x},
                      {"y", norm[k].y},
                      {"raw_x", proj.coords[k].x},
                      {"raw_y", proj.coords[k].y}});
  }
  json j = {{"method", projection_method_name(proj.method)}, {"points", std::move(points)}};
  if (proj.explained_variance)
    j["explained_variance"] = {(*proj.explained_variance)[0], (*proj.explained_variance)[1]};
  else
    j["explained_variance"] = nullptr;
  return j;
}

inline json error_json(std::string_view code, std::string_view message, std::string_view detail) {
  return {{"code", code}, {"message", message}, {"detail", detail}};
}

//----------------------------------------------------------------------------
// Router

struct ApiResponse {
  int status = 200;
  std::string body;
};

using QueryParams = std::multimap<std::string, std::string>;

/// Everything the read-only API needs, computed once at startup. Only the
/// layout cache mutates afterwards.
class ServerState {
 public:
  explicit ServerState(CorpusBundle bundle, ScaleConfig scale = {})
      : bundle_(std::move(bundle)), scale_(scale) {
    tensors_ = load_all_attention(bundle_);
    scores_ = score_all_heads(bundle_, tensors_);
    try {
      projection_ = project_instances(bundle_);
    } catch (const Error& e) {
      projection_error_ = e;
    }
    heads_body_ = heads_json(scores_, scale_).dump();
  }

  const CorpusBundle& bundle() const noexcept { return bundle_; }
  const HeadScores& scores() const noexcept { return scores_; }
  const ScaleConfig& scale() const noexcept { return scale_; }
  const std::optional<ProjectionResult>& projection() const noexcept { return projection_; }
  const std::optional<Error>& projection_error() const noexcept { return projection_error_; }
  const std::string& heads_body() const noexcept { return heads_body_; }

  const AttentionTensor& tensor(std::string_view id) const {
    for (std::size_t k = 0; k < bundle_.instances.size(); ++k)
      if (bundle_.instances[k].id == id) return tensors_[k];
    throw Error(ErrorCode::UnknownInstance, "no instance with id '" + std::string(id) + "'");
  }

  void check_head(std::size_t layer, std::size_t head) const {
    if (layer >= bundle_.model.num_layers || head >= bundle_.model.num_heads)
      throw Error(ErrorCode::UnknownHead, "l" + std::to_string(layer) + "h" +
                                              std::to_string(head) + " is not in the model");
  }

  std::string layout_body(std::string_view id, const LayoutQuery& q) const {
    const auto& inst = bundle_.instance(id);
    check_head(q.layer, q.head);
    CacheKey key{std::string(id), q};
    {
      std::lock_guard lock(cache_mutex_);
      if (auto it = layout_cache_.find(key); it != layout_cache_.end()) return it->second;
    }
    std::string body = layout_json(inst, tensor(id), q).dump();
    std::lock_guard lock(cache_mutex_);
    layout_cache_[key] = body;
    return body;
  }

  std::size_t cached_layouts() const {
    std::lock_guard lock(cache_mutex_);
    return layout_cache_.size();
  }

  void clear_cache() {
    std::lock_guard lock(cache_mutex_);
    layout_cache_.clear();
  }

 private:
  using CacheKey = std::tuple<std::string, LayoutQuery>;

  CorpusBundle bundle_;
  ScaleConfig scale_;
  std::vector<AttentionTensor> tensors_;
  HeadScores scores_;
  std::optional<ProjectionResult> projection_;
  std::optional<Error> projection_error_;
  std::string heads_body_;

  mutable std::mutex cache_mutex_;
  mutable std::map<CacheKey, std::string> layout_cache_;
};

namespace detail {

inline std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (pos < path.size()) {
    if (path[pos] == '/') {
      ++pos;
      continue;
    }
    const std::size_t end = path.find('/', pos);
    parts.push_back(path.substr(pos, end == path.npos ? path.npos : end - pos));
    if (end == path.npos) break;
    pos = end;
  }
  return parts;
}

inline std::size_t parse_index(std::string_view text, std::string_view what) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc{} || ptr != end)
    throw Error(ErrorCode::BadSelector, std::string(what) + " must be a non-negative integer");
  return value;
}

inline double parse_threshold(const std::string& text) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    throw Error(ErrorCode::BadSelector, "threshold must be a number");
  }
  if (used != text.size() || !(value >= 0.0 && value < 1.0))
    throw Error(ErrorCode::BadSelector, "threshold must lie in [0, 1)");
  return value;
}

inline std::optional<std::string> param(const QueryParams& q, const std::string& key) {
  if (auto it = q.find(key); it != q.end()) return it->second;
  return std::nullopt;
}

inline int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownInstance:
    case ErrorCode::UnknownHead: return 404;
    case ErrorCode::BadSelector: return 400;
    case ErrorCode::MixedProjectionSources:
    case ErrorCode::MissingEmbeddings: return 422;
    default: return 500;
  }
}

}  // namespace detail

inline LayoutQuery parse_layout_query(const QueryParams& q) {
  LayoutQuery out;
  const auto layer = detail::param(q, "layer");
  const auto head = detail::param(q, "head");
  if (!layer || !head) throw Error(ErrorCode::BadSelector, "layout needs layer and head");
  out.layer = detail::parse_index(*layer, "layer");
  out.head = detail::parse_index(*head, "head");
  if (auto kind = detail::param(q, "kind")) out.kind = parse_layout_kind(*kind);
  if (auto t = detail::param(q, "threshold")) out.threshold = detail::parse_threshold(*t);
  return out;
}

inline json projection_body(const ServerState& state) {
  if (state.projection_error()) throw *state.projection_error();
  return projection_json(state.bundle(), *state.projection());
}

inline json comparison_body(const ServerState& state, std::string_view id,
                            const QueryParams& q) {
  const auto& inst = state.bundle().instance(id);
  const auto heads_text = detail::param(q, "heads");
  if (!heads_text) throw Error(ErrorCode::BadSelector, "comparison needs heads=l0h1,...");
  const auto heads = parse_head_list(*heads_text);
  double threshold = kDefaultEdgeThreshold;
  if (auto t = detail::param(q, "threshold")) threshold = detail::parse_threshold(*t);
  for (const auto& ref : heads) state.check_head(ref.layer, ref.head);

  ComparisonPayload payload;
  payload.instance_id = inst.id;
  payload.tokens = inst.tokens;
  payload.gold = gold_arcs(inst);
  payload.threshold = threshold;
  const auto& tensor = state.tensor(id);
  for (const auto& ref : heads) payload.rows.push_back(comparison_row(inst, tensor, ref, threshold));
  return comparison_json(payload);
}

inline json meta_body(const ServerState& state) {
  const auto& b = state.bundle();
  const auto& s = state.scale();
  return {{"model", model_json(b.model)},
          {"dataset", {{"name", b.dataset_name}, {"labels", b.label_set}}},
          {"instance_count", b.instances.size()},
          {"head_count", b.model.head_count()},
          {"default_threshold", kDefaultEdgeThreshold},
          {"skipped_instances", state.scores().skipped_instances},
          {"scales",
           {{"hue_blue", s.hue_blue},
            {"hue_red", s.hue_red},
            {"chroma", s.chroma},
            {"luminance_dark", s.luminance_dark},
            {"luminance_light", s.luminance_light},
            {"radius_min", s.radius_min},
            {"radius_max", s.radius_max}}}};
}

/// Routes a GET under /api. Identical (path, query) always yields identical
/// bytes.
inline ApiResponse handle_get(const ServerState& state, std::string_view path,
                              const QueryParams& query = {}) {
  const auto ok = [](std::string body) { return ApiResponse{200, std::move(body)}; };
  try {
    const auto parts = detail::split_path(path);
    if (parts.size() < 2 || parts[0] != "api")
      return {404, error_json("NOT_FOUND", "no such endpoint", path).dump()};

    if (parts[1] == "meta" && parts.size() == 2) return ok(meta_body(state).dump());
    if (parts[1] == "heads") {
      if (parts.size() == 2) return ok(state.heads_body());
      if (parts.size() == 4) {
        const auto layer = detail::parse_index(parts[2], "layer");
        const auto head = detail::parse_index(parts[3], "head");
        state.check_head(layer, head);
        return ok(head_detail_json(state.scores(), layer, head, state.scale()).dump());
      }
    }
    if (parts[1] == "projection" && parts.size() == 2) return ok(projection_body(state).dump());
    if (parts[1] == "instances") {
      if (parts.size() == 2) return ok(instance_rows_json(state.bundle()).dump());
      const std::string id(parts[2]);
      if (parts.size() == 3) return ok(instance_json(state.bundle().instance(id)).dump());
      if (parts.size() == 6 && parts[3] == "attention") {
        const auto& inst = state.bundle().instance(id);
        const auto layer = detail::parse_index(parts[4], "layer");
        const auto head = detail::parse_index(parts[5], "head");
        state.check_head(layer, head);
        return ok(attention_json(inst, state.tensor(id), layer, head).dump());
      }
      if (parts.size() == 4 && parts[3] == "layout") {
        state.bundle().instance(id);
        return ok(state.layout_body(id, parse_layout_query(query)));
      }
      if (parts.size() == 4 && parts[3] == "comparison")
        return ok(comparison_body(state, id, query).dump());
    }
    return {404, error_json("NOT_FOUND", "no such endpoint", path).dump()};
  } catch (const Error& e) {
    return {detail::status_for(e.code()),
            error_json(code_name(e.code()), e.what(), e.detail()).dump()};
  }
}

}  // namespace dodrio
