#pragma once

// Dependency structure from attention: each token's most-attended other token
// is its predicted syntactic head, scored per gold relation label.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dodrio/bundle.hpp"
#include "dodrio/layout.hpp"
#include "dodrio/matrix.hpp"

namespace dodrio {

struct DependencyPrediction {
  std::vector<std::size_t> predicted_heads;
  // Filled by score_prediction(); false for the root token.
  std::vector<bool> correct;
};

/// Argmax over j != i of a(i, j), lowest index on ties.
template <MatrixLike M>
DependencyPrediction predict_heads(const M& attention) {
  require_square(attention, "predict_heads");
  const std::size_t n = attention.rows();
  if (n < 2) throw Error(ErrorCode::TooShort, "dependency prediction needs at least 2 tokens");
  DependencyPrediction pred;
  pred.predicted_heads.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = i == 0 ? 1 : 0;
    double best_value = attention(i, best);
    for (std::size_t j = best + 1; j < n; ++j) {
      if (j == i) continue;
      const double v = attention(i, j);
      if (v > best_value) {
        best = j;
        best_value = v;
      }
    }
    pred.predicted_heads[i] = best;
  }
  return pred;
}

struct RelationTally {
  std::size_t correct = 0;
  std::size_t support = 0;
  friend bool operator==(const RelationTally&, const RelationTally&) = default;
};

struct ScoredPrediction {
  DependencyPrediction prediction;
  std::map<std::string, RelationTally> tallies;
};

inline ScoredPrediction score_prediction(DependencyPrediction pred, const DependencyParse& gold) {
  const std::size_t n = pred.predicted_heads.size();
  if (gold.heads.size() != n || gold.relations.size() != n)
    throw Error(ErrorCode::LengthMismatch, "prediction covers " + std::to_string(n) +
                                               " tokens, gold parse " +
                                               std::to_string(gold.heads.size()));
  ScoredPrediction out;
  pred.correct.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == gold.root_index) continue;
    const bool hit = pred.predicted_heads[i] == gold.heads[i];
    pred.correct[i] = hit;
    auto& t = out.tallies[gold.relations[i]];
    ++t.support;
    if (hit) ++t.correct;
  }
  out.prediction = std::move(pred);
  return out;
}

struct RelationAccuracy {
  double accuracy = 0.0;       // mean of per-instance accuracies
  std::size_t support = 0;     // tokens carrying this relation, summed over instances
  std::size_t correct = 0;     // correctly predicted tokens, summed over instances
  std::size_t instances = 0;   // instances in which the relation occurs
};

class RelationAccuracyTable {
 public:
  using Row = std::map<std::string, RelationAccuracy>;

  RelationAccuracyTable() = default;
  RelationAccuracyTable(std::size_t layers, std::size_t heads)
      : layers_(layers), heads_(heads), rows_(layers * heads) {}

  std::size_t layers() const noexcept { return layers_; }
  std::size_t heads() const noexcept { return heads_; }

  const Row& row(std::size_t layer, std::size_t head) const { return rows_.at(index(layer, head)); }
  Row& row(std::size_t layer, std::size_t head) { return rows_.at(index(layer, head)); }

  /// Highest-accuracy relation; ties go to the alphabetically first label.
  std::optional<std::pair<std::string, double>> best(std::size_t layer, std::size_t head) const {
    std::optional<std::pair<std::string, double>> out;
    for (const auto& [label, acc] : row(layer, head))
      if (!out || acc.accuracy > out->second) out = std::make_pair(label, acc.accuracy);
    return out;
  }

 private:
  std::size_t index(std::size_t layer, std::size_t head) const {
    if (layer >= layers_ || head >= heads_)
      throw Error(ErrorCode::UnknownHead, "layer " + std::to_string(layer) + " head " +
                                              std::to_string(head) + " out of range");
    return layer * heads_ + head;
  }

  std::size_t layers_ = 0;
  std::size_t heads_ = 0;
  std::vector<Row> rows_;
};

/// Word-level tensors for every instance, in bundle order.
inline std::vector<AttentionTensor> load_all_attention(const CorpusBundle& bundle) {
  std::vector<AttentionTensor> out;
  out.reserve(bundle.instances.size());
  for (const auto& inst : bundle.instances) out.push_back(load_attention(bundle, inst));
  return out;
}

/// Per (layer, head, relation): per-instance accuracy over tokens with that
/// gold relation, averaged over the instances where the relation occurs.
inline RelationAccuracyTable relation_table(const CorpusBundle& bundle,
                                            const std::vector<AttentionTensor>& tensors) {
  if (bundle.instances.empty()) throw Error(ErrorCode::EmptyCorpus, "bundle has no instances");
  const std::size_t L = bundle.model.num_layers;
  const std::size_t H = bundle.model.num_heads;
  RelationAccuracyTable table(L, H);
  // Sum of per-instance accuracies, accumulated in instance order.
  std::vector<std::map<std::string, double>> sums(L * H);

  for (std::size_t k = 0; k < bundle.instances.size(); ++k) {
    const auto& inst = bundle.instances[k];
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t h = 0; h < H; ++h) {
        auto scored = score_prediction(predict_heads(tensors[k].head(l, h)), inst.dependency);
        auto& row = table.row(l, h);
        for (const auto& [label, t] : scored.tallies) {
          auto& acc = row[label];
          acc.support += t.support;
          acc.correct += t.correct;
          ++acc.instances;
          sums[l * H + h][label] +=
              static_cast<double>(t.correct) / static_cast<double>(t.support);
        }
      }
    }
  }
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t h = 0; h < H; ++h)
      for (auto& [label, acc] : table.row(l, h))
        acc.accuracy = sums[l * H + h][label] / static_cast<double>(acc.instances);
  return table;
}

inline RelationAccuracyTable relation_table(const CorpusBundle& bundle) {
  return relation_table(bundle, load_all_attention(bundle));
}

//----------------------------------------------------------------------------
// Comparison view

struct HeadRef {
  std::size_t layer = 0;
  std::size_t head = 0;
  friend auto operator<=>(const HeadRef&, const HeadRef&) = default;
};

/// Parses "l0h1,l2h3" style lists.
inline std::vector<HeadRef> parse_head_list(std::string_view text) {
  std::vector<HeadRef> out;
  if (text.empty()) return out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const auto item = text.substr(pos, comma == std::string_view::npos ? text.npos : comma - pos);
    if (item.empty()) throw Error(ErrorCode::BadSelector, "empty head selector in list");
    const auto hpos = item.find('h');
    if (item.size() < 4 || item[0] != 'l' || hpos == std::string_view::npos || hpos < 2 ||
        hpos + 1 >= item.size())
      throw Error(ErrorCode::BadSelector, "bad head selector '" + std::string(item) + "'");
    const auto digits = [&](std::string_view s) {
      std::size_t v = 0;
      for (char c : s) {
        if (c < '0' || c > '9')
          throw Error(ErrorCode::BadSelector, "bad head selector '" + std::string(item) + "'");
        v = v * 10 + static_cast<std::size_t>(c - '0');
      }
      return v;
    };
    out.push_back({digits(item.substr(1, hpos - 1)), digits(item.substr(hpos + 1))});
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

struct GoldArc {
  std::size_t source = 0;  // dependent
  std::size_t target = 0;  // syntactic head
  std::string relation;
};

struct PredictedArc {
  std::size_t source = 0;
  std::size_t target = 0;
  bool correct = false;
  std::string gold_relation;
};

struct ComparisonRow {
  HeadRef head;
  std::vector<GraphEdge> attention;  // off-diagonal weights above the threshold
  std::vector<PredictedArc> predicted;
};

struct ComparisonPayload {
  std::string instance_id;
  std::vector<std::string> tokens;
  std::vector<GoldArc> gold;
  double threshold = kDefaultEdgeThreshold;
  std::vector<ComparisonRow> rows;
};

inline std::vector<GoldArc> gold_arcs(const InstanceRecord& inst) {
  std::vector<GoldArc> out;
  const auto& dep = inst.dependency;
  for (std::size_t i = 0; i < dep.heads.size(); ++i)
    if (i != dep.root_index) out.push_back({i, dep.heads[i], dep.relations.at(i)});
  return out;
}

inline ComparisonRow comparison_row(const InstanceRecord& inst, const AttentionTensor& tensor,
                                    HeadRef ref, double threshold) {
  const auto m = tensor.head(ref.layer, ref.head);
  ComparisonRow row;
  row.head = ref;
  row.attention = threshold_edges(m, threshold);
  const auto scored = score_prediction(predict_heads(m), inst.dependency);
  const auto& pred = scored.prediction;
  for (std::size_t i = 0; i < pred.predicted_heads.size(); ++i) {
    if (i == inst.dependency.root_index) continue;
    row.predicted.push_back(
        {i, pred.predicted_heads[i], pred.correct[i], inst.dependency.relations[i]});
  }
  return row;
}

inline ComparisonPayload comparison_payload(const CorpusBundle& bundle,
                                            std::string_view instance_id,
                                            const std::vector<HeadRef>& heads,
                                            double threshold = kDefaultEdgeThreshold) {
  const auto& inst = bundle.instance(instance_id);
  for (const auto& ref : heads)
    if (ref.layer >= bundle.model.num_layers || ref.head >= bundle.model.num_heads)
      throw Error(ErrorCode::UnknownHead, "l" + std::to_string(ref.layer) + "h" +
                                              std::to_string(ref.head) + " is not in the model");
  const auto tensor = load_attention(bundle, inst);
  ComparisonPayload payload;
  payload.instance_id = inst.id;
  payload.tokens = inst.tokens;
  payload.gold = gold_arcs(inst);
  payload.threshold = threshold;
  for (const auto& ref : heads) payload.rows.push_back(comparison_row(inst, tensor, ref, threshold));
  return payload;
}

}  // namespace dodrio
