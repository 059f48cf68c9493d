#pragma once

// Corpus bundle: manifest.json plus one binary attention payload per
// instance. Loading resolves every payload reference and verifies headers;
// the attention bodies themselves are read on demand by load_attention().

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dodrio/attention_file.hpp"
#include "dodrio/error.hpp"
#include "dodrio/matrix.hpp"

namespace dodrio {

inline constexpr double kRowSumTolerance = 1e-3;

struct ModelMeta {
  std::string name;
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;

  std::size_t head_count() const noexcept { return num_layers * num_heads; }
  friend bool operator==(const ModelMeta&, const ModelMeta&) = default;
};

struct DependencyParse {
  std::vector<std::size_t> heads;
  std::vector<std::string> relations;
  std::size_t root_index = 0;

  friend bool operator==(const DependencyParse&, const DependencyParse&) = default;
};

using WordSpan = std::vector<std::size_t>;

struct InstanceRecord {
  std::string id;
  std::vector<std::string> tokens;
  std::string label;
  std::string prediction;
  std::vector<double> saliency;
  DependencyParse dependency;
  std::optional<std::vector<double>> embedding;
  std::optional<std::array<double, 2>> coords;
  std::string attention_file;
  // Present only in subword bundles: maps each word to its subword positions.
  std::optional<std::vector<WordSpan>> subword_spans;

  // Header read at load time (absent for purely in-memory instances).
  std::optional<AttentionHeader> header;
  // In-memory tensor; takes precedence over attention_file when set.
  std::shared_ptr<const AttentionTensor> resident;

  std::size_t size() const noexcept { return tokens.size(); }

  std::string text() const {
    std::string out;
    for (const auto& t : tokens) {
      if (!out.empty()) out += ' ';
      out += t;
    }
    return out;
  }
};

struct CorpusBundle {
  ModelMeta model;
  std::string dataset_name;
  std::vector<std::string> label_set;
  std::vector<InstanceRecord> instances;
  std::filesystem::path root;
  bool subword = false;

  const InstanceRecord* find(std::string_view id) const {
    for (const auto& inst : instances)
      if (inst.id == id) return &inst;
    return nullptr;
  }

  const InstanceRecord& instance(std::string_view id) const {
    if (const auto* inst = find(id)) return *inst;
    throw Error(ErrorCode::UnknownInstance, "no instance with id '" + std::string(id) + "'");
  }
};

//----------------------------------------------------------------------------
// Subword aggregation

/// Collapses a subword attention matrix to word level: attention into a word
/// is the sum over its subword columns, attention out of a word the mean over
/// its subword rows. Both steps preserve row mass.
template <MatrixLike M>
Matrix aggregate_subword_attention(const M& subword, const std::vector<WordSpan>& spans) {
  require_square(subword, "aggregate_subword_attention");
  std::size_t expected = 0;
  for (const auto& span : spans) {
    if (span.empty())
      throw Error(ErrorCode::SpansNotPartition, "empty word span");
    for (std::size_t idx : span) {
      if (idx != expected)
        throw Error(ErrorCode::SpansNotPartition,
                    "span index " + std::to_string(idx) + " where " +
                        std::to_string(expected) + " expected");
      ++expected;
    }
  }
  if (expected != subword.rows())
    throw Error(ErrorCode::SpansNotPartition,
                "spans cover " + std::to_string(expected) + " of " +
                    std::to_string(subword.rows()) + " subwords");

  const std::size_t words = spans.size();
  Matrix out(words, words);
  for (std::size_t w = 0; w < words; ++w) {
    for (std::size_t v = 0; v < words; ++v) {
      double total = 0.0;
      for (std::size_t r : spans[w])
        for (std::size_t c : spans[v]) total += subword(r, c);
      out(w, v) = total / static_cast<double>(spans[w].size());
    }
  }
  return out;
}

//----------------------------------------------------------------------------
// Manifest parsing

namespace detail {

using nlohmann::json;

[[noreturn]] inline void malformed(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::MalformedManifest, where + ": " + what);
}

inline const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) malformed(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) malformed(where, std::string("missing field '") + key + "'");
  return *it;
}

inline std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) malformed(where, "expected a string");
  return v.get<std::string>();
}

inline std::size_t as_index(const json& v, const std::string& where) {
  if (!v.is_number_integer()) malformed(where, "expected a non-negative integer");
  const auto raw = v.get<std::int64_t>();
  if (raw < 0) malformed(where, "expected a non-negative integer");
  return static_cast<std::size_t>(raw);
}

inline double as_real(const json& v, const std::string& where) {
  if (!v.is_number()) malformed(where, "expected a number");
  return v.get<double>();
}

template <class F>
auto as_list(const json& v, const std::string& where, F&& each) {
  if (!v.is_array()) malformed(where, "expected an array");
  std::vector<decltype(each(v, where))> out;
  out.reserve(v.size());
  for (std::size_t k = 0; k < v.size(); ++k)
    out.push_back(each(v[k], where + "[" + std::to_string(k) + "]"));
  return out;
}

inline InstanceRecord parse_instance(const json& j, const std::string& where) {
  InstanceRecord inst;
  inst.id = as_string(require(j, "id", where), where + ".id");
  const std::string at = where + "(" + inst.id + ")";
  inst.tokens = as_list(require(j, "tokens", at), at + ".tokens", as_string);
  inst.label = as_string(require(j, "label", at), at + ".label");
  inst.prediction = as_string(require(j, "prediction", at), at + ".prediction");
  inst.saliency = as_list(require(j, "saliency", at), at + ".saliency", as_real);

  const auto& dep = require(j, "dependency", at);
  inst.dependency.heads = as_list(require(dep, "heads", at + ".dependency"),
                                  at + ".dependency.heads", as_index);
  inst.dependency.relations = as_list(require(dep, "relations", at + ".dependency"),
                                      at + ".dependency.relations", as_string);
  inst.dependency.root_index =
      as_index(require(dep, "root_index", at + ".dependency"), at + ".dependency.root_index");

  inst.attention_file = as_string(require(j, "attention_file", at), at + ".attention_file");
  if (auto it = j.find("embedding"); it != j.end() && !it->is_null())
    inst.embedding = as_list(*it, at + ".embedding", as_real);
  if (auto it = j.find("coords"); it != j.end() && !it->is_null()) {
    auto xy = as_list(*it, at + ".coords", as_real);
    if (xy.size() != 2) malformed(at + ".coords", "expected exactly 2 numbers");
    inst.coords = std::array<double, 2>{xy[0], xy[1]};
  }
  if (auto it = j.find("subword_spans"); it != j.end() && !it->is_null()) {
    inst.subword_spans = as_list(*it, at + ".subword_spans", [](const json& s, const std::string& w) {
      return as_list(s, w, as_index);
    });
  }
  return inst;
}

inline json instance_to_json(const InstanceRecord& inst) {
  json j;
  j["id"] = inst.id;
  j["tokens"] = inst.tokens;
  j["label"] = inst.label;
  j["prediction"] = inst.prediction;
  j["saliency"] = inst.saliency;
  j["dependency"] = {{"heads", inst.dependency.heads},
                     {"relations", inst.dependency.relations},
                     {"root_index", inst.dependency.root_index}};
  j["attention_file"] = inst.attention_file;
  if (inst.embedding) j["embedding"] = *inst.embedding;
  if (inst.coords) j["coords"] = {(*inst.coords)[0], (*inst.coords)[1]};
  if (inst.subword_spans) j["subword_spans"] = *inst.subword_spans;
  return j;
}

}  // namespace detail

inline CorpusBundle parse_manifest(const nlohmann::json& doc) {
  using namespace detail;
  CorpusBundle bundle;
  const auto& model = require(doc, "model", "manifest");
  bundle.model.name = as_string(require(model, "name", "model"), "model.name");
  bundle.model.num_layers = as_index(require(model, "num_layers", "model"), "model.num_layers");
  bundle.model.num_heads = as_index(require(model, "num_heads", "model"), "model.num_heads");
  if (bundle.model.num_layers == 0) malformed("model.num_layers", "must be at least 1");
  if (bundle.model.num_heads == 0) malformed("model.num_heads", "must be at least 1");

  const auto& dataset = require(doc, "dataset", "manifest");
  bundle.dataset_name = as_string(require(dataset, "name", "dataset"), "dataset.name");
  bundle.label_set = as_list(require(dataset, "labels", "dataset"), "dataset.labels", as_string);

  if (auto it = doc.find("attention_granularity"); it != doc.end()) {
    const auto g = as_string(*it, "attention_granularity");
    if (g == "subword")
      bundle.subword = true;
    else if (g != "word")
      malformed("attention_granularity", "expected 'word' or 'subword'");
  }

  const auto& instances = require(doc, "instances", "manifest");
  if (!instances.is_array()) malformed("instances", "expected an array");
  for (std::size_t k = 0; k < instances.size(); ++k) {
    auto inst = parse_instance(instances[k], "instances[" + std::to_string(k) + "]");
    if (bundle.subword && !inst.subword_spans)
      malformed("instances[" + std::to_string(k) + "]",
                "subword bundle instance lacks 'subword_spans'");
    bundle.instances.push_back(std::move(inst));
  }
  return bundle;
}

inline nlohmann::json manifest_json(const CorpusBundle& bundle) {
  nlohmann::json doc;
  doc["model"] = {{"name", bundle.model.name},
                  {"num_layers", bundle.model.num_layers},
                  {"num_heads", bundle.model.num_heads}};
  doc["dataset"] = {{"name", bundle.dataset_name}, {"labels", bundle.label_set}};
  if (bundle.subword) doc["attention_granularity"] = "subword";
  doc["instances"] = nlohmann::json::array();
  for (const auto& inst : bundle.instances) doc["instances"].push_back(detail::instance_to_json(inst));
  return doc;
}

//----------------------------------------------------------------------------
// Load / write

/// `path` may be the bundle directory or the manifest file itself.
inline CorpusBundle load_bundle(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const fs::path manifest = fs::is_directory(path) ? path / "manifest.json" : path;
  if (!fs::is_regular_file(manifest))
    throw Error(ErrorCode::MissingManifest, "no manifest at " + manifest.string());

  nlohmann::json doc;
  {
    std::ifstream in(manifest);
    if (!in) throw Error(ErrorCode::MissingManifest, "cannot open " + manifest.string());
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::MalformedManifest, e.what());
    }
  }

  CorpusBundle bundle = parse_manifest(doc);
  bundle.root = manifest.parent_path();
  for (auto& inst : bundle.instances) {
    const fs::path file = bundle.root / inst.attention_file;
    if (!fs::is_regular_file(file))
      throw Error(ErrorCode::DanglingAttentionRef,
                  "instance '" + inst.id + "' references missing " + file.string());
    inst.header = read_attention_header(file);
  }
  return bundle;
}

namespace detail {

inline std::size_t expected_payload_tokens(const InstanceRecord& inst) {
  if (!inst.subword_spans) return inst.tokens.size();
  std::size_t total = 0;
  for (const auto& s : *inst.subword_spans) total += s.size();
  return total;
}

inline void check_header(const CorpusBundle& bundle, const InstanceRecord& inst,
                         const AttentionHeader& h) {
  const std::size_t n = expected_payload_tokens(inst);
  if (h.layers != bundle.model.num_layers || h.heads != bundle.model.num_heads ||
      h.tokens != n) {
    std::ostringstream msg;
    msg << "instance '" << inst.id << "': header declares (" << h.layers << "," << h.heads
        << "," << h.tokens << "," << h.tokens << ") but bundle expects ("
        << bundle.model.num_layers << "," << bundle.model.num_heads << "," << n << "," << n
        << ")";
    throw Error(ErrorCode::HeaderShapeMismatch, msg.str());
  }
}

inline AttentionTensor read_raw_tensor(const CorpusBundle& bundle, const InstanceRecord& inst) {
  if (inst.resident) return *inst.resident;
  return read_attention_file(bundle.root / inst.attention_file);
}

}  // namespace detail

/// Word-level attention for one instance. Subword payloads are aggregated
/// through the instance's spans.
inline AttentionTensor load_attention(const CorpusBundle& bundle, const InstanceRecord& inst) {
  AttentionTensor raw = detail::read_raw_tensor(bundle, inst);
  detail::check_header(bundle, inst, raw.header());
  if (!inst.subword_spans) return raw;

  AttentionTensor words(raw.layers(), raw.heads(), inst.tokens.size());
  for (std::size_t l = 0; l < raw.layers(); ++l)
    for (std::size_t h = 0; h < raw.heads(); ++h)
      words.set_head(l, h, aggregate_subword_attention(raw.head(l, h), *inst.subword_spans));
  return words;
}

inline AttentionTensor load_attention(const CorpusBundle& bundle, std::string_view instance_id) {
  return load_attention(bundle, bundle.instance(instance_id));
}

/// Writes manifest.json and every payload under `dir`. Payloads backed by a
/// file are copied byte for byte; resident tensors are encoded.
inline void write_bundle(const CorpusBundle& bundle, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (const auto& inst : bundle.instances) {
    const fs::path dst = dir / inst.attention_file;
    fs::create_directories(dst.parent_path());
    if (inst.resident) {
      write_attention_file(dst, *inst.resident);
      continue;
    }
    const fs::path src = bundle.root / inst.attention_file;
    if (fs::exists(dst) && fs::equivalent(src, dst)) continue;
    fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write manifest in " + dir.string());
  out << manifest_json(bundle).dump(2) << '\n';
}

//----------------------------------------------------------------------------
// Validation

struct Violation {
  std::string kind;  // e.g. ROW_NOT_STOCHASTIC
  std::string instance;
  std::optional<std::size_t> layer;
  std::optional<std::size_t> head;
  std::optional<std::size_t> row;
  std::string message;

  std::string describe() const {
    std::ostringstream out;
    out << kind;
    if (!instance.empty()) out << " instance=" << instance;
    if (layer) out << " layer=" << *layer;
    if (head) out << " head=" << *head;
    if (row) out << " row=" << *row;
    if (!message.empty()) out << ": " << message;
    return out.str();
  }
};

using ValidationReport = std::vector<Violation>;

namespace detail {

inline void validate_record(const CorpusBundle& bundle, const InstanceRecord& inst,
                            ValidationReport& out) {
  const auto add = [&](std::string kind, std::string message) {
    out.push_back({std::move(kind), inst.id, {}, {}, {}, std::move(message)});
  };
  const std::size_t n = inst.tokens.size();
  if (n < 2) add("TOO_FEW_TOKENS", "instance has " + std::to_string(n) + " tokens, need 2");
  if (inst.saliency.size() != n)
    add("LENGTH_MISMATCH", "saliency has " + std::to_string(inst.saliency.size()) +
                               " entries for " + std::to_string(n) + " tokens");
  if (inst.dependency.heads.size() != n)
    add("LENGTH_MISMATCH", "dependency.heads has " +
                               std::to_string(inst.dependency.heads.size()) + " entries for " +
                               std::to_string(n) + " tokens");
  if (inst.dependency.relations.size() != n)
    add("LENGTH_MISMATCH", "dependency.relations has " +
                               std::to_string(inst.dependency.relations.size()) +
                               " entries for " + std::to_string(n) + " tokens");
  for (std::size_t i = 0; i < inst.saliency.size(); ++i)
    if (!std::isfinite(inst.saliency[i]) || inst.saliency[i] < 0.0)
      add("NEGATIVE_SALIENCY", "saliency[" + std::to_string(i) + "] is negative or non-finite");

  const auto& dep = inst.dependency;
  if (dep.root_index >= n) {
    add("INVALID_DEPENDENCY", "root_index out of range");
  } else if (dep.root_index < dep.heads.size() && dep.heads[dep.root_index] != dep.root_index) {
    add("INVALID_DEPENDENCY", "root token's head must be itself");
  }
  for (std::size_t i = 0; i < dep.heads.size(); ++i) {
    if (dep.heads[i] >= n)
      add("INVALID_DEPENDENCY", "heads[" + std::to_string(i) + "] out of range");
    else if (i != dep.root_index && dep.heads[i] == i)
      add("INVALID_DEPENDENCY", "non-root token " + std::to_string(i) + " heads itself");
  }
  for (std::size_t i = 0; i < dep.relations.size(); ++i)
    if (dep.relations[i].empty())
      add("INVALID_DEPENDENCY", "relations[" + std::to_string(i) + "] is empty");

  if (!bundle.label_set.empty()) {
    const auto known = [&](const std::string& l) {
      return std::find(bundle.label_set.begin(), bundle.label_set.end(), l) !=
             bundle.label_set.end();
    };
    if (!known(inst.label)) add("UNKNOWN_LABEL", "label '" + inst.label + "' not in label set");
    if (!known(inst.prediction))
      add("UNKNOWN_LABEL", "prediction '" + inst.prediction + "' not in label set");
  }
  if (inst.coords && !(std::isfinite((*inst.coords)[0]) && std::isfinite((*inst.coords)[1])))
    add("NON_FINITE_COORDS", "coords are not finite");
  if (inst.embedding)
    for (double v : *inst.embedding)
      if (!std::isfinite(v)) {
        add("NON_FINITE_EMBEDDING", "embedding has a non-finite component");
        break;
      }
}

inline void validate_tensor(const InstanceRecord& inst, const AttentionTensor& tensor,
                            ValidationReport& out) {
  const std::size_t n = tensor.tokens();
  for (std::size_t l = 0; l < tensor.layers(); ++l) {
    for (std::size_t h = 0; h < tensor.heads(); ++h) {
      const auto m = tensor.head(l, h);
      for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        bool in_range = true;
        for (float v : m.row(i)) {
          if (!(v >= 0.0f && v <= 1.0f)) in_range = false;
          sum += v;
        }
        if (!in_range)
          out.push_back({"VALUE_OUT_OF_RANGE", inst.id, l, h, i, "entry outside [0,1]"});
        if (!(std::abs(sum - 1.0) <= kRowSumTolerance)) {
          std::ostringstream msg;
          msg << "row sums to " << sum;
          out.push_back({"ROW_NOT_STOCHASTIC", inst.id, l, h, i, msg.str()});
        }
      }
    }
  }
}

}  // namespace detail

/// Lists every violation in instance order, then check order within an
/// instance. Attention bodies are read and checked row by row.
inline ValidationReport validate_bundle(const CorpusBundle& bundle) {
  ValidationReport report;
  if (bundle.model.num_layers == 0 || bundle.model.num_heads == 0)
    report.push_back({"INVALID_MODEL", "", {}, {}, {}, "num_layers and num_heads must be >= 1"});

  std::set<std::string> seen;
  for (const auto& inst : bundle.instances) {
    if (!seen.insert(inst.id).second)
      report.push_back({"DUPLICATE_ID", inst.id, {}, {}, {}, "instance id is not unique"});
    detail::validate_record(bundle, inst, report);

    if (inst.subword_spans) {
      std::size_t expected = 0;
      bool ok = inst.subword_spans->size() == inst.tokens.size();
      for (const auto& s : *inst.subword_spans)
        for (std::size_t idx : s) ok = ok && idx == expected++;
      for (const auto& s : *inst.subword_spans) ok = ok && !s.empty();
      if (!ok) {
        report.push_back({"SPANS_NOT_PARTITION", inst.id, {}, {}, {},
                          "subword_spans do not partition the payload in word order"});
        continue;
      }
    }

    AttentionTensor raw;
    try {
      raw = detail::read_raw_tensor(bundle, inst);
      detail::check_header(bundle, inst, raw.header());
    } catch (const Error& e) {
      const std::string kind = e.code() == ErrorCode::HeaderShapeMismatch
                                   ? "HEADER_SHAPE_MISMATCH"
                                   : "UNREADABLE_ATTENTION";
      report.push_back({kind, inst.id, {}, {}, {}, e.detail()});
      continue;
    }
    // Subword payloads are checked before aggregation; aggregation preserves
    // both value range and row mass.
    detail::validate_tensor(inst, raw, report);
  }
  return report;
}

}  // namespace dodrio
