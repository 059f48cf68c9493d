#pragma once

// Per-head scores behind the overview grid and their color/size encoding.
//
//   semantic   m = cos(column mass of A, saliency)   averaged over instances
//   syntactic  n = max over relations of the relation accuracy table
//   importance c = max entry of A                    averaged over instances

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <ranges>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dodrio/bundle.hpp"
#include "dodrio/dependency.hpp"
#include "dodrio/matrix.hpp"

namespace dodrio {

/// Attention received by each token: column sums of a row-stochastic map.
template <MatrixLike M>
std::vector<double> attention_mass_vector(const M& attention) {
  require_square(attention, "attention_mass_vector");
  const std::size_t n = attention.rows();
  std::vector<double> mass(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) mass[j] += attention(i, j);
  return mass;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::LengthMismatch, "cosine of vectors with different lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

inline bool is_degenerate_saliency(std::span<const double> saliency) {
  return std::all_of(saliency.begin(), saliency.end(), [](double s) { return s == 0.0; });
}

template <MatrixLike M>
double semantic_score(const M& attention, std::span<const double> saliency) {
  if (saliency.size() != attention.rows())
    throw Error(ErrorCode::LengthMismatch, "saliency length does not match attention size");
  if (is_degenerate_saliency(saliency))
    throw Error(ErrorCode::DegenerateSaliency, "saliency vector has zero norm");
  const auto mass = attention_mass_vector(attention);
  return cosine_similarity(mass, saliency);
}

template <MatrixLike M>
double max_attention(const M& attention) {
  double best = 0.0;
  for (std::size_t i = 0; i < attention.rows(); ++i)
    for (std::size_t j = 0; j < attention.cols(); ++j) best = std::max(best, attention(i, j));
  return best;
}

/// Mean over instances of each instance's largest attention weight.
template <std::ranges::input_range R>
  requires MatrixLike<std::ranges::range_value_t<R>>
double importance_score(const R& maps) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& m : maps) {
    total += max_attention(m);
    ++count;
  }
  if (count == 0) throw Error(ErrorCode::EmptyCorpus, "importance score of an empty corpus");
  return total / static_cast<double>(count);
}

struct CorpusSemantic {
  double score = 0.0;
  std::vector<std::string> skipped;  // instances with all-zero saliency
};

inline CorpusSemantic corpus_semantic_detail(const CorpusBundle& bundle,
                                             const std::vector<AttentionTensor>& tensors,
                                             std::size_t layer, std::size_t head) {
  if (bundle.instances.empty()) throw Error(ErrorCode::EmptyCorpus, "bundle has no instances");
  CorpusSemantic out;
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < bundle.instances.size(); ++k) {
    const auto& inst = bundle.instances[k];
    if (is_degenerate_saliency(inst.saliency)) {
      out.skipped.push_back(inst.id);
      continue;
    }
    total += semantic_score(tensors[k].head(layer, head), inst.saliency);
    ++used;
  }
  if (used > 0) out.score = total / static_cast<double>(used);
  return out;
}

/// Unweighted mean of per-instance semantic scores. Instances without any
/// saliency are skipped; if none remain the corpus is degenerate.
inline double corpus_semantic_score(const CorpusBundle& bundle,
                                    const std::vector<AttentionTensor>& tensors,
                                    std::size_t layer, std::size_t head) {
  auto detail = corpus_semantic_detail(bundle, tensors, layer, head);
  if (detail.skipped.size() == bundle.instances.size())
    throw Error(ErrorCode::DegenerateSaliency, "every instance has all-zero saliency");
  return detail.score;
}

inline double corpus_semantic_score(const CorpusBundle& bundle, std::size_t layer,
                                    std::size_t head) {
  return corpus_semantic_score(bundle, load_all_attention(bundle), layer, head);
}

//----------------------------------------------------------------------------
// Score cards

struct HeadScoreCard {
  std::size_t layer = 0;
  std::size_t head = 0;
  double semantic = 0.0;
  double syntactic = 0.0;
  double importance = 0.0;
  std::map<std::string, double> relation_accuracy;
  std::optional<std::pair<std::string, double>> best_relation;
};

struct HeadScores {
  std::vector<HeadScoreCard> cards;  // layer-major
  RelationAccuracyTable relations;
  std::vector<std::string> skipped_instances;
};

inline HeadScores score_all_heads(const CorpusBundle& bundle,
                                  const std::vector<AttentionTensor>& tensors) {
  if (bundle.instances.empty()) throw Error(ErrorCode::EmptyCorpus, "bundle has no instances");
  HeadScores out;
  out.relations = relation_table(bundle, tensors);
  for (const auto& inst : bundle.instances)
    if (is_degenerate_saliency(inst.saliency)) out.skipped_instances.push_back(inst.id);

  const std::size_t L = bundle.model.num_layers;
  const std::size_t H = bundle.model.num_heads;
  out.cards.reserve(L * H);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t h = 0; h < H; ++h) {
      HeadScoreCard card;
      card.layer = l;
      card.head = h;
      card.semantic = corpus_semantic_detail(bundle, tensors, l, h).score;
      card.importance = importance_score(
          tensors | std::views::transform([&](const AttentionTensor& t) { return t.head(l, h); }));
      for (const auto& [label, acc] : out.relations.row(l, h))
        card.relation_accuracy[label] = acc.accuracy;
      card.best_relation = out.relations.best(l, h);
      card.syntactic = card.best_relation ? card.best_relation->second : 0.0;
      out.cards.push_back(std::move(card));
    }
  }
  return out;
}

inline HeadScores score_all_heads(const CorpusBundle& bundle) {
  return score_all_heads(bundle, load_all_attention(bundle));
}

//----------------------------------------------------------------------------
// Color

struct ScaleConfig {
  double hue_blue = 250.0;  // fully syntactic, m - n = -1
  double hue_red = 10.0;    // fully semantic, m - n = +1
  double chroma = 65.0;
  double luminance_dark = 35.0;   // max(m, n) = 1
  double luminance_light = 88.0;  // max(m, n) = 0
  double radius_min = 0.35;
  double radius_max = 1.0;

  // Hue interpolation runs upward from blue; red is taken one turn later if
  // needed so the span passes through purple rather than green.
  double hue_red_unwrapped() const { return hue_red < hue_blue ? hue_red + 360.0 : hue_red; }
};

inline ScaleConfig parse_scale_config(const nlohmann::json& j) {
  ScaleConfig s;
  const auto read = [&](const char* key, double& field) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_number())
        throw Error(ErrorCode::MalformedManifest, std::string("scales.") + key + " must be a number");
      field = it->get<double>();
    }
  };
  if (!j.is_object()) throw Error(ErrorCode::MalformedManifest, "scales document must be an object");
  read("hue_blue", s.hue_blue);
  read("hue_red", s.hue_red);
  read("chroma", s.chroma);
  read("luminance_dark", s.luminance_dark);
  read("luminance_light", s.luminance_light);
  read("radius_min", s.radius_min);
  read("radius_max", s.radius_max);
  return s;
}

inline ScaleConfig load_scale_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open scales file " + path.string());
  try {
    return parse_scale_config(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedManifest, std::string("scales file: ") + e.what());
  }
}

/// Defaults unless DODRIO_SCALES names a scales.json.
inline ScaleConfig scale_config_from_env() {
  const char* path = std::getenv("DODRIO_SCALES");
  if (path == nullptr || *path == '\0') return {};
  return load_scale_config(path);
}

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline std::string to_hex(Rgb c) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out = "#";
  for (std::uint8_t v : {c.r, c.g, c.b}) {
    out += digits[v >> 4];
    out += digits[v & 0xF];
  }
  return out;
}

/// HCL as polar CIE L*u*v* (D65 white) to 8-bit sRGB. Out-of-gamut colors are
/// clamped per channel after conversion.
inline Rgb hcl_to_srgb(double hue, double chroma, double luminance) {
  constexpr double xn = 0.95047, yn = 1.0, zn = 1.08883;
  constexpr double un = 4.0 * xn / (xn + 15.0 * yn + 3.0 * zn);
  constexpr double vn = 9.0 * yn / (xn + 15.0 * yn + 3.0 * zn);
  constexpr double kappa = 24389.0 / 27.0;

  double x = 0.0, y = 0.0, z = 0.0;
  if (luminance > 0.0) {
    const double rad = hue * std::numbers::pi / 180.0;
    const double u = chroma * std::cos(rad);
    const double v = chroma * std::sin(rad);
    y = luminance > 8.0 ? std::pow((luminance + 16.0) / 116.0, 3.0) : luminance / kappa;
    y *= yn;
    const double up = u / (13.0 * luminance) + un;
    const double vp = v / (13.0 * luminance) + vn;
    x = y * 9.0 * up / (4.0 * vp);
    z = y * (12.0 - 3.0 * up - 20.0 * vp) / (4.0 * vp);
  }

  const double lin[3] = {
      3.2404542 * x - 1.5371385 * y - 0.4985314 * z,
      -0.9692660 * x + 1.8760108 * y + 0.0415560 * z,
      0.0556434 * x - 0.2040259 * y + 1.0572252 * z,
  };
  std::uint8_t out[3];
  for (int c = 0; c < 3; ++c) {
    const double l = std::clamp(lin[c], 0.0, 1.0);
    const double s = l <= 0.0031308 ? 12.92 * l : 1.055 * std::pow(l, 1.0 / 2.4) - 0.055;
    out[c] = static_cast<std::uint8_t>(std::lround(std::clamp(s, 0.0, 1.0) * 255.0));
  }
  return {out[0], out[1], out[2]};
}

struct ColorEncoding {
  double hue = 0.0;  // within [hue_blue, hue_red_unwrapped]
  double chroma = 0.0;
  double luminance = 0.0;
  double radius = 0.0;
  Rgb rgb;
};

/// hue linear in (m - n) over [-1, 1]; luminance falls linearly as max(m, n)
/// rises over [0, 1]; radius linear in c over [0, 1].
inline ColorEncoding encode_color(const HeadScoreCard& card, const ScaleConfig& scale = {}) {
  const double diff = std::clamp(card.semantic - card.syntactic, -1.0, 1.0);
  const double align = std::clamp(std::max(card.semantic, card.syntactic), 0.0, 1.0);
  const double c = std::clamp(card.importance, 0.0, 1.0);

  ColorEncoding enc;
  const double t = 0.5 * (diff + 1.0);
  enc.hue = scale.hue_blue + t * (scale.hue_red_unwrapped() - scale.hue_blue);
  enc.chroma = scale.chroma;
  enc.luminance =
      scale.luminance_light - align * (scale.luminance_light - scale.luminance_dark);
  enc.radius = scale.radius_min + c * (scale.radius_max - scale.radius_min);
  enc.rgb = hcl_to_srgb(enc.hue, enc.chroma, enc.luminance);
  return enc;
}

}  // namespace dodrio
