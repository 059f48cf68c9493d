// Writes the small sample bundle shipped under data/sample_bundle: three
// sentences, a 2-layer x 2-head model with hand-built attention patterns.
//
//   l0h0  attends to each token's gold syntactic head
//   l0h1  attends to the next token
//   l1h0  follows saliency; "it" attends to "film" in the coming-of-age review
//   l1h1  finds the head of nominal dependents (obj, nmod, obl), else the
//         previous token

#include <iostream>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dodrio/bundle.hpp"

namespace {

using dodrio::Matrix;

struct Sentence {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<std::size_t> heads;
  std::vector<std::string> relations;
  std::size_t root;
  std::vector<double> saliency;
  std::string label, prediction;
};

Matrix mix(const std::vector<std::size_t>& target, double peak) {
  const std::size_t n = target.size();
  const double rest = (1.0 - peak) / static_cast<double>(n);
  Matrix m(n, n, rest);
  for (std::size_t i = 0; i < n; ++i) m(i, target[i]) += peak;
  return m;
}

Matrix saliency_head(const Sentence& s) {
  const std::size_t n = s.tokens.size();
  double total = 0.0;
  for (double v : s.saliency) total += v;
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m(i, j) = 0.7 * s.saliency[j] / total + 0.3 / static_cast<double>(n);
  return m;
}

dodrio::InstanceRecord build(const Sentence& s, std::mt19937_64& rng) {
  const std::size_t n = s.tokens.size();
  dodrio::InstanceRecord inst;
  inst.id = s.id;
  inst.tokens = s.tokens;
  inst.label = s.label;
  inst.prediction = s.prediction;
  inst.saliency = s.saliency;
  inst.dependency = {s.heads, s.relations, s.root};
  inst.attention_file = "attention/" + s.id + ".ddra";

  std::vector<std::size_t> next(n), prev(n), nominal(n);
  for (std::size_t i = 0; i < n; ++i) {
    next[i] = i + 1 < n ? i + 1 : i - 1;
    prev[i] = i > 0 ? i - 1 : n - 1;
  }
  static const std::set<std::string> nominals = {"obj", "nmod", "obl"};
  for (std::size_t i = 0; i < n; ++i)
    nominal[i] = nominals.count(s.relations[i]) ? s.heads[i] : prev[i];

  auto tensor = std::make_shared<dodrio::AttentionTensor>(2, 2, n);
  tensor->set_head(0, 0, mix(s.heads, 0.7));
  tensor->set_head(0, 1, mix(next, 0.6));
  Matrix sem = saliency_head(s);
  if (s.id == "s3") {
    // "it" (15) -> "film" (2)
    for (std::size_t j = 0; j < n; ++j) sem(15, j) *= 0.45;
    sem(15, 2) += 0.55;
  }
  tensor->set_head(1, 0, sem);
  tensor->set_head(1, 1, mix(nominal, 0.6));
  inst.resident = std::move(tensor);

  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<double> emb(8);
  for (std::size_t k = 0; k < emb.size(); ++k)
    emb[k] = (s.label == "positive" ? 0.5 : -0.5) * static_cast<double>(k % 3) + noise(rng);
  inst.embedding = emb;
  return inst;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_sample_bundle <output-dir>\n";
    return 2;
  }

  const std::vector<Sentence> sentences = {
      {"s1",
       {"the", "critic", "praised", "the", "film"},
       {1, 2, 2, 4, 2},
       {"det", "nsubj", "root", "det", "obj"},
       2,
       {0.05, 0.40, 1.00, 0.05, 0.70},
       "positive",
       "positive"},
      {"s2",
       {"a", "boy", "read", "dull", "books", "in", "school"},
       {1, 2, 2, 4, 2, 6, 2},
       {"det", "nsubj", "root", "amod", "obj", "case", "obl"},
       2,
       {0.02, 0.30, 0.45, 1.00, 0.50, 0.05, 0.25},
       "negative",
       "positive"},
      {"s3",
       {"A", "coming-of-age", "film", "that", "avoids", "the", "cartoonish", "clichés",
        "and", "sneering", "humor", "of", "the", "genre", "as", "it", "provides", "a",
        "fresh", "view", "of", "an", "old", "type"},
       {2, 2, 2, 4, 2, 7, 7, 4, 10, 10, 7, 13, 13, 10, 16, 16, 4, 19, 19, 16, 23, 23, 23, 19},
       {"det", "amod", "root", "nsubj", "acl:relcl", "det", "amod", "obj", "cc", "amod",
        "conj", "case", "det", "nmod", "mark", "nsubj", "advcl", "det", "amod", "obj",
        "case", "det", "amod", "nmod"},
       2,
       {0.03, 0.55, 0.60, 0.04, 0.70, 0.02, 0.65, 0.50, 0.03, 0.75, 0.45, 0.02,
        0.02, 0.35, 0.04, 0.20, 0.30, 0.02, 1.00, 0.40, 0.02, 0.02, 0.25, 0.20},
       "positive",
       "positive"},
  };

  dodrio::CorpusBundle bundle;
  bundle.model = {"sample-2x2", 2, 2};
  bundle.dataset_name = "sample";
  bundle.label_set = {"negative", "positive"};
  std::mt19937_64 rng(7);
  for (const auto& s : sentences) bundle.instances.push_back(build(s, rng));

  dodrio::write_bundle(bundle, argv[1]);
  std::cout << "wrote " << bundle.instances.size() << " instances to " << argv[1] << "\n";
  return 0;
}
