#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "dodrio/bundle.hpp"
#include "synthetic.hpp"

namespace fs = std::filesystem;
using namespace dodrio;
using dodrio::testing::TempDir;

namespace {

std::vector<char> file_bytes(const fs::path& p) { return detail::read_bytes(p); }

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  out << j.dump(2);
}

// Copies the sample bundle so a test can corrupt it.
fs::path copy_sample(const TempDir& dir) {
  fs::copy(DODRIO_SAMPLE_BUNDLE, dir.path() / "b", fs::copy_options::recursive);
  return dir.path() / "b";
}

}  // namespace

TEST(LoadBundle, SampleFixture) {
  const auto b = load_bundle(DODRIO_SAMPLE_BUNDLE);
  EXPECT_EQ(b.instances.size(), 3u);
  EXPECT_EQ(b.model.num_layers, 2u);
  EXPECT_EQ(b.model.num_heads, 2u);
  EXPECT_EQ(b.instance("s1").tokens.size(), 5u);
  EXPECT_TRUE(validate_bundle(b).empty());
}

TEST(LoadBundle, AcceptsManifestPath) {
  const auto b = load_bundle(fs::path(DODRIO_SAMPLE_BUNDLE) / "manifest.json");
  EXPECT_EQ(b.instances.size(), 3u);
}

TEST(LoadBundle, EmptyInstanceList) {
  TempDir dir("empty");
  write_json(dir.path() / "manifest.json",
             {{"model", {{"name", "m"}, {"num_layers", 1}, {"num_heads", 1}}},
              {"dataset", {{"name", "d"}, {"labels", nlohmann::json::array()}}},
              {"instances", nlohmann::json::array()}});
  const auto b = load_bundle(dir.path());
  EXPECT_TRUE(b.instances.empty());
  EXPECT_TRUE(validate_bundle(b).empty());
}

TEST(LoadBundle, MissingManifest) {
  TempDir dir("missing");
  try {
    load_bundle(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingManifest);
  }
}

TEST(LoadBundle, MalformedManifestNamesField) {
  TempDir dir("malformed");
  const auto root = copy_sample(dir);
  auto j = read_json(root / "manifest.json");
  j["instances"][1]["saliency"] = "oops";
  write_json(root / "manifest.json", j);
  try {
    load_bundle(root);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedManifest);
    EXPECT_NE(std::string(e.what()).find("s2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("saliency"), std::string::npos) << e.what();
  }

  std::ofstream(root / "manifest.json") << "{not json";
  EXPECT_THROW(load_bundle(root), Error);
}

TEST(LoadBundle, DanglingAttentionRef) {
  TempDir dir("dangling");
  const auto root = copy_sample(dir);
  fs::remove(root / "attention" / "s2.ddra");
  try {
    load_bundle(root);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DanglingAttentionRef);
  }
}

TEST(LoadBundle, NegativeIndexRejected) {
  TempDir dir("negidx");
  const auto root = copy_sample(dir);
  auto j = read_json(root / "manifest.json");
  j["instances"][0]["dependency"]["heads"][0] = -1;
  write_json(root / "manifest.json", j);
  EXPECT_THROW(load_bundle(root), Error);
}

TEST(LoadAttention, FixtureShape) {
  const auto b = load_bundle(DODRIO_SAMPLE_BUNDLE);
  const auto t = load_attention(b, "s1");
  EXPECT_EQ(t.layers(), 2u);
  EXPECT_EQ(t.heads(), 2u);
  EXPECT_EQ(t.tokens(), 5u);
}

TEST(LoadAttention, UnknownInstance) {
  const auto b = load_bundle(DODRIO_SAMPLE_BUNDLE);
  try {
    load_attention(b, "zz");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownInstance);
  }
}

TEST(LoadAttention, ValuesBitIdenticalToFile) {
  const auto b = load_bundle(DODRIO_SAMPLE_BUNDLE);
  const auto t = load_attention(b, "s2");
  const auto bytes = file_bytes(fs::path(DODRIO_SAMPLE_BUNDLE) / "attention" / "s2.ddra");
  ASSERT_EQ(bytes.size(), 20 + t.values().size() * 4);
  EXPECT_EQ(std::memcmp(bytes.data() + 20, t.values().data(), t.values().size() * 4), 0);
}

TEST(LoadAttention, HeaderShapeMismatch) {
  TempDir dir("shape");
  const auto root = copy_sample(dir);
  // s1 has 5 tokens in its payload; give the manifest 6.
  auto j = read_json(root / "manifest.json");
  auto& s1 = j["instances"][0];
  s1["tokens"].push_back("extra");
  s1["saliency"].push_back(0.1);
  s1["dependency"]["heads"].push_back(2);
  s1["dependency"]["relations"].push_back("punct");
  write_json(root / "manifest.json", j);

  const auto b = load_bundle(root);
  try {
    load_attention(b, "s1");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::HeaderShapeMismatch);
  }
  const auto report = validate_bundle(b);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_EQ(report[0].kind, "HEADER_SHAPE_MISMATCH");
  EXPECT_EQ(report[0].instance, "s1");
}

TEST(AttentionFile, HeaderLayout) {
  AttentionTensor t(1, 2, 3, 0.5f);
  const auto bytes = encode_attention(t);
  ASSERT_EQ(bytes.size(), 20u + 18u * 4u);
  EXPECT_EQ(std::string(bytes.data(), 4), "DDRA");
  const unsigned char expect[16] = {1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(std::memcmp(bytes.data() + 4, expect, 16), 0);
  // 0.5f = 0x3F000000, little-endian.
  const unsigned char half[4] = {0x00, 0x00, 0x00, 0x3F};
  EXPECT_EQ(std::memcmp(bytes.data() + 20, half, 4), 0);
}

TEST(AttentionFile, RejectsCorruptPayloads) {
  AttentionTensor t(1, 1, 2, 0.5f);
  auto bytes = encode_attention(t);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_attention(bad_magic, "x"), Error);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_attention(truncated, "x"), Error);
  auto reserved = bytes;
  reserved[16] = 1;
  EXPECT_THROW(decode_attention(reserved, "x"), Error);
  EXPECT_EQ(decode_attention(bytes, "x"), t);
}

TEST(RoundTrip, PayloadBytesAndManifest) {
  TempDir dir("roundtrip");
  const auto original = load_bundle(DODRIO_SAMPLE_BUNDLE);
  write_bundle(original, dir.path());
  for (const auto& inst : original.instances)
    EXPECT_EQ(file_bytes(fs::path(DODRIO_SAMPLE_BUNDLE) / inst.attention_file),
              file_bytes(dir.path() / inst.attention_file))
        << inst.id;
  EXPECT_EQ(read_json(fs::path(DODRIO_SAMPLE_BUNDLE) / "manifest.json"),
            read_json(dir.path() / "manifest.json"));
}

TEST(RoundTrip, ResidentTensorsEncodeBitExact) {
  // Property: for random bundles, write -> load -> load_attention returns the
  // exact float bits written, and a second write is byte-identical.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TempDir a("rt-a"), b("rt-b");
    const auto bundle = dodrio::testing::random_bundle(4, 2, 3, 2, 9, seed);
    write_bundle(bundle, a.path());
    const auto loaded = load_bundle(a.path());
    for (std::size_t k = 0; k < bundle.instances.size(); ++k)
      EXPECT_EQ(load_attention(loaded, loaded.instances[k]), *bundle.instances[k].resident);
    write_bundle(loaded, b.path());
    for (const auto& inst : loaded.instances)
      EXPECT_EQ(file_bytes(a.path() / inst.attention_file), file_bytes(b.path() / inst.attention_file));
    EXPECT_EQ(read_json(a.path() / "manifest.json"), read_json(b.path() / "manifest.json"));
  }
}

//----------------------------------------------------------------------------
// validate_bundle

TEST(Validate, RowNotStochasticNamesRow) {
  auto b = dodrio::testing::random_bundle(3, 2, 2, 4, 4, 11);
  ASSERT_TRUE(validate_bundle(b).empty());
  auto t = std::make_shared<AttentionTensor>(*b.instances[1].resident);
  auto row = t->head_values(1, 0).subspan(2 * 4, 4);
  const float scale = 0.8f;
  for (auto& v : row) v *= scale;
  b.instances[1].resident = t;

  const auto report = validate_bundle(b);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_EQ(report[0].kind, "ROW_NOT_STOCHASTIC");
  EXPECT_EQ(report[0].instance, "r1");
  EXPECT_EQ(report[0].layer, 1u);
  EXPECT_EQ(report[0].head, 0u);
  EXPECT_EQ(report[0].row, 2u);
}

TEST(Validate, LengthMismatch) {
  auto b = dodrio::testing::random_bundle(2, 1, 1, 5, 5, 3);
  b.instances[0].saliency.pop_back();
  const auto report = validate_bundle(b);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_EQ(report[0].kind, "LENGTH_MISMATCH");
  EXPECT_EQ(report[0].instance, "r0");
}

TEST(Validate, RowTolerance) {
  auto b = dodrio::testing::random_bundle(1, 1, 1, 3, 3, 5);
  auto t = std::make_shared<AttentionTensor>(1, 1, 3);
  t->set_head(0, 0, Matrix{{0.3995, 0.3, 0.3}, {0.3, 0.4, 0.3}, {0.3, 0.3, 0.402}});
  b.instances[0].resident = t;
  const auto report = validate_bundle(b);
  ASSERT_EQ(report.size(), 1u);  // -0.5e-3 passes, +2e-3 does not
  EXPECT_EQ(report[0].row, 2u);
}

TEST(Validate, DependencyAndValueChecks) {
  auto b = dodrio::testing::random_bundle(1, 1, 1, 4, 4, 8);
  auto& inst = b.instances[0];
  const std::size_t child = inst.dependency.root_index == 0 ? 1 : 0;
  inst.dependency.heads[child] = child;
  inst.dependency.relations[child] = "";
  inst.saliency[0] = -1.0;
  inst.label = "unknown";
  auto t = std::make_shared<AttentionTensor>(*inst.resident);
  t->head_values(0, 0)[0] = 1.5f;
  inst.resident = t;
  b.instances.push_back(b.instances[0]);  // duplicate id

  std::set<std::string> kinds;
  for (const auto& v : validate_bundle(b)) kinds.insert(v.kind);
  for (const char* k : {"INVALID_DEPENDENCY", "NEGATIVE_SALIENCY", "UNKNOWN_LABEL",
                        "VALUE_OUT_OF_RANGE", "ROW_NOT_STOCHASTIC", "DUPLICATE_ID"})
    EXPECT_TRUE(kinds.count(k)) << k;
}

TEST(Validate, DeterministicOrder) {
  auto b = dodrio::testing::random_bundle(5, 2, 2, 3, 6, 21);
  for (auto& inst : b.instances) inst.saliency.push_back(0.0);
  const auto r1 = validate_bundle(b);
  const auto r2 = validate_bundle(b);
  ASSERT_EQ(r1.size(), 5u);
  for (std::size_t k = 0; k < r1.size(); ++k) {
    EXPECT_EQ(r1[k].describe(), r2[k].describe());
    EXPECT_EQ(r1[k].instance, "r" + std::to_string(k));
  }
}

TEST(Validate, TensorInvariantsHoldOnValidBundles) {
  const auto b = load_bundle(DODRIO_SAMPLE_BUNDLE);
  for (const auto& inst : b.instances) {
    const auto t = load_attention(b, inst);
    for (std::size_t l = 0; l < t.layers(); ++l)
      for (std::size_t h = 0; h < t.heads(); ++h) {
        const auto m = t.head(l, h);
        for (std::size_t i = 0; i < m.rows(); ++i) {
          double sum = 0.0;
          for (float v : m.row(i)) {
            EXPECT_GE(v, 0.0f);
            EXPECT_LE(v, 1.0f);
            sum += v;
          }
          EXPECT_NEAR(sum, 1.0, kRowSumTolerance);
        }
      }
  }
}

//----------------------------------------------------------------------------
// aggregate_subword_attention

TEST(AggregateSubword, IdentityPartition) {
  const Matrix m{{0.2, 0.3, 0.5}, {0.1, 0.6, 0.3}, {0.4, 0.4, 0.2}};
  EXPECT_EQ(aggregate_subword_attention(m, {{0}, {1}, {2}}), m);
}

TEST(AggregateSubword, SumColumnsMeanRows) {
  const Matrix m{{0.2, 0.3, 0.5}, {0.1, 0.6, 0.3}, {0.4, 0.4, 0.2}};
  const auto w = aggregate_subword_attention(m, {{0}, {1, 2}});
  ASSERT_EQ(w.rows(), 2u);
  EXPECT_NEAR(w(0, 0), 0.2, 1e-15);
  EXPECT_NEAR(w(0, 1), 0.8, 1e-15);
  EXPECT_NEAR(w(1, 0), 0.25, 1e-15);
  EXPECT_NEAR(w(1, 1), 0.75, 1e-15);
}

TEST(AggregateSubword, SpansMustPartition) {
  const Matrix m = dodrio::testing::uniform_attention(3);
  for (const std::vector<WordSpan>& spans :
       {std::vector<WordSpan>{{0}, {2}, {1}}, std::vector<WordSpan>{{0, 1}},
        std::vector<WordSpan>{{0}, {}, {1, 2}}, std::vector<WordSpan>{{0, 1, 2, 3}}}) {
    try {
      aggregate_subword_attention(m, spans);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::SpansNotPartition);
    }
  }
}

TEST(AggregateSubword, RandomPartitionsPreserveMass) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = dodrio::testing::random_stochastic(10, rng);
    std::vector<WordSpan> spans;
    for (std::size_t k = 0; k < 10;) {
      const std::size_t len = std::min<std::size_t>(10 - k, dodrio::testing::uniform_index(rng, 1, 4));
      WordSpan s;
      for (std::size_t j = 0; j < len; ++j) s.push_back(k + j);
      spans.push_back(s);
      k += len;
    }
    const auto w = aggregate_subword_attention(m, spans);
    // Oracle: direct summation over the subword entries of each block.
    for (std::size_t a = 0; a < spans.size(); ++a) {
      double row = 0.0;
      for (std::size_t b = 0; b < spans.size(); ++b) {
        double block = 0.0;
        for (std::size_t r : spans[a])
          for (std::size_t c : spans[b]) block += m(r, c);
        EXPECT_NEAR(w(a, b), block / static_cast<double>(spans[a].size()), 1e-12);
        row += w(a, b);
      }
      EXPECT_NEAR(row, 1.0, 1e-6);
    }
  }
}

TEST(SubwordBundle, LoadAttentionAggregates) {
  TempDir dir("subword");
  CorpusBundle b;
  b.model = {"sub", 1, 1};
  b.dataset_name = "d";
  b.subword = true;
  InstanceRecord inst;
  inst.id = "w";
  inst.tokens = {"un", "happy"};
  inst.label = inst.prediction = "x";
  inst.saliency = {0.5, 1.0};
  inst.dependency = {{1, 1}, {"advmod", "root"}, 1};
  inst.attention_file = "w.ddra";
  inst.subword_spans = std::vector<WordSpan>{{0}, {1, 2}};
  auto t = std::make_shared<AttentionTensor>(1, 1, 3);
  t->set_head(0, 0, Matrix{{0.2, 0.3, 0.5}, {0.1, 0.6, 0.3}, {0.4, 0.4, 0.2}});
  inst.resident = t;
  b.instances.push_back(inst);
  write_bundle(b, dir.path());

  const auto loaded = load_bundle(dir.path());
  EXPECT_TRUE(loaded.subword);
  EXPECT_TRUE(validate_bundle(loaded).empty());
  const auto words = load_attention(loaded, "w");
  EXPECT_EQ(words.tokens(), 2u);
  EXPECT_NEAR(words.head(0, 0)(1, 0), 0.25, 1e-7);
  EXPECT_NEAR(words.head(0, 0)(1, 1), 0.75, 1e-7);
}
