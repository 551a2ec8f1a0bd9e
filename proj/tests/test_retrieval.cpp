#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "rarforge/retrieval.hpp"
#include "rarforge/rng.hpp"

using namespace rarforge;

namespace {

// Maps a single-letter "text" to a fixed vector; used for the conceptual
// 2-d examples.
class FixedEmbedder final : public Embedder {
 public:
  explicit FixedEmbedder(std::map<std::string, std::vector<double>> table, int dim)
      : table_(std::move(table)), dim_(dim) {}
  int dimension() const override { return dim_; }
  std::vector<double> embed(const std::string& text) const override {
    const auto it = table_.find(text);
    if (it != table_.end()) return it->second;
    return std::vector<double>(static_cast<std::size_t>(dim_), 0.0);
  }

 private:
  std::map<std::string, std::vector<double>> table_;
  int dim_;
};

// Independent path: score every document, full stable sort, take k.
std::vector<std::pair<std::string, double>> brute_force_topk(const ProfileIndex& index,
                                                             const std::string& query, int k) {
  const auto q = index.embedder().embed(query);
  std::vector<std::pair<std::size_t, double>> scored;
  for (std::size_t i = 0; i < index.size(); ++i) {
    double dot = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) dot += q[d] * index.vectors()[i][d];
    scored.emplace_back(i, dot);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < std::min<std::size_t>(scored.size(), static_cast<std::size_t>(k)); ++i) {
    out.emplace_back(index.documents()[scored[i].first].id, scored[i].second);
  }
  return out;
}

UserProfile random_profile(std::mt19937_64& rng, std::size_t num_docs) {
  static const std::vector<std::string> vocab = {"apple", "pear",  "plum",  "fig",   "kiwi",
                                                 "mango", "peach", "grape", "lemon", "lime",
                                                 "melon", "berry"};
  UserProfile profile;
  profile.user_id = "u";
  for (std::size_t d = 0; d < num_docs; ++d) {
    std::string text;
    const std::size_t words = 1 + rng() % 6;
    for (std::size_t w = 0; w < words; ++w) {
      if (w) text.push_back(' ');
      text += vocab[uniform_index(rng, vocab.size())];
    }
    profile.documents.push_back({"d" + std::to_string(d), text});
  }
  return profile;
}

std::string random_query(std::mt19937_64& rng) {
  static const std::vector<std::string> vocab = {"apple", "pear", "plum", "fig", "kiwi", "mango"};
  std::string query = vocab[uniform_index(rng, vocab.size())];
  if (rng() % 2) query += " " + vocab[uniform_index(rng, vocab.size())];
  return query;
}

}  // namespace

TEST_CASE("hashed embedder has unit norm on token-bearing text, zero otherwise") {
  HashedBowEmbedder embedder(64);
  CHECK(embedder.dimension() == 64);

  const auto v = embedder.embed("some words here");
  REQUIRE(v.size() == 64);
  const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));

  const auto zero = embedder.embed("");
  CHECK(std::all_of(zero.begin(), zero.end(), [](double x) { return x == 0.0; }));

  CHECK(embedder.embed("repeatable text") == embedder.embed("repeatable text"));

  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const auto profile = random_profile(rng, 1);
    const auto vec = embedder.embed(profile.documents[0].text);
    const double n = std::sqrt(std::inner_product(vec.begin(), vec.end(), vec.begin(), 0.0));
    CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("build_index preserves order and determinism") {
  auto embedder = std::make_shared<HashedBowEmbedder>(32);
  UserProfile profile{"u", {{"d0", "apple pear"}, {"d1", "plum"}, {"d2", "fig kiwi"}}};
  const auto a = build_index(profile, embedder);
  const auto b = build_index(profile, embedder);
  REQUIRE(a.size() == 3);
  CHECK(a.vectors() == b.vectors());
  CHECK(a.documents()[0].id == "d0");

  CHECK_THROWS_AS(build_index(UserProfile{"u", {}}, embedder), std::invalid_argument);
}

TEST_CASE("empty-text documents embed to zero and rank below any positive match") {
  auto embedder = std::make_shared<HashedBowEmbedder>(32);
  UserProfile profile{"u", {{"d0", "!!!"}, {"d1", "apple"}}};
  const auto index = build_index(profile, embedder);
  const auto results = search(index, "apple", 1);
  REQUIRE(results.size() == 1);
  CHECK(results[0].document.id == "d1");
  CHECK(results[0].score == doctest::Approx(1.0));
}

TEST_CASE("conceptual 2-d example: exact match maximizes the dot product") {
  auto embedder = std::make_shared<FixedEmbedder>(
      std::map<std::string, std::vector<double>>{{"q", {1.0, 0.0}},
                                                 {"a", {1.0, 0.0}},
                                                 {"b", {0.0, 1.0}},
                                                 {"c", {0.5, 0.5}}},
      2);
  UserProfile profile{"u", {{"d0", "a"}, {"d1", "b"}, {"d2", "c"}}};
  const auto index = build_index(profile, embedder);

  const auto top1 = search(index, "q", 1);
  REQUIRE(top1.size() == 1);
  CHECK(top1[0].document.id == "d0");
  CHECK(top1[0].score == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("k larger than the corpus clamps") {
  auto embedder = std::make_shared<HashedBowEmbedder>(16);
  UserProfile profile{"u", {{"d0", "apple"}, {"d1", "pear"}}};
  const auto index = build_index(profile, embedder);
  CHECK(search(index, "apple", 5).size() == 2);
}

TEST_CASE("search rejects empty queries and bad k") {
  auto embedder = std::make_shared<HashedBowEmbedder>(16);
  UserProfile profile{"u", {{"d0", "apple"}}};
  const auto index = build_index(profile, embedder);
  CHECK_THROWS_AS(search(index, "", 1), std::invalid_argument);
  CHECK_THROWS_AS(search(index, "apple", 0), std::invalid_argument);
}

TEST_CASE("search agrees with the brute-force oracle on 1000 random corpora") {
  auto embedder = std::make_shared<HashedBowEmbedder>(32);
  std::mt19937_64 rng(20240902);
  for (int round = 0; round < 1000; ++round) {
    const auto profile = random_profile(rng, 1 + rng() % 40);
    const auto index = build_index(profile, embedder);
    const auto query = random_query(rng);
    for (int k : {1, 3, 5}) {
      const auto got = search(index, query, k);
      const auto expected = brute_force_topk(index, query, k);
      REQUIRE(got.size() == expected.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].document.id == expected[i].first);
        CHECK(got[i].score == expected[i].second);
      }
      // Non-increasing scores down the ranking.
      for (std::size_t i = 1; i < got.size(); ++i) CHECK(got[i - 1].score >= got[i].score);
    }
  }
}

TEST_CASE("adding a document never lowers the top score") {
  auto embedder = std::make_shared<HashedBowEmbedder>(32);
  std::mt19937_64 rng(5150);
  for (int round = 0; round < 300; ++round) {
    auto profile = random_profile(rng, 1 + rng() % 10);
    const auto query = random_query(rng);
    const double before = search(build_index(profile, embedder), query, 1)[0].score;
    profile.documents.push_back({"extra", random_profile(rng, 1).documents[0].text});
    const double after = search(build_index(profile, embedder), query, 1)[0].score;
    CHECK(after >= before);
  }
}

TEST_CASE("format_information layout") {
  CHECK(format_information({}) == "No relevant information found.");
  const std::vector<SearchResult> results = {{{"d0", "first doc"}, 0.9},
                                             {{"d1", "second doc"}, 0.5}};
  CHECK(format_information(results) == "[1] first doc\n[2] second doc");
}

TEST_CASE("format_information follows search order on a random corpus") {
  auto embedder = std::make_shared<HashedBowEmbedder>(32);
  std::mt19937_64 rng(64);
  const auto profile = random_profile(rng, 12);
  const auto index = build_index(profile, embedder);
  const auto results = search(index, "apple pear", 3);
  const std::string formatted = format_information(results);
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const std::string entry = "[" + std::to_string(i + 1) + "] " + results[i].document.text;
    const auto at = formatted.find(entry, cursor);
    REQUIRE(at != std::string::npos);
    cursor = at + entry.size();
  }
}

TEST_CASE("index dump emits one json line per document") {
  auto embedder = std::make_shared<HashedBowEmbedder>(8);
  UserProfile profile{"u", {{"d0", "apple"}, {"d1", "pear fig"}}};
  const auto index = build_index(profile, embedder);
  std::ostringstream out;
  dump_index(index, out);
  std::istringstream in(out.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto doc = nlohmann::json::parse(line);
    CHECK(doc.contains("doc_id"));
    CHECK(doc.at("vector").size() == 8);
    ++lines;
  }
  CHECK(lines == 2);
}
