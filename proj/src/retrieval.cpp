#include "rarforge/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "rarforge/text.hpp"

namespace rarforge {

HashedBowEmbedder::HashedBowEmbedder(int dimension) : dimension_(dimension) {
  if (dimension < 1) throw std::invalid_argument("embedder dimension must be positive");
}

std::vector<double> HashedBowEmbedder::embed(const std::string& text) const {
  std::vector<double> vec(static_cast<std::size_t>(dimension_), 0.0);
  for (const auto& token : tokenize(text)) {
    vec[fnv1a64(token) % static_cast<std::uint64_t>(dimension_)] += 1.0;
  }
  double norm_sq = 0.0;
  for (double v : vec) norm_sq += v * v;
  if (norm_sq > 0.0) {
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& v : vec) v *= inv;
  }
  return vec;
}

void RetrievalConfig::validate() const {
  if (top_k < 1) throw std::invalid_argument("top_k must be at least 1");
}

ProfileIndex::ProfileIndex(std::string user_id, std::vector<std::vector<double>> vectors,
                           std::vector<UserDocument> documents,
                           std::shared_ptr<const Embedder> embedder)
    : user_id_(std::move(user_id)),
      vectors_(std::move(vectors)),
      documents_(std::move(documents)),
      embedder_(std::move(embedder)) {
  if (vectors_.size() != documents_.size()) {
    throw std::invalid_argument("index row count must match document count");
  }
}

ProfileIndex build_index(const UserProfile& profile, std::shared_ptr<const Embedder> embedder) {
  if (profile.documents.empty()) throw std::invalid_argument("profile has no documents");
  std::vector<std::vector<double>> vectors;
  vectors.reserve(profile.documents.size());
  for (const auto& doc : profile.documents) {
    vectors.push_back(embedder->embed(doc.text));
  }
  return ProfileIndex(profile.user_id, std::move(vectors), profile.documents, std::move(embedder));
}

std::vector<SearchResult> search(const ProfileIndex& index, const std::string& query, int k) {
  if (query.empty()) throw std::invalid_argument("search query must be non-empty");
  if (k < 1) throw std::invalid_argument("k must be at least 1");

  const std::vector<double> q = index.embedder().embed(query);
  const auto& vectors = index.vectors();
  std::vector<double> scores(vectors.size(), 0.0);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    scores[i] = std::inner_product(q.begin(), q.end(), vectors[i].begin(), 0.0);
  }

  std::vector<std::size_t> order(vectors.size());
  std::iota(order.begin(), order.end(), 0);
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  // Score descending, profile position ascending on ties.
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });

  std::vector<SearchResult> results;
  results.reserve(take);
  for (std::size_t r = 0; r < take; ++r) {
    results.push_back({index.documents()[order[r]], scores[order[r]]});
  }
  return results;
}

std::string format_information(const std::vector<SearchResult>& results) {
  if (results.empty()) return "No relevant information found.";
  std::string out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (i > 0) out.push_back('\n');
    out.push_back('[');
    out += std::to_string(i + 1);
    out += "] ";
    out += results[i].document.text;
  }
  return out;
}

void dump_index(const ProfileIndex& index, std::ostream& out) {
  for (std::size_t i = 0; i < index.size(); ++i) {
    nlohmann::json line = {{"doc_id", index.documents()[i].id}, {"vector", index.vectors()[i]}};
    out << line.dump() << '\n';
  }
}

}  // namespace rarforge
